#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace sccsurv {

// Philox4x32-10 counter-based generator. The key is the 64-bit seed and the
// upper half of the 128-bit counter selects an independent substream, so a
// task's draws depend only on (seed, stream) and never on scheduling.
class Philox {
public:
    using result_type = std::uint32_t;
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    Philox(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(stream) {}

    static Block block(Block ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += 0x9E3779B9u;
                key[1] += 0xBB67AE85u;
            }
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        }
        return ctr;
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (used_ == 4) refill();
        return buffer_[used_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t hi = (*this)();
        return (hi << 32) | (*this)();
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1), safe for logarithms.
    double uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double exponential() { return -std::log(uniform_open()); }

    // Unbiased integer in [0, n) for n >= 1 (Lemire's multiply-and-reject).
    std::uint64_t below(std::uint64_t n) {
        __uint128_t m = static_cast<__uint128_t>(next_u64()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<__uint128_t>(next_u64()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    void refill() {
        buffer_ = block({static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                        key_);
        ++counter_;
        used_ = 0;
    }

    Key key_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    Block buffer_{};
    int used_ = 4;
};

// Substream identifiers: an 8-bit purpose tag above a 56-bit task index.
enum class StreamTag : std::uint64_t { bootstrap = 1, permutation = 2, simulation = 3 };

inline std::uint64_t stream_id(StreamTag tag, std::uint64_t index) {
    return (static_cast<std::uint64_t>(tag) << 56) | (index & ((std::uint64_t{1} << 56) - 1));
}

}  // namespace sccsurv
