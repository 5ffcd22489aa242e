#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mpmab {

// Philox4x32-10 counter-based block generator (Salmon et al., SC'11).
// A block is a pure function of (counter, key), which is what makes
// per-player streams and per-(step, arm) reward draws independent of
// consumption order elsewhere in the program.
struct Philox4x32 {
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
                   static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
                   static_cast<std::uint32_t>(p0)};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

    // Two 64-bit words from a (seed, stream, index) triple.
    static std::array<std::uint64_t, 2> words(std::uint64_t seed, std::uint64_t stream,
                                              std::uint64_t index) {
        const auto b = block({static_cast<std::uint32_t>(index),
                              static_cast<std::uint32_t>(index >> 32),
                              static_cast<std::uint32_t>(stream),
                              static_cast<std::uint32_t>(stream >> 32)},
                             {static_cast<std::uint32_t>(seed),
                              static_cast<std::uint32_t>(seed >> 32)});
        return {(static_cast<std::uint64_t>(b[0]) << 32) | b[1],
                (static_cast<std::uint64_t>(b[2]) << 32) | b[3]};
    }
};

inline double u64_to_double(std::uint64_t x) {  // [0, 1)
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

inline double u64_to_open_double(std::uint64_t x) {  // (0, 1]
    return static_cast<double>((x >> 11) + 1) * 0x1.0p-53;
}

// Sequential stream of draws backed by Philox. Streams with distinct ids under
// the same seed never overlap, so adding or removing a player leaves every
// other player's draws untouched.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_(stream_id) {}

    std::uint64_t next_u64() {
        if (buffered_) {
            buffered_ = false;
            return buffer_;
        }
        const auto w = Philox4x32::words(seed_, stream_, index_++);
        buffer_ = w[1];
        buffered_ = true;
        return w[0];
    }

    double next_double() { return u64_to_double(next_u64()); }

    bool bernoulli(double p) { return next_double() < p; }

    // Unbiased integer in [0, n) via Lemire's multiply-shift rejection.
    int uniform_int(int n) {
        const auto un = static_cast<std::uint64_t>(n);
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * un;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < un) {
            const std::uint64_t threshold = (0 - un) % un;
            while (lo < threshold) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * un;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<int>(m >> 64);
    }

    // Box-Muller; consumes exactly two words per draw so transcripts replay.
    double normal() {
        const double u1 = u64_to_open_double(next_u64());
        const double u2 = u64_to_double(next_u64());
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t index_ = 0;
    std::uint64_t buffer_ = 0;
    bool buffered_ = false;
};

// Reserved stream ids. Stream 0 feeds the reward environment; players use
// their own 1-based ids. Generators that are not part of a run live far away.
inline constexpr std::uint64_t kEnvStream = 0;
inline constexpr std::uint64_t kScheduleGenStream = 0x8000000000000000ull;

}  // namespace mpmab
