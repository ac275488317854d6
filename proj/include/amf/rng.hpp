#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace amf {

/// Philox4x32-10 counter-based generator. Stateless: the output is a
/// pure function of (counter, key), which is what makes per-particle streams replayable.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter generate(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += 0x9E3779B9u;
                key[1] += 0xBB67AE85u;
            }
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }
};

/// One draw of a particle stream: a standard normal and an independent uniform on [0, 1).
struct StreamDraw {
    double normal;
    double uniform;
};

/// Reserved step tag for draws that initialise a particle (outside any time step).
inline constexpr std::uint64_t kInitialDrawTag = ~std::uint64_t{0};

/// Deterministic draw keyed by (seed, stream, step). Box-Muller on two 32-bit uniforms for the
/// normal, 53 bits for the auxiliary uniform.
inline StreamDraw stream_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t step) noexcept {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                                  static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    const auto w = Philox4x32::generate(ctr, key);
    constexpr double two_m32 = 1.0 / 4294967296.0;
    const double u1 = (static_cast<double>(w[0]) + 0.5) * two_m32;  // (0, 1)
    const double u2 = static_cast<double>(w[1]) * two_m32;
    const std::uint64_t bits = (std::uint64_t{w[2]} << 32 | w[3]) >> 11;
    return {std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2),
            static_cast<double>(bits) * 0x1.0p-53};
}

/// SplitMix64 finaliser, used to derive independent seeds from (seed, tag) tuples.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace amf
