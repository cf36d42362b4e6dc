#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace microsim
{

/// SplitMix64 output function (Steele, Lea & Flood). Used only to derive
/// well-separated seeds from (parent seed, index) pairs.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Child seed number `index` of `parent`.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept
{
    return mix64(parent ^ mix64(index + 1));
}

/// Seed of one run of an ensemble.
constexpr std::uint64_t run_seed(std::uint64_t master, std::uint64_t run) noexcept
{
    return derive_seed(master, run);
}

/// Seed of one zone's stream inside a run.
constexpr std::uint64_t zone_seed(std::uint64_t run, std::uint64_t zone) noexcept
{
    return derive_seed(run, zone);
}

namespace detail
{

/// Layer boundaries of a 256-layer ziggurat over exp(-x) (Marsaglia & Tsang,
/// 2000). x[0] is the width of the base layer including its tail.
struct ExpZiggurat
{
    static constexpr double r = 7.69711747013104972;
    static constexpr double v = 0.0039496598225815571993;
    std::array<double, 257> x{};
    std::array<double, 257> f{};

    ExpZiggurat()
    {
        x[0] = v / std::exp(-r);
        x[1] = r;
        for (std::size_t i = 1; i < 255; ++i)
            x[i + 1] = -std::log(v / x[i] + std::exp(-x[i]));
        x[256] = 0.0;
        for (std::size_t i = 0; i < 257; ++i)
            f[i] = std::exp(-x[i]);
    }
};

inline const ExpZiggurat kExpZiggurat;

}  // namespace detail

/// Seeded stream: SplitMix64 (a Weyl sequence passed through mix64). The
/// generator is defined entirely here, so a seed gives the same sequence on
/// every platform and compiler. Uniforms take the top 53 bits of each output.
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next() noexcept
    {
        const auto x = state_;
        state_ += 0x9E3779B97F4A7C15ull;
        return mix64(x);
    }

    /// Uniform double in [0, 1).
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Exp(1) variate by the ziggurat method.
    double exponential()
    {
        const auto& zig = detail::kExpZiggurat;
        for (;;)
        {
            const std::uint64_t bits = next();
            const std::size_t i = bits & 0xFF;
            const double z = static_cast<double>(bits >> 11) * 0x1.0p-53 * zig.x[i];
            if (z < zig.x[i + 1])
                return z;
            if (i == 0)
                return detail::ExpZiggurat::r - std::log(1.0 - uniform());  // memoryless tail
            if (zig.f[i + 1] + uniform() * (zig.f[i] - zig.f[i + 1]) < std::exp(-z))
                return z;
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

}  // namespace microsim
