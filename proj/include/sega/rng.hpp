#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "sega/latent.hpp"

namespace sega {

/// xoshiro256** seeded through splitmix64 (Blackman & Vigna constants).
/// Streams depend only on the seed, so runs are reproducible across
/// platforms. Normals come from the Box-Muller transform, consuming two
/// uniforms per pair and caching the second value.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept;
    double normal() noexcept;

    /// Stateless splitmix64 mix, used to derive per-particle seeds.
    static std::uint64_t splitmix64(std::uint64_t x) noexcept;

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> s_{};
    std::optional<double> cached_normal_;
};

/// i.i.d. standard normal latent of the given shape.
Latent gaussian_sample(Rng& rng, const Shape& shape);

}  // namespace sega
