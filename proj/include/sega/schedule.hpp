#pragma once

#include <cstddef>
#include <vector>

namespace sega {

/// Variance-preserving noise schedule indexed by diffusion time t = 0..T,
/// with z_t = alpha_t x + omega_t eps and alpha_t^2 + omega_t^2 = 1.
/// t = 0 is the data end, t = T the noise end.
class Schedule {
public:
    /// Signal level kept at t = T by the cosine schedule.
    static constexpr double min_alpha = 1e-3;

    /// alpha_t = cos(theta t / T), omega_t = sin(theta t / T) with
    /// theta = acos(min_alpha), i.e. the quarter cosine stopped just short of
    /// pure noise.
    static Schedule cosine(std::size_t steps);

    /// Validates the variance-preserving identity (to 1e-12), alpha in (0,1]
    /// and non-increasing alpha. Both vectors hold T + 1 entries.
    Schedule(std::vector<double> alphas, std::vector<double> omegas);

    std::size_t steps() const noexcept { return alphas_.size() - 1; }
    double alpha(std::size_t t) const { return alphas_.at(t); }
    double omega(std::size_t t) const { return omegas_.at(t); }
    const std::vector<double>& alphas() const noexcept { return alphas_; }
    const std::vector<double>& omegas() const noexcept { return omegas_; }

    friend bool operator==(const Schedule&, const Schedule&) = default;

private:
    std::vector<double> alphas_;
    std::vector<double> omegas_;
};

}  // namespace sega
