#include "sega/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "sega/error.hpp"

namespace sega {

Schedule Schedule::cosine(std::size_t steps) {
    if (steps == 0) throw ConfigError("schedule.steps", "must be at least 1");
    std::vector<double> alphas(steps + 1);
    std::vector<double> omegas(steps + 1);
    // The angle stops at acos(min_alpha) instead of pi/2: cos(pi/2) is only
    // rounding error, which would make the first update divide noise by ~1e-17
    // and leave edit directions at that level meaningless.
    const double last_angle = std::acos(min_alpha);
    for (std::size_t t = 0; t <= steps; ++t) {
        const double angle = last_angle * static_cast<double>(t) / static_cast<double>(steps);
        alphas[t] = std::cos(angle);
        omegas[t] = std::sin(angle);
    }
    return Schedule(std::move(alphas), std::move(omegas));
}

Schedule::Schedule(std::vector<double> alphas, std::vector<double> omegas)
    : alphas_(std::move(alphas)), omegas_(std::move(omegas)) {
    if (alphas_.size() < 2 || alphas_.size() != omegas_.size()) {
        throw ConfigError("schedule", "needs matching alpha/omega sequences of length T+1 >= 2");
    }
    for (std::size_t t = 0; t < alphas_.size(); ++t) {
        const double a = alphas_[t];
        const double w = omegas_[t];
        if (!(a > 0.0 && a <= 1.0) || !(w >= 0.0)) {
            throw ConfigError("schedule", "alpha must lie in (0,1] and omega be non-negative at t=" + std::to_string(t));
        }
        if (std::fabs(a * a + w * w - 1.0) > 1e-12) {
            throw ConfigError("schedule", "alpha^2 + omega^2 != 1 at t=" + std::to_string(t));
        }
        if (t > 0 && a > alphas_[t - 1]) {
            throw ConfigError("schedule", "alpha must be non-increasing in t (violated at t=" + std::to_string(t) + ")");
        }
    }
}

}  // namespace sega
