#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sega/estimator.hpp"
#include "sega/guidance.hpp"
#include "sega/latent.hpp"
#include "sega/schedule.hpp"

namespace sega {

struct StepCoefficients {
    double alpha_t;
    double omega_t;
    double alpha_prev;
    double omega_prev;
};

/// Deterministic DDIM-style update:
///   x_hat = (z_t - omega_t eps_bar) / alpha_t
///   z_{t-1} = alpha_{t-1} x_hat + omega_{t-1} eps_bar
Latent sampler_step(const Latent& z, const Latent& eps_bar, const StepCoefficients& coefficients);
/// Same update with coefficients from `schedule`; t in [1, T].
Latent sampler_step(const Latent& z, const Latent& eps_bar, std::size_t t, const Schedule& schedule);

/// One trajectory: the current latent plus its guidance state. The guidance
/// step counter doubles as the position in the sampling loop, so the
/// diffusion time is T - state.t.
struct Particle {
    Latent z;
    GuidanceState state;
};

/// Starting particle: z_T drawn from N(0, I) with `seed`.
Particle make_particle(const NoiseEstimator& estimator, std::uint64_t seed, bool record_gamma = true,
                       bool record_masks = false);

/// One sega_step + sampler_step. When `replay` is given, the guided
/// prediction is rebuilt from the log instead of evaluating edit estimates.
void advance_particle(const NoiseEstimator& estimator, const GuidanceConfig& config, Particle& particle,
                      const GammaLog* replay = nullptr);

struct RunOptions {
    bool record_gamma = true;
    bool record_masks = false;
    bool keep_trajectory = true;
    /// Recorded log to replay instead of computing edit estimates.
    const GammaLog* replay = nullptr;
};

struct GuidedRun {
    /// z_T, z_{T-1}, ..., z_0 (only z_T and z_0 when trajectories are off).
    std::vector<Latent> trajectory;
    Latent final_sample;
    GuidanceState state;
};

/// Draws z_T with `seed` and runs T guided denoising steps.
GuidedRun run_guided(const NoiseEstimator& estimator, const GuidanceConfig& config, std::uint64_t seed,
                     const RunOptions& options = {});

/// Throws ConfigError when any prompt or concept condition is unknown.
void check_conditions(const NoiseEstimator& estimator, const GuidanceConfig& config);

}  // namespace sega
