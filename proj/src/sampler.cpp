#include "sega/sampler.hpp"

#include <string>

#include "sega/error.hpp"
#include "sega/rng.hpp"

namespace sega {

Latent sampler_step(const Latent& z, const Latent& eps_bar, const StepCoefficients& c) {
    require_same_shape(z, eps_bar, "sampler_step");
    if (c.alpha_t == 0.0) throw DomainError("sampler_step: alpha_t is zero, x cannot be recovered");
    Latent out(z);
    auto o = out.values();
    auto e = eps_bar.values();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double x_hat = (o[i] - c.omega_t * e[i]) / c.alpha_t;
        o[i] = c.alpha_prev * x_hat + c.omega_prev * e[i];
    }
    return out;
}

Latent sampler_step(const Latent& z, const Latent& eps_bar, std::size_t t, const Schedule& schedule) {
    if (t < 1 || t > schedule.steps()) {
        throw DomainError("sampler_step: t=" + std::to_string(t) + " outside [1," + std::to_string(schedule.steps()) + "]");
    }
    return sampler_step(z, eps_bar,
                        StepCoefficients{schedule.alpha(t), schedule.omega(t), schedule.alpha(t - 1), schedule.omega(t - 1)});
}

void check_conditions(const NoiseEstimator& estimator, const GuidanceConfig& config) {
    try {
        estimator.check_condition(config.prompt());
    } catch (const ConfigError& e) {
        throw ConfigError("guidance.prompt", e.message(), e.kind());
    }
    for (std::size_t i = 0; i < config.concepts().size(); ++i) {
        try {
            estimator.check_condition(config.concepts()[i].condition());
        } catch (const ConfigError& e) {
            throw ConfigError("guidance.concepts[" + std::to_string(i) + "].condition", e.message(), e.kind());
        }
    }
}

Particle make_particle(const NoiseEstimator& estimator, std::uint64_t seed, bool record_gamma, bool record_masks) {
    Rng rng(seed);
    Particle p{gaussian_sample(rng, Shape{estimator.dimension()}), GuidanceState{}};
    p.state.record_gamma = record_gamma;
    p.state.record_masks = record_masks;
    return p;
}

void advance_particle(const NoiseEstimator& estimator, const GuidanceConfig& config, Particle& particle,
                      const GammaLog* replay) {
    const Schedule& schedule = estimator.schedule();
    const std::size_t step = particle.state.t;
    if (step >= schedule.steps()) throw DomainError("particle already reached t=0");
    const std::size_t t = schedule.steps() - step;

    const Latent eps_uncond = estimator.estimate(particle.z, t, std::nullopt);
    const Latent eps_prompt = config.prompt() ? estimator.estimate(particle.z, t, config.prompt()) : eps_uncond;

    Latent eps_bar;
    if (replay) {
        if (replay->size() != schedule.steps()) {
            throw ShapeError("replay log holds " + std::to_string(replay->size()) + " steps, schedule has " +
                             std::to_string(schedule.steps()));
        }
        eps_bar = apply_recorded(*replay, step, cfg_term(eps_uncond, eps_prompt, config.guidance_scale()));
        ++particle.state.t;
    } else {
        std::vector<Latent> eps_edits;
        eps_edits.reserve(config.concepts().size());
        for (const auto& concept_edit : config.concepts()) {
            eps_edits.push_back(estimator.estimate(particle.z, t, concept_edit.condition()));
        }
        eps_bar = sega_step(particle.state, eps_uncond, eps_prompt, eps_edits, config);
    }
    particle.z = sampler_step(particle.z, eps_bar, t, schedule);
}

GuidedRun run_guided(const NoiseEstimator& estimator, const GuidanceConfig& config, std::uint64_t seed,
                     const RunOptions& options) {
    check_conditions(estimator, config);
    Particle particle = make_particle(estimator, seed, options.record_gamma, options.record_masks);
    GuidedRun run;
    run.trajectory.push_back(particle.z);
    while (particle.state.t != estimator.schedule().steps()) {
        advance_particle(estimator, config, particle, options.replay);
        if (options.keep_trajectory) run.trajectory.push_back(particle.z);
    }
    if (!options.keep_trajectory) run.trajectory.push_back(particle.z);
    run.final_sample = particle.z;
    run.state = std::move(particle.state);
    return run;
}

}  // namespace sega
