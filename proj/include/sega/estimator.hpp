#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sega/guidance.hpp"
#include "sega/latent.hpp"
#include "sega/mixture.hpp"
#include "sega/schedule.hpp"

namespace sega {

/// Conditional noise estimator eps(z_t, t, condition). Implementations
/// must be deterministic and safe to call concurrently.
class NoiseEstimator {
public:
    virtual ~NoiseEstimator() = default;

    virtual std::size_t dimension() const = 0;
    virtual const Schedule& schedule() const = 0;
    virtual Latent estimate(const Latent& z, std::size_t t, const Condition& condition) const = 0;

    /// Concept tags the estimator resolves.
    virtual std::vector<std::string> tags() const = 0;
    /// Throws ConfigError when `condition` names an unknown tag.
    virtual void check_condition(const Condition& condition) const = 0;
    /// log p(tag | z) under the noised marginal at diffusion time t.
    virtual double log_posterior(const Latent& z, std::size_t t, const std::string& tag) const = 0;
};

/// Exact estimator for a Gaussian mixture, or for a product of independent
/// mixtures laid out on consecutive coordinate blocks. In the product case a
/// tag conditions only its own block; every other block is evaluated
/// unconditionally by the same code path, so edit directions are exactly zero
/// off the tag's block.
class MixtureEstimator final : public NoiseEstimator {
public:
    MixtureEstimator(MixtureModel model, Schedule schedule);
    MixtureEstimator(std::vector<MixtureModel> blocks, Schedule schedule);

    std::size_t dimension() const override { return dimension_; }
    const Schedule& schedule() const override { return schedule_; }
    Latent estimate(const Latent& z, std::size_t t, const Condition& condition) const override;
    std::vector<std::string> tags() const override;
    void check_condition(const Condition& condition) const override;
    double log_posterior(const Latent& z, std::size_t t, const std::string& tag) const override;

    const std::vector<MixtureModel>& blocks() const noexcept { return blocks_; }

    /// grad log p(tag | z_t) from responsibilities, independent of estimate().
    Latent classifier_gradient(const Latent& z, std::size_t t, const std::string& tag) const;
    /// Posterior of `tag` under the data mixture (t = 0).
    double data_posterior(const Latent& x, const std::string& tag) const;

private:
    struct TagLocation {
        std::size_t block;
        std::vector<std::size_t> members;
    };
    void build();
    const TagLocation& locate(const std::string& tag) const;
    std::span<const double> block_view(const Latent& z, std::size_t block) const;

    std::vector<MixtureModel> blocks_;
    Schedule schedule_;
    std::size_t dimension_ = 0;
    std::vector<std::size_t> offsets_;
    // pushed_[t][block]
    std::vector<std::vector<PushedMixture>> pushed_;
    std::vector<std::pair<std::string, TagLocation>> tags_;
};

/// eps*(z_t | condition) = -omega_t grad log p_t(z_t | condition), with the
/// condition restricting and renormalizing over the tagged components.
Latent exact_noise_estimate(const MixtureModel& model, const Schedule& schedule, const Latent& z, std::size_t t,
                            const Condition& condition);

/// grad_z log p(condition | z_t) computed from mixture responsibilities.
Latent implicit_classifier_gradient(const MixtureModel& model, const Schedule& schedule, const Latent& z,
                                    std::size_t t, const std::string& condition);

}  // namespace sega
