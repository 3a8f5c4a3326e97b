#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sega/latent.hpp"

namespace sega {

/// Opaque condition understood by a noise estimator. `std::nullopt` is the
/// unconditional (null) condition.
using Condition = std::optional<std::string>;

enum class Direction { positive, negative };

std::string_view to_string(Direction d) noexcept;
Direction direction_from_string(std::string_view s);

/// Accepted hyperparameter ranges.
namespace limits {
inline constexpr double max_edit_scale = 20.0;
inline constexpr double max_guidance_scale = 20.0;
inline constexpr double max_momentum_scale = 1.0;
}  // namespace limits

/// One editing concept with its own scale, threshold, warmup, direction and
/// combination weight. Ranges are checked on construction.
class ConceptEdit {
public:
    ConceptEdit(std::string condition, double edit_scale, double threshold, std::size_t warmup,
                Direction direction = Direction::positive, double weight = 1.0);

    const std::string& condition() const noexcept { return condition_; }
    double edit_scale() const noexcept { return edit_scale_; }
    double threshold() const noexcept { return threshold_; }
    std::size_t warmup() const noexcept { return warmup_; }
    Direction direction() const noexcept { return direction_; }
    double weight() const noexcept { return weight_; }

    ConceptEdit with_direction(Direction d) const;

    friend bool operator==(const ConceptEdit&, const ConceptEdit&) = default;

private:
    std::string condition_;
    double edit_scale_;
    double threshold_;
    std::size_t warmup_;
    Direction direction_;
    double weight_;
};

class GuidanceConfig {
public:
    GuidanceConfig(Condition prompt, double guidance_scale, double momentum_scale = 0.0, double momentum_beta = 0.0,
                   std::vector<ConceptEdit> concepts = {});

    const Condition& prompt() const noexcept { return prompt_; }
    double guidance_scale() const noexcept { return guidance_scale_; }
    double momentum_scale() const noexcept { return momentum_scale_; }
    double momentum_beta() const noexcept { return momentum_beta_; }
    const std::vector<ConceptEdit>& concepts() const noexcept { return concepts_; }

    /// Largest warmup over all concepts, 0 without concepts.
    std::size_t max_warmup() const noexcept;
    std::size_t min_warmup() const noexcept;

    GuidanceConfig with_concepts(std::vector<ConceptEdit> concepts) const;

    friend bool operator==(const GuidanceConfig&, const GuidanceConfig&) = default;

private:
    Condition prompt_;
    double guidance_scale_;
    double momentum_scale_;
    double momentum_beta_;
    std::vector<ConceptEdit> concepts_;
};

/// What one sega_step contributed, kept for replay and mask statistics.
struct StepRecord {
    std::size_t step = 0;
    /// Ungated weighted sum of the concept terms; the momentum source.
    Latent combined;
    /// Term added on top of the CFG prediction, or nullopt when the step
    /// returned the CFG prediction unchanged (warmup, no concepts).
    std::optional<Latent> applied;
    /// Per-concept threshold masks (1 where the concept edits a coordinate).
    std::vector<std::vector<std::uint8_t>> masks;
};

using GammaLog = std::vector<StepRecord>;

struct GuidanceState {
    /// Momentum; zero-initialized to the latent shape on the first step.
    Latent nu;
    /// Number of completed sega_step calls.
    std::size_t t = 0;
    bool record_gamma = false;
    bool record_masks = false;
    GammaLog gamma_log;
};

/// eps_u + s_g * (eps_p - eps_u)
Latent cfg_term(const Latent& eps_uncond, const Latent& eps_prompt, double guidance_scale);

/// Edit direction: eps_e - eps_u, negated for negative guidance.
Latent psi(const Latent& eps_uncond, const Latent& eps_edit, Direction direction);

/// Coordinates with |psi| at or above the lambda-th percentile of |psi|.
std::vector<std::uint8_t> threshold_support(const Latent& psi_vec, double lambda);

/// s_e on the threshold support, 0 elsewhere. Ties at the threshold are kept.
Latent mu_mask(const Latent& psi_vec, double edit_scale, double lambda);

/// mu_mask(psi, s_e, lambda) * psi, elementwise.
Latent gamma(const Latent& psi_vec, double edit_scale, double lambda);

/// Sum of g_i * gamma_i. With `t` set, concepts still inside their warmup
/// (t < warmup_i) contribute nothing; with `t` unset no gating is applied.
Latent combine_concepts(std::span<const Latent> gammas, std::span<const ConceptEdit> edits,
                        std::optional<std::size_t> t);

/// beta * nu + (1 - beta) * gamma_hat
Latent momentum_update(const Latent& nu, const Latent& gamma_hat, double beta);

/// One guided noise prediction. Per step:
///   psi_i, gamma_i for every concept;
///   gamma_hat = sum g_i gamma_i, gated per concept by warmup;
///   momentum term s_m * nu added once t >= max warmup;
///   nu updated from the ungated sum so it builds up during warmup;
///   result = cfg_term + applied term, or the bare cfg_term when nothing
///   is applied yet.
/// `eps_edits` aligns with `config.concepts()`. Advances `state.t` by one.
Latent sega_step(GuidanceState& state, const Latent& eps_uncond, const Latent& eps_prompt,
                 std::span<const Latent> eps_edits, const GuidanceConfig& config);

/// Rebuilds the guided prediction for `step` from a recorded log and a live
/// CFG prediction, skipping the edit estimates.
Latent apply_recorded(const GammaLog& log, std::size_t step, const Latent& cfg);

}  // namespace sega
