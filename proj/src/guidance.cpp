#include "sega/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "sega/error.hpp"

namespace sega {

std::string_view to_string(Direction d) noexcept { return d == Direction::positive ? "positive" : "negative"; }

Direction direction_from_string(std::string_view s) {
    if (s == "positive") return Direction::positive;
    if (s == "negative") return Direction::negative;
    throw ConfigError("direction", "must be \"positive\" or \"negative\", got \"" + std::string(s) + "\"");
}

ConceptEdit::ConceptEdit(std::string condition, double edit_scale, double threshold, std::size_t warmup,
                         Direction direction, double weight)
    : condition_(std::move(condition)),
      edit_scale_(edit_scale),
      threshold_(threshold),
      warmup_(warmup),
      direction_(direction),
      weight_(weight) {
    if (condition_.empty()) throw ConfigError("condition", "must name a concept tag");
    if (!(edit_scale_ >= 0.0 && edit_scale_ <= limits::max_edit_scale)) {
        throw ConfigError("edit_scale", "must lie in [0,20], got " + std::to_string(edit_scale_), ConfigError::Kind::range);
    }
    if (!(threshold_ > 0.0 && threshold_ < 1.0)) {
        throw ConfigError("threshold", "must lie in (0,1), got " + std::to_string(threshold_), ConfigError::Kind::range);
    }
    if (!std::isfinite(weight_)) throw ConfigError("weight", "must be finite", ConfigError::Kind::range);
}

ConceptEdit ConceptEdit::with_direction(Direction d) const {
    ConceptEdit copy(*this);
    copy.direction_ = d;
    return copy;
}

GuidanceConfig::GuidanceConfig(Condition prompt, double guidance_scale, double momentum_scale, double momentum_beta,
                               std::vector<ConceptEdit> concepts)
    : prompt_(std::move(prompt)),
      guidance_scale_(guidance_scale),
      momentum_scale_(momentum_scale),
      momentum_beta_(momentum_beta),
      concepts_(std::move(concepts)) {
    if (!(guidance_scale_ >= 0.0 && guidance_scale_ <= limits::max_guidance_scale)) {
        throw ConfigError("guidance_scale", "must lie in [0,20], got " + std::to_string(guidance_scale_), ConfigError::Kind::range);
    }
    if (!(momentum_scale_ >= 0.0 && momentum_scale_ <= limits::max_momentum_scale)) {
        throw ConfigError("momentum_scale", "must lie in [0,1], got " + std::to_string(momentum_scale_), ConfigError::Kind::range);
    }
    if (!(momentum_beta_ >= 0.0 && momentum_beta_ < 1.0)) {
        throw ConfigError("momentum_beta", "must lie in [0,1), got " + std::to_string(momentum_beta_), ConfigError::Kind::range);
    }
}

std::size_t GuidanceConfig::max_warmup() const noexcept {
    std::size_t m = 0;
    for (const auto& c : concepts_) m = std::max(m, c.warmup());
    return m;
}

std::size_t GuidanceConfig::min_warmup() const noexcept {
    if (concepts_.empty()) return 0;
    std::size_t m = concepts_.front().warmup();
    for (const auto& c : concepts_) m = std::min(m, c.warmup());
    return m;
}

GuidanceConfig GuidanceConfig::with_concepts(std::vector<ConceptEdit> concepts) const {
    return GuidanceConfig(prompt_, guidance_scale_, momentum_scale_, momentum_beta_, std::move(concepts));
}

Latent cfg_term(const Latent& eps_uncond, const Latent& eps_prompt, double guidance_scale) {
    require_same_shape(eps_uncond, eps_prompt, "cfg_term");
    Latent out(eps_uncond);
    auto o = out.values();
    auto p = eps_prompt.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = o[i] + guidance_scale * (p[i] - o[i]);
    return out;
}

Latent psi(const Latent& eps_uncond, const Latent& eps_edit, Direction direction) {
    require_same_shape(eps_uncond, eps_edit, "psi");
    Latent out(eps_edit);
    auto o = out.values();
    auto u = eps_uncond.values();
    if (direction == Direction::positive) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = o[i] - u[i];
    } else {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = -(o[i] - u[i]);
    }
    return out;
}

std::vector<std::uint8_t> threshold_support(const Latent& psi_vec, double lambda) {
    const Latent magnitude = abs(psi_vec);
    const double eta = percentile_threshold(magnitude, lambda);
    std::vector<std::uint8_t> support(magnitude.size());
    for (std::size_t i = 0; i < support.size(); ++i) support[i] = magnitude[i] >= eta ? 1 : 0;
    return support;
}

Latent mu_mask(const Latent& psi_vec, double edit_scale, double lambda) {
    const auto support = threshold_support(psi_vec, lambda);
    Latent out = Latent::zeros_like(psi_vec);
    for (std::size_t i = 0; i < support.size(); ++i) {
        if (support[i]) out[i] = edit_scale;
    }
    return out;
}

Latent gamma(const Latent& psi_vec, double edit_scale, double lambda) {
    // Written per supported coordinate so masked entries stay +0.0 rather
    // than picking up the sign of psi.
    const auto support = threshold_support(psi_vec, lambda);
    Latent out = Latent::zeros_like(psi_vec);
    for (std::size_t i = 0; i < support.size(); ++i) {
        if (support[i]) out[i] = edit_scale * psi_vec[i];
    }
    return out;
}

Latent combine_concepts(std::span<const Latent> gammas, std::span<const ConceptEdit> edits,
                        std::optional<std::size_t> t) {
    if (gammas.size() != edits.size()) {
        throw ShapeError("combine_concepts: " + std::to_string(gammas.size()) + " gamma terms for " +
                         std::to_string(edits.size()) + " concepts");
    }
    if (gammas.empty()) throw ShapeError("combine_concepts: no concepts to combine");
    Latent total = Latent::zeros_like(gammas.front());
    for (std::size_t i = 0; i < gammas.size(); ++i) {
        require_same_shape(total, gammas[i], "combine_concepts");
        if (t && *t < edits[i].warmup()) continue;
        const double g = edits[i].weight();
        auto out = total.values();
        auto term = gammas[i].values();
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += g * term[j];
    }
    return total;
}

Latent momentum_update(const Latent& nu, const Latent& gamma_hat, double beta) {
    require_same_shape(nu, gamma_hat, "momentum_update");
    if (!(beta >= 0.0 && beta < 1.0)) {
        throw DomainError("momentum beta must lie in [0,1), got " + std::to_string(beta));
    }
    Latent out(nu);
    auto o = out.values();
    auto g = gamma_hat.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = beta * o[i] + (1.0 - beta) * g[i];
    return out;
}

Latent sega_step(GuidanceState& state, const Latent& eps_uncond, const Latent& eps_prompt,
                 std::span<const Latent> eps_edits, const GuidanceConfig& config) {
    const auto& concepts = config.concepts();
    if (eps_edits.size() != concepts.size()) {
        throw ShapeError("sega_step: " + std::to_string(eps_edits.size()) + " edit estimates for " +
                         std::to_string(concepts.size()) + " concepts");
    }
    require_same_shape(eps_uncond, eps_prompt, "sega_step");
    for (const auto& e : eps_edits) require_same_shape(eps_uncond, e, "sega_step");
    bool finite_inputs = eps_uncond.all_finite() && eps_prompt.all_finite();
    for (const auto& e : eps_edits) finite_inputs = finite_inputs && e.all_finite();
    if (!finite_inputs) throw NumericError("sega_step received a non-finite estimate at step " + std::to_string(state.t));
    if (state.nu.empty()) {
        state.nu = Latent::zeros_like(eps_uncond);
    } else {
        require_same_shape(state.nu, eps_uncond, "sega_step momentum");
    }

    const std::size_t t = state.t;
    Latent eps_bar = cfg_term(eps_uncond, eps_prompt, config.guidance_scale());

    StepRecord record;
    record.step = t;

    if (concepts.empty()) {
        if (state.record_gamma) {
            record.combined = Latent::zeros_like(eps_uncond);
            state.gamma_log.push_back(std::move(record));
        }
        ++state.t;
        return eps_bar;
    }

    std::vector<Latent> gammas;
    gammas.reserve(concepts.size());
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        const ConceptEdit& edit = concepts[i];
        Latent direction = psi(eps_uncond, eps_edits[i], edit.direction());
        auto support = threshold_support(direction, edit.threshold());
        Latent term = Latent::zeros_like(direction);
        for (std::size_t j = 0; j < support.size(); ++j) {
            if (support[j]) term[j] = edit.edit_scale() * direction[j];
        }
        gammas.push_back(std::move(term));
        if (state.record_masks) record.masks.push_back(std::move(support));
    }

    Latent momentum_source = combine_concepts(gammas, concepts, std::nullopt);
    const bool any_concept_live =
        std::any_of(concepts.begin(), concepts.end(), [t](const ConceptEdit& c) { return t >= c.warmup(); });
    const bool momentum_live = t >= config.max_warmup() && config.momentum_scale() != 0.0;

    std::optional<Latent> applied;
    if (any_concept_live) {
        Latent term = combine_concepts(gammas, concepts, t);
        if (momentum_live) {
            auto out = term.values();
            auto nu = state.nu.values();
            for (std::size_t j = 0; j < out.size(); ++j) out[j] += config.momentum_scale() * nu[j];
        }
        applied = std::move(term);
    }

    state.nu = momentum_update(state.nu, momentum_source, config.momentum_beta());

    if (applied) {
        auto out = eps_bar.values();
        auto term = applied->values();
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += term[j];
    }
    if (!eps_bar.all_finite() || !state.nu.all_finite()) {
        throw NumericError("sega_step produced a non-finite value at step " + std::to_string(t));
    }

    if (state.record_gamma || state.record_masks) {
        record.combined = std::move(momentum_source);
        record.applied = std::move(applied);
        state.gamma_log.push_back(std::move(record));
    }
    ++state.t;
    return eps_bar;
}

Latent apply_recorded(const GammaLog& log, std::size_t step, const Latent& cfg) {
    if (step >= log.size()) {
        throw ShapeError("apply_recorded: step " + std::to_string(step) + " beyond log of " +
                         std::to_string(log.size()) + " steps");
    }
    const StepRecord& record = log[step];
    if (record.step != step) {
        throw ShapeError("apply_recorded: log entry " + std::to_string(step) + " was recorded at step " +
                         std::to_string(record.step));
    }
    if (!record.applied) return cfg;
    require_same_shape(*record.applied, cfg, "apply_recorded");
    Latent out(cfg);
    auto o = out.values();
    auto term = record.applied->values();
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += term[j];
    return out;
}

}  // namespace sega
