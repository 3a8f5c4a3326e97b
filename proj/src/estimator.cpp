#include "sega/estimator.hpp"

#include <algorithm>
#include <cmath>

#include "sega/error.hpp"

namespace sega {

namespace {

Latent to_latent(const Eigen::VectorXd& v) { return Latent(std::vector<double>(v.data(), v.data() + v.size())); }

void require_dimension(const Latent& z, std::size_t d) {
    if (z.size() != d) {
        throw ShapeError("latent " + shape_to_string(z.shape()) + " does not match model dimension " + std::to_string(d));
    }
}

}  // namespace

MixtureEstimator::MixtureEstimator(MixtureModel model, Schedule schedule)
    : blocks_{std::move(model)}, schedule_(std::move(schedule)) {
    build();
}

MixtureEstimator::MixtureEstimator(std::vector<MixtureModel> blocks, Schedule schedule)
    : blocks_(std::move(blocks)), schedule_(std::move(schedule)) {
    if (blocks_.empty()) throw ConfigError("model.blocks", "needs at least one block");
    build();
}

void MixtureEstimator::build() {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        offsets_.push_back(dimension_);
        dimension_ += blocks_[b].dimension();
        for (const auto& tag : blocks_[b].tags()) {
            auto clash = std::find_if(tags_.begin(), tags_.end(), [&](const auto& e) { return e.first == tag; });
            if (clash != tags_.end()) {
                throw ConfigError("model.blocks[" + std::to_string(b) + "]",
                                  "tag \"" + tag + "\" already used by another block");
            }
            auto members = blocks_[b].members(tag);
            tags_.emplace_back(tag, TagLocation{b, {members.begin(), members.end()}});
        }
    }
    std::sort(tags_.begin(), tags_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    pushed_.resize(schedule_.steps() + 1);
    for (std::size_t t = 0; t <= schedule_.steps(); ++t) {
        for (const auto& block : blocks_) pushed_[t].emplace_back(block, schedule_.alpha(t), schedule_.omega(t));
    }
}

std::vector<std::string> MixtureEstimator::tags() const {
    std::vector<std::string> out;
    for (const auto& [tag, loc] : tags_) out.push_back(tag);
    return out;
}

const MixtureEstimator::TagLocation& MixtureEstimator::locate(const std::string& tag) const {
    auto it = std::lower_bound(tags_.begin(), tags_.end(), tag, [](const auto& e, const std::string& k) { return e.first < k; });
    if (it == tags_.end() || it->first != tag) throw ConfigError("condition", "unknown concept tag \"" + tag + "\"", ConfigError::Kind::range);
    return it->second;
}

void MixtureEstimator::check_condition(const Condition& condition) const {
    if (condition) locate(*condition);
}

std::span<const double> MixtureEstimator::block_view(const Latent& z, std::size_t block) const {
    return z.values().subspan(offsets_[block], blocks_[block].dimension());
}

Latent MixtureEstimator::estimate(const Latent& z, std::size_t t, const Condition& condition) const {
    require_dimension(z, dimension_);
    if (t > schedule_.steps()) throw DomainError("diffusion time " + std::to_string(t) + " beyond schedule");
    const TagLocation* loc = condition ? &locate(*condition) : nullptr;
    Latent out(z.shape());
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        std::span<const std::size_t> subset;
        if (loc && loc->block == b) subset = loc->members;
        const Eigen::VectorXd eps = pushed_[t][b].noise_estimate(block_view(z, b), subset);
        std::copy(eps.data(), eps.data() + eps.size(), out.values().begin() + static_cast<std::ptrdiff_t>(offsets_[b]));
    }
    return out;
}

double MixtureEstimator::log_posterior(const Latent& z, std::size_t t, const std::string& tag) const {
    require_dimension(z, dimension_);
    const TagLocation& loc = locate(tag);
    return pushed_.at(t)[loc.block].log_posterior(block_view(z, loc.block), loc.members);
}

Latent MixtureEstimator::classifier_gradient(const Latent& z, std::size_t t, const std::string& tag) const {
    require_dimension(z, dimension_);
    const TagLocation& loc = locate(tag);
    Latent out(z.shape());
    const Eigen::VectorXd g = pushed_.at(t)[loc.block].classifier_gradient(block_view(z, loc.block), loc.members);
    std::copy(g.data(), g.data() + g.size(), out.values().begin() + static_cast<std::ptrdiff_t>(offsets_[loc.block]));
    return out;
}

double MixtureEstimator::data_posterior(const Latent& x, const std::string& tag) const {
    return std::exp(log_posterior(x, 0, tag));
}

Latent exact_noise_estimate(const MixtureModel& model, const Schedule& schedule, const Latent& z, std::size_t t,
                            const Condition& condition) {
    require_dimension(z, model.dimension());
    const PushedMixture pushed(model, schedule.alpha(t), schedule.omega(t));
    std::span<const std::size_t> subset;
    if (condition) subset = model.members(*condition);
    return to_latent(pushed.noise_estimate(z.values(), subset));
}

Latent implicit_classifier_gradient(const MixtureModel& model, const Schedule& schedule, const Latent& z,
                                    std::size_t t, const std::string& condition) {
    require_dimension(z, model.dimension());
    const PushedMixture pushed(model, schedule.alpha(t), schedule.omega(t));
    return to_latent(pushed.classifier_gradient(z.values(), model.members(condition)));
}

}  // namespace sega
