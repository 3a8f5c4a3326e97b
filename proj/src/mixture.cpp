#include "sega/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "sega/error.hpp"

namespace sega {

double log_sum_exp(std::span<const double> values) {
    if (values.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(values.begin(), values.end());
    if (!std::isfinite(m)) return m;
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - m);
    return m + std::log(sum);
}

MixtureModel::MixtureModel(std::vector<MixtureComponent> components) : components_(std::move(components)) {
    if (components_.empty()) throw ConfigError("components", "mixture needs at least one component");
    dimension_ = components_.front().mean.size();
    if (dimension_ == 0) throw ConfigError("components[0].mean", "must be non-empty");

    double total_weight = 0.0;
    for (std::size_t k = 0; k < components_.size(); ++k) {
        const auto& c = components_[k];
        const std::string at = "components[" + std::to_string(k) + "]";
        if (!(c.weight > 0.0) || !std::isfinite(c.weight)) throw ConfigError(at + ".weight", "must be positive");
        total_weight += c.weight;
        if (c.mean.size() != dimension_) {
            throw ConfigError(at + ".mean", "expected " + std::to_string(dimension_) + " entries");
        }
        if (c.covariance.size() != dimension_ * dimension_) {
            throw ConfigError(at + ".covariance", "expected a " + std::to_string(dimension_) + "x" +
                                                      std::to_string(dimension_) + " matrix");
        }
        Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(c.mean.data(), static_cast<Eigen::Index>(dimension_));
        Eigen::MatrixXd cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            c.covariance.data(), static_cast<Eigen::Index>(dimension_), static_cast<Eigen::Index>(dimension_));
        if (!mean.allFinite() || !cov.allFinite()) throw ConfigError(at, "mean and covariance must be finite");
        const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
            throw ConfigError(at + ".covariance", "must be symmetric");
        }
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() <= 0.0) {
            throw ConfigError(at + ".covariance", "must be positive-definite");
        }
        means_.push_back(std::move(mean));
        cholesky_.push_back(llt.matrixL());
        covariances_.push_back(std::move(cov));
        for (const auto& label : c.labels) {
            if (label.empty()) throw ConfigError(at + ".labels", "labels must be non-empty strings");
            auto& members = tag_index_[label];
            if (members.empty() || members.back() != k) members.push_back(k);
        }
    }
    if (std::fabs(total_weight - 1.0) > 1e-9) {
        throw ConfigError("components", "weights must sum to 1, got " + std::to_string(total_weight));
    }
}

std::vector<std::string> MixtureModel::tags() const {
    std::vector<std::string> out;
    for (const auto& [tag, members] : tag_index_) out.push_back(tag);
    return out;
}

std::span<const std::size_t> MixtureModel::members(const std::string& tag) const {
    auto it = tag_index_.find(tag);
    if (it == tag_index_.end()) throw ConfigError("condition", "unknown concept tag \"" + tag + "\"", ConfigError::Kind::range);
    return it->second;
}

Eigen::VectorXd MixtureModel::moment_mean() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension_));
    for (std::size_t k = 0; k < size(); ++k) m += components_[k].weight * means_[k];
    return m;
}

Eigen::MatrixXd MixtureModel::moment_covariance() const {
    const Eigen::VectorXd m = moment_mean();
    const auto d = static_cast<Eigen::Index>(dimension_);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t k = 0; k < size(); ++k) {
        const Eigen::VectorXd dm = means_[k] - m;
        c += components_[k].weight * (covariances_[k] + dm * dm.transpose());
    }
    return c;
}

Latent MixtureModel::sample(Rng& rng) const {
    const double u = rng.uniform();
    std::size_t k = 0;
    double cumulative = 0.0;
    for (; k + 1 < size(); ++k) {
        cumulative += components_[k].weight;
        if (u < cumulative) break;
    }
    Eigen::VectorXd noise(static_cast<Eigen::Index>(dimension_));
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
    const Eigen::VectorXd x = means_[k] + cholesky_[k] * noise;
    return Latent(std::vector<double>(x.data(), x.data() + x.size()));
}

PushedMixture::PushedMixture(const MixtureModel& model, double alpha, double omega)
    : alpha_(alpha), omega_(omega), dimension_(model.dimension()) {
    const auto d = static_cast<Eigen::Index>(dimension_);
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    levels_.reserve(model.size());
    for (std::size_t k = 0; k < model.size(); ++k) {
        Eigen::MatrixXd cov = alpha * alpha * model.covariance(k);
        cov.diagonal().array() += omega * omega;
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) {
            throw DomainError("pushed covariance of component " + std::to_string(k) + " is not positive-definite");
        }
        const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        levels_.push_back(Level{std::log(model.components()[k].weight), alpha * model.mean(k), std::move(llt),
                                -0.5 * (log_det + static_cast<double>(d) * log_2pi)});
    }
}

std::vector<std::size_t> PushedMixture::all_indices() const {
    std::vector<std::size_t> idx(levels_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

void PushedMixture::evaluate(std::span<const double> z, std::vector<double>& log_terms,
                             std::vector<Eigen::VectorXd>* scores, std::span<const std::size_t> subset) const {
    if (z.size() != dimension_) {
        throw ShapeError("mixture evaluation: latent has " + std::to_string(z.size()) + " entries, model dimension " +
                         std::to_string(dimension_));
    }
    const Eigen::Map<const Eigen::VectorXd> x(z.data(), static_cast<Eigen::Index>(z.size()));
    log_terms.resize(subset.size());
    if (scores) scores->resize(subset.size());
    for (std::size_t i = 0; i < subset.size(); ++i) {
        const Level& level = levels_.at(subset[i]);
        Eigen::VectorXd diff = x - level.mean;
        Eigen::VectorXd whitened = level.llt.matrixL().solve(diff);
        log_terms[i] = level.log_weight + level.log_norm - 0.5 * whitened.squaredNorm();
        if (scores) (*scores)[i] = -level.llt.matrixU().solve(whitened);
    }
}

double PushedMixture::log_density(std::span<const double> z, std::span<const std::size_t> subset) const {
    const auto all = all_indices();
    if (subset.empty()) subset = all;
    std::vector<double> terms;
    evaluate(z, terms, nullptr, subset);
    const double log_mass = [&] {
        double s = 0.0;
        for (std::size_t k : subset) s += std::exp(levels_[k].log_weight);
        return std::log(s);
    }();
    return log_sum_exp(terms) - log_mass;
}

Eigen::VectorXd PushedMixture::score(std::span<const double> z, std::span<const std::size_t> subset) const {
    const auto all = all_indices();
    if (subset.empty()) subset = all;
    std::vector<double> terms;
    std::vector<Eigen::VectorXd> scores;
    evaluate(z, terms, &scores, subset);
    const double normalizer = log_sum_exp(terms);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension_));
    for (std::size_t i = 0; i < terms.size(); ++i) out += std::exp(terms[i] - normalizer) * scores[i];
    return out;
}

Eigen::VectorXd PushedMixture::noise_estimate(std::span<const double> z, std::span<const std::size_t> subset) const {
    return -omega_ * score(z, subset);
}

double PushedMixture::log_posterior(std::span<const double> z, std::span<const std::size_t> subset) const {
    if (subset.empty()) throw DomainError("posterior of an empty component subset");
    const auto all = all_indices();
    std::vector<double> all_terms;
    evaluate(z, all_terms, nullptr, all);
    std::vector<double> sub_terms;
    sub_terms.reserve(subset.size());
    for (std::size_t k : subset) sub_terms.push_back(all_terms.at(k));
    return log_sum_exp(sub_terms) - log_sum_exp(all_terms);
}

Eigen::VectorXd PushedMixture::classifier_gradient(std::span<const double> z,
                                                   std::span<const std::size_t> subset) const {
    if (subset.empty()) throw DomainError("classifier gradient of an empty component subset");
    const auto all = all_indices();
    std::vector<std::size_t> sorted(subset.begin(), subset.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (sorted == all) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension_));  // p(subset | z) == 1

    std::vector<double> terms;
    std::vector<Eigen::VectorXd> scores;
    evaluate(z, terms, &scores, all);

    const double normalizer = log_sum_exp(terms);
    Eigen::VectorXd mean_score = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension_));
    for (std::size_t k = 0; k < terms.size(); ++k) mean_score += std::exp(terms[k] - normalizer) * scores[k];

    // Responsibilities rescaled by a common factor so the subset mass
    // cannot underflow; the factor cancels in the ratio.
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k : subset) peak = std::max(peak, terms.at(k));
    double mass = 0.0;
    Eigen::VectorXd weighted = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension_));
    for (std::size_t k : subset) {
        const double r = std::exp(terms[k] - peak);
        mass += r;
        weighted += r * (scores[k] - mean_score);
    }
    return weighted / mass;
}

}  // namespace sega
