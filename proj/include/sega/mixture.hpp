#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sega/latent.hpp"
#include "sega/rng.hpp"

namespace sega {

struct MixtureComponent {
    double weight = 1.0;
    std::vector<double> mean;
    /// Row-major d x d covariance.
    std::vector<double> covariance;
    std::vector<std::string> labels;
};

/// Gaussian mixture over R^d whose components carry concept tags. A tag
/// stands for the subset of components labeled with it.
class MixtureModel {
public:
    /// Weights must be positive and sum to 1 (within 1e-9); covariances
    /// symmetric positive-definite.
    explicit MixtureModel(std::vector<MixtureComponent> components);

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return components_.size(); }
    const std::vector<MixtureComponent>& components() const noexcept { return components_; }

    /// Tags in sorted order.
    std::vector<std::string> tags() const;
    bool has_tag(const std::string& tag) const { return tag_index_.count(tag) != 0; }
    /// Component indices carrying `tag`; throws ConfigError for unknown tags.
    std::span<const std::size_t> members(const std::string& tag) const;

    const Eigen::VectorXd& mean(std::size_t k) const { return means_[k]; }
    const Eigen::MatrixXd& covariance(std::size_t k) const { return covariances_[k]; }

    Eigen::VectorXd moment_mean() const;
    Eigen::MatrixXd moment_covariance() const;

    /// Direct ancestral draw: pick a component by weight, then sample it.
    Latent sample(Rng& rng) const;

    friend bool operator==(const MixtureModel& a, const MixtureModel& b) { return a.components_ == b.components_; }

private:
    std::vector<MixtureComponent> components_;
    std::size_t dimension_ = 0;
    std::vector<Eigen::VectorXd> means_;
    std::vector<Eigen::MatrixXd> covariances_;
    std::vector<Eigen::MatrixXd> cholesky_;
    std::map<std::string, std::vector<std::size_t>> tag_index_;
};

inline bool operator==(const MixtureComponent& a, const MixtureComponent& b) {
    return a.weight == b.weight && a.mean == b.mean && a.covariance == b.covariance && a.labels == b.labels;
}

/// The mixture pushed through the forward process at one noise level:
/// component k becomes N(alpha mu_k, alpha^2 Sigma_k + omega^2 I).
class PushedMixture {
public:
    PushedMixture(const MixtureModel& model, double alpha, double omega);

    double alpha() const noexcept { return alpha_; }
    double omega() const noexcept { return omega_; }

    /// log p_t(z | subset); the whole mixture when `subset` is empty.
    double log_density(std::span<const double> z, std::span<const std::size_t> subset = {}) const;
    /// grad_z log p_t(z | subset).
    Eigen::VectorXd score(std::span<const double> z, std::span<const std::size_t> subset = {}) const;
    /// -omega * score.
    Eigen::VectorXd noise_estimate(std::span<const double> z, std::span<const std::size_t> subset = {}) const;
    /// log p(subset | z) = log sum_{k in subset} w_k N_k - log sum_k w_k N_k.
    double log_posterior(std::span<const double> z, std::span<const std::size_t> subset) const;
    /// grad_z log p(subset | z), built from the unconditional
    /// responsibilities r_k as (1/pi) sum_{k in subset} r_k (s_k - s_bar).
    /// Does not go through noise_estimate.
    Eigen::VectorXd classifier_gradient(std::span<const double> z, std::span<const std::size_t> subset) const;

private:
    struct Level {
        double log_weight;
        Eigen::VectorXd mean;
        Eigen::LLT<Eigen::MatrixXd> llt;
        double log_norm;  // -0.5 * (log det C + d log 2 pi)
    };

    /// Per-component log(w_k N_k(z)) and component scores.
    void evaluate(std::span<const double> z, std::vector<double>& log_terms, std::vector<Eigen::VectorXd>* scores,
                  std::span<const std::size_t> subset) const;
    std::vector<std::size_t> all_indices() const;

    double alpha_;
    double omega_;
    std::size_t dimension_;
    std::vector<Level> levels_;
};

double log_sum_exp(std::span<const double> values);

}  // namespace sega
