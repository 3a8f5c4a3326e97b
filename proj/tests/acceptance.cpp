// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sega/config.hpp"
#include "sega/diagnostics.hpp"
#include "sega/estimator.hpp"
#include "sega/experiment.hpp"
#include "sega/guidance.hpp"
#include "sega/sampler.hpp"
#include "sega/service.hpp"
#include "sega/stats.hpp"
#include "test_support.hpp"

#include <httplib.h>

#ifndef SEGA_SOURCE_DIR
#define SEGA_SOURCE_DIR "."
#endif

using namespace sega;
using namespace sega::testing;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

Latent random_latent(Rng& rng, std::size_t n) {
    Latent v(Shape{n});
    for (double& x : v.values()) x = 3.0 * rng.normal();
    return v;
}

// 1. Empty concept list reduces sega_step to the CFG formula bitwise.
Outcome cfg_reduction() {
    const auto start = Clock::now();
    Rng rng(101);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 256);
        const Latent u = random_latent(rng, n), p = random_latent(rng, n);
        const double sg = 20.0 * rng.uniform();
        GuidanceState state;
        const Latent out = sega_step(state, u, p, {}, GuidanceConfig(std::string("prompt"), sg, 0.5, 0.5));
        for (std::size_t i = 0; i < n; ++i) {
            const double expected = u[i] + sg * (p[i] - u[i]);
            if (std::memcmp(&expected, &out.values()[i], sizeof(double)) != 0) ++mismatches;
        }
    }
    const double elapsed = seconds_since(start);
    return {mismatches == 0 && elapsed < 1.0,
            std::to_string(mismatches) + " mismatching coordinates over 100 triples, " + fmt(elapsed) + " s"};
}

// 2. Mask sizes on distinct-valued psi.
Outcome sparsity() {
    Rng rng(202);
    std::vector<double> magnitudes(10000);
    for (std::size_t i = 0; i < magnitudes.size(); ++i) magnitudes[i] = 1e-3 * double(i + 1);
    std::shuffle(magnitudes.begin(), magnitudes.end(), std::mt19937_64(202));
    Latent v(Shape{magnitudes.size()});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * magnitudes[i];
    auto nonzero = [&](double lambda) {
        const Latent m = mu_mask(v, 5.0, lambda);
        return std::count_if(m.values().begin(), m.values().end(), [](double x) { return x != 0.0; });
    };
    const auto k95 = nonzero(0.95), k99 = nonzero(0.99);
    return {k95 == 501 && k99 == 101, "lambda=0.95 -> " + std::to_string(k95) + ", lambda=0.99 -> " + std::to_string(k99)};
}

// 3. Mean target posterior rises with the edit scale.
Outcome monotonicity() {
    const auto start = Clock::now();
    const ExperimentConfig config = load_config_file(std::string(SEGA_SOURCE_DIR) + "/configs/monotonicity.json");
    if (config.seeds.size() != 200 || config.schedule.steps() != 50 || config.model_blocks.front().dimension() != 2 ||
        config.model_blocks.front().size() != 2)
        return {false, "configs/monotonicity.json does not describe the required setup"};
    const RunResult result = run_experiment(config, 1);
    std::vector<double> scales, posteriors;
    std::string curve;
    for (const auto& cell : result.cells) {
        scales.push_back(cell.point.front().second.get<double>());
        posteriors.push_back(cell.mean_target_posterior);
        curve += (curve.empty() ? "" : " ") + fmt(cell.mean_target_posterior);
    }
    const double rho = spearman(scales, posteriors);
    const double elapsed = seconds_since(start);
    const bool grid_ok = scales.size() == 11 && scales.front() == 0.0 && scales.back() == 20.0;
    return {grid_ok && rho >= 0.95 && elapsed < 120.0,
            "rho=" + fmt(rho) + " over s_e=0..20 (" + curve + "), " + fmt(elapsed) + " s"};
}

// 4. Two concepts on separate coordinate blocks: masks never overlap and
// each concept's coordinates are untouched by the other.
Outcome isolation() {
    const std::size_t T = 50;
    std::vector<double> eye4(16, 0.0);
    for (int i = 0; i < 4; ++i) eye4[i * 4 + i] = 0.5;
    const MixtureModel left({{0.5, {1.5, 0.5, -0.5, 1.0}, eye4, {"left_a"}}, {0.5, {-1.5, -0.5, 0.5, -1.0}, eye4, {"left_b"}}});
    const MixtureModel right({{0.5, {0.5, 1.5, 1.0, -0.5}, eye4, {"right_a"}}, {0.5, {-0.5, -1.5, -1.0, 0.5}, eye4, {"right_b"}}});
    const MixtureEstimator est({left, right}, Schedule::cosine(T));
    const ConceptEdit a("left_a", 8.0, 0.75, 0), b("right_a", 6.0, 0.75, 0);
    const GuidanceConfig both(std::nullopt, 1.0, 0.0, 0.0, {a, b});
    const GuidanceConfig only_a = both.with_concepts({a}), only_b = both.with_concepts({b});

    std::size_t overlap_steps = 0, support_mismatches = 0, trajectory_mismatches = 0, checked = 0;
    std::vector<GammaLog> logs;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Particle combined = make_particle(est, seed, true, true);
        Particle pa = make_particle(est, seed, true, true), pb = make_particle(est, seed, true, true);
        for (std::size_t step = 0; step < T; ++step) {
            const std::size_t t = T - step;
            const Latent u = est.estimate(combined.z, t, std::nullopt);
            const std::vector<Latent> e{est.estimate(combined.z, t, std::string("left_a")),
                                        est.estimate(combined.z, t, std::string("right_a"))};
            GuidanceState s_both = combined.state, s_a = combined.state, s_b = combined.state;
            s_a.gamma_log.clear();
            s_b.gamma_log.clear();
            s_both.gamma_log.clear();
            const Latent bar = sega_step(s_both, u, u, e, both);
            const Latent bar_a = sega_step(s_a, u, u, std::span(e).first(1), only_a);
            const Latent bar_b = sega_step(s_b, u, u, std::span(e).last(1), only_b);
            const auto& mask_a = s_both.gamma_log.back().masks[0];
            const auto& mask_b = s_both.gamma_log.back().masks[1];
            for (std::size_t j = 0; j < 8; ++j) {
                if (mask_a[j] && mask_b[j]) ++overlap_steps;
                if (mask_a[j]) {
                    ++checked;
                    if (std::memcmp(&bar.values()[j], &bar_a.values()[j], sizeof(double)) != 0) ++support_mismatches;
                }
                if (mask_b[j]) {
                    ++checked;
                    if (std::memcmp(&bar.values()[j], &bar_b.values()[j], sizeof(double)) != 0) ++support_mismatches;
                }
            }
            advance_particle(est, both, combined);
            advance_particle(est, only_a, pa);
            advance_particle(est, only_b, pb);
        }
        // Whole runs: the left block follows concept A alone, the right block B alone.
        for (std::size_t j = 0; j < 4; ++j) {
            if (std::memcmp(&combined.z.values()[j], &pa.z.values()[j], sizeof(double)) != 0) ++trajectory_mismatches;
            if (std::memcmp(&combined.z.values()[j + 4], &pb.z.values()[j + 4], sizeof(double)) != 0) ++trajectory_mismatches;
        }
        logs.push_back(combined.state.gamma_log);
    }
    std::vector<const GammaLog*> ptrs;
    for (const auto& l : logs) ptrs.push_back(&l);
    const MaskReport report = mask_report(ptrs);
    double max_step_overlap = 0.0;
    for (const auto& s : report.per_step_series) max_step_overlap = std::max(max_step_overlap, s.mean_overlap);
    const bool disjoint = overlap_steps == 0 && report.support_overlap[0][1] == 0.0 && max_step_overlap == 0.0;
    return {disjoint && support_mismatches == 0 && trajectory_mismatches == 0 && checked > 0,
            "mask Jaccard " + fmt(report.support_overlap[0][1]) + " (max per step " + fmt(max_step_overlap) + "), " +
                std::to_string(support_mismatches) + "/" + std::to_string(checked) +
                " support coordinates differ, final block mismatches " + std::to_string(trajectory_mismatches)};
}

// 5. psi_pos equals -omega times the classifier gradient computed from
// responsibilities; the gradient itself is checked by finite differences.
Outcome implicit_classifier() {
    const std::size_t T = 50;
    const Schedule schedule = Schedule::cosine(T);
    Rng rng(505);
    double worst_identity = 0.0, worst_fd = 0.0;
    int probes = 0;
    while (probes < 1000) {
        const std::size_t d = std::vector<std::size_t>{1, 2, 8}[probes % 3];
        const std::size_t k = 2 + static_cast<std::size_t>(rng.uniform() * 4);
        const MixtureModel model = random_mixture(rng, k, d);
        const MixtureEstimator est(model, schedule);
        for (int i = 0; i < 10; ++i, ++probes) {
            const std::size_t t = 1 + static_cast<std::size_t>(rng.uniform() * T);
            const Latent z = sample_noised(model, schedule, t, rng);
            const std::string tag = i % 2 ? "low" : "c" + std::to_string(i % k);
            const Latent direction =
                psi(est.estimate(z, t, std::nullopt), est.estimate(z, t, tag), Direction::positive);
            const Latent grad = est.classifier_gradient(z, t, tag);
            const Latent implied = scale(grad, -schedule.omega(t));
            worst_identity = std::max(worst_identity, relative_error(direction, implied));

            const auto members = model.members(tag);
            const std::vector<std::size_t> subset(members.begin(), members.end());
            const auto all = all_components(model);
            const double a = schedule.alpha(t), w = schedule.omega(t);
            const Latent fd = central_gradient(
                [&](const Latent& x) {
                    return naive_log_density(model, a, w, x.values(), subset) - naive_log_density(model, a, w, x.values(), all);
                },
                z);
            worst_fd = std::max(worst_fd, relative_error(grad, fd));
        }
    }
    return {worst_identity <= 1e-5 && worst_fd <= 1e-5,
            "worst identity rel. error " + fmt(worst_identity) + ", worst finite-difference rel. error " + fmt(worst_fd) +
                " over " + std::to_string(probes) + " probes"};
}

// 6. Momentum recursion vs closed form; momentum accumulates during warmup
// while the output stays unguided.
Outcome momentum() {
    Rng rng(606);
    double worst = 0.0;
    for (double beta : {0.0, 0.25, 0.5, 0.9, 0.99}) {
        for (int sequence = 0; sequence < 4; ++sequence) {
            std::vector<Latent> gammas;
            for (int k = 0; k < 100; ++k) gammas.push_back(random_latent(rng, 16));
            Latent nu(Shape{16});
            for (std::size_t t = 0; t < gammas.size(); ++t) {
                nu = momentum_update(nu, gammas[t], beta);
                for (std::size_t i = 0; i < 16; ++i) {
                    long double closed = 0.0L;
                    for (std::size_t k = 0; k <= t; ++k)
                        closed += (1.0L - beta) * std::pow(static_cast<long double>(beta), static_cast<long double>(t - k)) *
                                  gammas[k][i];
                    worst = std::max(worst, static_cast<double>(std::fabs(nu[i] - closed)));
                }
            }
        }
    }
    const std::size_t delta = 10;
    const GuidanceConfig cfg(std::string("p"), 7.5, 0.5, 0.8, {ConceptEdit("A", 5.0, 0.9, delta)});
    GuidanceState state;
    bool inert = true, built = true;
    for (std::size_t t = 0; t < delta; ++t) {
        const Latent u = random_latent(rng, 64), p = random_latent(rng, 64);
        const std::vector<Latent> e{random_latent(rng, 64)};
        const Latent out = sega_step(state, u, p, e, cfg);
        inert = inert && bit_equal(out, cfg_term(u, p, 7.5));
        built = built && l2_norm(state.nu.values()) > 0.0;
    }
    return {worst <= 1e-12 && inert && built,
            "max |nu - closed form| " + fmt(worst) + "; warmup output bitwise unguided: " + (inert ? "yes" : "no") +
                "; nu nonzero during warmup: " + (built ? "yes" : "no")};
}

json base_document(std::size_t steps, std::size_t seeds) {
    return {{"model",
             {{"components",
               {{{"weight", 0.5}, {"mean", {1.0, 0.0}}, {"variance", 1.0}, {"labels", {"A"}}},
                {{"weight", 0.5}, {"mean", {-1.0, 0.0}}, {"variance", 1.0}, {"labels", {"B"}}}}}}},
            {"schedule", {{"kind", "cosine"}, {"steps", steps}}},
            {"guidance",
             {{"prompt", nullptr},
              {"guidance_scale", 1.0},
              {"concepts", {{{"condition", "A"}, {"edit_scale", 10.0}, {"threshold", 0.5}, {"warmup", 0}}}}}},
            {"seeds", {{"start", 0}, {"count", seeds}}},
            {"target", "A"}};
}

// 7. Warmup rows at or past T reproduce the baseline; displacement falls
// as the threshold rises.
Outcome ablation_consistency() {
    const std::size_t T = 25;
    json doc = base_document(T, 50);
    doc["grid"] = json::array({{{"path", "concepts[0].warmup"}, {"values", {0, 5, 10, 25}}},
                               {{"path", "concepts[0].edit_scale"}, {"values", {0, 5, 10, 20}}}});
    const AblationResult warm = run_ablation(parse_config(doc), 1);
    if (warm.axes.size() != 2 || warm.axes[0].path != "concepts[0].warmup") return {false, "unexpected axis order"};

    const CellOutcome& baseline = warm.cells.front();  // warmup 0, s_e 0
    double worst = 0.0;
    std::size_t gated_cells = 0;
    for (const auto& cell : warm.cells) {
        const bool gated = cell.point[0].second.get<std::size_t>() >= T;
        const bool zero_scale = cell.point[1].second.get<double>() == 0.0;
        if (!gated && !zero_scale) continue;
        ++gated_cells;
        worst = std::max(worst, std::fabs(cell.mean_target_posterior - baseline.mean_target_posterior));
        for (std::size_t s = 0; s < cell.seeds.size(); ++s)
            for (std::size_t j = 0; j < cell.seeds[s].final_sample.size(); ++j)
                worst = std::max(worst, std::fabs(cell.seeds[s].final_sample[j] - baseline.seeds[s].final_sample[j]));
    }

    // Threshold sweep in 16 dimensions so the mask size actually changes.
    Rng rng(707);
    json comps = json::array();
    std::vector<double> v(16);
    for (double& x : v) x = rng.normal();
    std::vector<double> neg(16);
    for (std::size_t i = 0; i < 16; ++i) neg[i] = -v[i];
    comps.push_back({{"weight", 0.5}, {"mean", v}, {"variance", 1.0}, {"labels", {"A"}}});
    comps.push_back({{"weight", 0.5}, {"mean", neg}, {"variance", 1.0}, {"labels", {"B"}}});
    json high = base_document(50, 50);
    high["model"] = {{"components", comps}};
    high["grid"] = json::array({{{"path", "concepts[0].edit_scale"}, {"values", {0, 5, 10, 20}}},
                                {{"path", "concepts[0].threshold"}, {"values", {0.8, 0.9, 0.95, 0.99}}}});
    const AblationResult sweep = run_ablation(parse_config(high), 1);
    const std::vector<double> lambdas{0.8, 0.9, 0.95, 0.99};
    double max_rho = -1.0;
    std::string rhos;
    for (const auto& row : sweep.displacement) {
        const double rho = spearman(lambdas, row);
        max_rho = std::max(max_rho, rho);
        rhos += (rhos.empty() ? "" : " ") + fmt(rho);
    }
    return {gated_cells == 7 && worst <= 1e-12 && max_rho <= 0.0,
            "max deviation of gated/zero-scale cells from baseline " + fmt(worst) + " over " +
                std::to_string(gated_cells) + " cells; displacement-vs-lambda Spearman per s_e row: " + rhos};
}

// 8. Replaying a recorded log into a fresh same-seed run.
Outcome replay() {
    Rng model_rng(808);
    const MixtureEstimator est(random_mixture(model_rng, 4, 6), Schedule::cosine(50));
    const GuidanceConfig cfg(std::string("c1"), 4.0, 0.4, 0.7,
                             {ConceptEdit("c0", 9.0, 0.6, 5), ConceptEdit("c3", 4.0, 0.8, 12, Direction::negative, 0.5)});
    std::size_t mismatches = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const GuidedRun live = run_guided(est, cfg, seed);
        RunOptions options;
        options.replay = &live.state.gamma_log;
        const GuidedRun replayed = run_guided(est, cfg, seed, options);
        if (!bit_equal(live.final_sample, replayed.final_sample)) ++mismatches;
    }
    return {mismatches == 0, std::to_string(mismatches) + " of 10 replayed runs differ from the live run"};
}

// 9. Unconditional sampling reproduces the data moments.
Outcome sampler_soundness() {
    const auto start = Clock::now();
    const std::vector<double> c1{0.5, 0.2, 0.2, 0.3}, c2{0.2, -0.1, -0.1, 0.6}, c3{1.0, 0.0, 0.0, 0.1};
    const MixtureModel model({{0.3, {2.0, 1.0}, c1, {"a"}}, {0.5, {-1.0, 0.5}, c2, {"b"}}, {0.2, {0.0, -2.0}, c3, {"c"}}});
    const MixtureEstimator est(model, Schedule::cosine(50));
    const GuidanceConfig plain(std::nullopt, 1.0);

    const std::size_t n = 10000;
    Eigen::MatrixXd samples(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const GuidedRun r = run_guided(est, plain, i, {false, false, false});
        samples(static_cast<Eigen::Index>(i), 0) = r.final_sample[0];
        samples(static_cast<Eigen::Index>(i), 1) = r.final_sample[1];
    }
    const Eigen::RowVectorXd mean = samples.colwise().mean();
    const Eigen::MatrixXd centered = samples.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / double(n);

    // Oracle: direct ancestral draws with an unrelated generator.
    std::mt19937_64 gen(909);
    std::discrete_distribution<int> pick({0.3, 0.5, 0.2});
    std::normal_distribution<double> normal;
    const std::size_t m = 1'000'000;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    Eigen::Matrix2d outer = Eigen::Matrix2d::Zero();
    std::vector<Eigen::Matrix2d> chol;
    for (std::size_t k = 0; k < 3; ++k) chol.push_back(model.covariance(k).llt().matrixL());
    for (std::size_t i = 0; i < m; ++i) {
        const int k = pick(gen);
        const Eigen::Vector2d x = model.mean(k) + chol[k] * Eigen::Vector2d(normal(gen), normal(gen));
        sum += x;
        outer += x * x.transpose();
    }
    const Eigen::Vector2d oracle_mean = sum / double(m);
    const Eigen::Matrix2d oracle_cov = outer / double(m) - oracle_mean * oracle_mean.transpose();

    const double mean_err = (mean.transpose() - oracle_mean).cwiseAbs().maxCoeff();
    const double cov_err = (cov - oracle_cov).norm();
    const double elapsed = seconds_since(start);
    return {mean_err <= 0.05 && cov_err <= 0.1 && elapsed < 60.0,
            "mean error " + fmt(mean_err) + ", covariance Frobenius error " + fmt(cov_err) + ", " + fmt(elapsed) + " s"};
}

// 10. Two fresh services driven by the same script end in the same state.
Outcome service_determinism() {
    auto script = [](int port) {
        httplib::Client client("127.0.0.1", port);
        json body = {{"config", base_document(50, 1)}, {"particles", 64}, {"seed", 11}};
        body["config"]["guidance"]["concepts"][0]["warmup"] = 5;
        auto created = client.Post("/v1/sessions", body.dump(), "application/json");
        if (!created || created->status != 201) return json();
        const std::string id = json::parse(created->body)["id"];
        const std::string base = "/v1/sessions/" + id;
        client.Post(base + "/advance", json{{"steps", 7}}.dump(), "application/json");
        client.Put(base + "/edits",
                   json::array({{{"condition", "B"}, {"edit_scale", 6.0}, {"threshold", 0.7}, {"warmup", 10}},
                                {{"condition", "A"}, {"edit_scale", 3.0}, {"threshold", 0.5}, {"direction", "negative"}}})
                       .dump(),
                   "application/json");
        client.Post(base + "/advance", json{{"steps", 20}}.dump(), "application/json");
        client.Put(base + "/edits", json{{"concepts", json::array()}}.dump(), "application/json");
        client.Post(base + "/advance", json{{"steps", 23}}.dump(), "application/json");
        auto state = client.Get(base);
        if (!state || state->status != 200) return json();
        json snapshot = json::parse(state->body);
        for (const char* key : {"id", "created", "updated"}) snapshot.erase(key);
        return snapshot;
    };
    SteeringServer first, second;
    const json a = script(first.start());
    const json b = script(second.start());
    first.stop();
    second.stop();
    if (a.is_null() || b.is_null()) return {false, "scripted session failed"};
    const bool finished = a.value("t", 0) == 50;
    return {finished && a == b, std::string("snapshots ") + (a == b ? "identical" : "differ") + " after " +
                                    std::to_string(a["actions"].size()) + " actions, t=" + std::to_string(a.value("t", 0))};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"cfg reduction", cfg_reduction},
        {"sparsity", sparsity},
        {"monotonicity", monotonicity},
        {"isolation", isolation},
        {"implicit classifier", implicit_classifier},
        {"momentum", momentum},
        {"warmup/ablation consistency", ablation_consistency},
        {"replay", replay},
        {"sampler soundness", sampler_soundness},
        {"service determinism", service_determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.passed) ++failures;
        std::printf("%s %2zu %s: %s\n", o.passed ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
