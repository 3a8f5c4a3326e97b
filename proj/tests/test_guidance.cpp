#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "sega/error.hpp"
#include "sega/guidance.hpp"
#include "sega/rng.hpp"

using namespace sega;

namespace {

Latent random_latent(Rng& rng, std::size_t n, double scale = 1.0) {
    Latent v(Shape{n});
    for (double& x : v.values()) x = scale * rng.normal();
    return v;
}

std::size_t count_nonzero(const Latent& v) {
    return static_cast<std::size_t>(std::count_if(v.values().begin(), v.values().end(), [](double x) { return x != 0.0; }));
}

// Brute-force mask: sort |psi|, take the ceil(lambda n)-th smallest.
std::vector<std::uint8_t> brute_mask(const Latent& psi, double lambda) {
    std::vector<double> a;
    for (double x : psi.values()) a.push_back(std::fabs(x));
    std::vector<double> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    auto rank = static_cast<std::size_t>(std::ceil(lambda * double(a.size()) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, a.size());
    const double eta = sorted[rank - 1];
    std::vector<std::uint8_t> m;
    for (double x : a) m.push_back(x >= eta ? 1 : 0);
    return m;
}

const Latent example_psi{0.1, -0.9, 0.5, -0.2};

}  // namespace

TEST_CASE("cfg_term examples") {
    CHECK(cfg_term(Latent{0.0}, Latent{2.0}, 1.0).values()[0] == 2.0);
    CHECK(bit_equal(cfg_term(Latent{3.0, 3.0}, Latent{5.0, 1.0}, 0.0), Latent{3.0, 3.0}));
    CHECK(bit_equal(cfg_term(Latent{0.0, 1.0}, Latent{2.0, 1.0}, 7.5), Latent{15.0, 1.0}));
    CHECK_THROWS_AS(cfg_term(Latent{0.0}, Latent{1.0, 2.0}, 1.0), ShapeError);
}

TEST_CASE("psi examples and sign antisymmetry") {
    const Latent u{0.0, 1.0}, e{1.0, 3.0};
    CHECK(bit_equal(psi(u, e, Direction::positive), Latent{1.0, 2.0}));
    CHECK(bit_equal(psi(u, e, Direction::negative), Latent{-1.0, -2.0}));
    CHECK(count_nonzero(psi(e, e, Direction::positive)) == 0);
    CHECK(count_nonzero(psi(e, e, Direction::negative)) == 0);

    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Latent a = random_latent(rng, 17), b = random_latent(rng, 17);
        const Latent p = psi(a, b, Direction::positive), n = psi(a, b, Direction::negative);
        for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(p[i] == -n[i]);
    }
}

TEST_CASE("mu_mask and gamma examples") {
    CHECK(bit_equal(mu_mask(example_psi, 10.0, 0.75), Latent{0.0, 10.0, 10.0, 0.0}));
    CHECK(bit_equal(gamma(example_psi, 10.0, 0.75), Latent{0.0, -9.0, 5.0, 0.0}));
    CHECK(count_nonzero(mu_mask(example_psi, 0.0, 0.3)) == 0);
    CHECK(count_nonzero(gamma(Latent(Shape{6}), 5.0, 0.5)) == 0);
    CHECK_THROWS_AS(mu_mask(example_psi, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(mu_mask(example_psi, 1.0, 0.0), DomainError);
}

TEST_CASE("sparsity on distinct values is n - ceil(lambda n) + 1") {
    Rng rng(3);
    Latent v(Shape{10000});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (1.0 + double(i));
    CHECK(count_nonzero(mu_mask(v, 1.0, 0.95)) == 501);
    CHECK(count_nonzero(mu_mask(v, 1.0, 0.99)) == 101);
    CHECK(count_nonzero(mu_mask(v, 1.0, 0.5)) == 5001);
}

TEST_CASE("mask matches brute force and ties are kept") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 40);
        Latent p = random_latent(rng, n);
        if (trial % 3 == 0)
            for (double& x : p.values()) x = std::round(x * 2.0) / 2.0;  // force ties
        const double lambda = 0.01 + 0.98 * rng.uniform();
        const auto expected = brute_mask(p, lambda);
        const Latent mu = mu_mask(p, 2.5, lambda);
        for (std::size_t i = 0; i < n; ++i) REQUIRE(mu[i] == (expected[i] ? 2.5 : 0.0));
        const Latent g = gamma(p, 2.5, lambda);
        for (std::size_t i = 0; i < n; ++i) REQUIRE(g[i] == mu[i] * p[i]);
    }
}

TEST_CASE("small lambda keeps everything at or above the smallest magnitude") {
    Rng rng(8);
    const Latent p = random_latent(rng, 25);
    const auto expected = brute_mask(p, 0.01);
    const Latent g = gamma(p, 1.0, 0.01);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(g[i] == (expected[i] ? p[i] : 0.0));
    CHECK(count_nonzero(g) == 25);
}

TEST_CASE("gamma is linear in s_e and mask shrinks with lambda") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const Latent p = random_latent(rng, 64);
        const Latent g1 = gamma(p, 1.0, 0.8), g4 = gamma(p, 4.0, 0.8);
        for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(g4[i] == 4.0 * g1[i]);
        std::size_t previous = p.size() + 1;
        for (double lambda : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
            const std::size_t k = count_nonzero(mu_mask(p, 1.0, lambda));
            REQUIRE(k <= previous);
            previous = k;
        }
    }
}

TEST_CASE("combine_concepts gating and disjoint sum") {
    const ConceptEdit a("A", 5.0, 0.5, 3), b("B", 5.0, 0.5, 6, Direction::positive, 0.5);
    const Latent ga{1.0, 0.0, 0.0, 2.0}, gb{0.0, 3.0, -4.0, 0.0};
    const std::vector<Latent> gammas{ga, gb};
    const std::vector<ConceptEdit> edits{a, b};

    CHECK(bit_equal(combine_concepts(std::span(gammas).first(1), std::span(edits).first(1), 3), ga));
    CHECK(count_nonzero(combine_concepts(gammas, edits, 2)) == 0);
    CHECK(bit_equal(combine_concepts(gammas, edits, 4), ga));
    const Latent both = combine_concepts(gammas, edits, 6);
    CHECK(bit_equal(both, Latent{1.0, 1.5, -2.0, 2.0}));
    CHECK(bit_equal(combine_concepts(gammas, edits, std::nullopt), both));
    CHECK_THROWS_AS(combine_concepts(std::span(gammas).first(1), edits, 0), ShapeError);
}

TEST_CASE("momentum_update examples") {
    Rng rng(2);
    const Latent nu = random_latent(rng, 5), g = random_latent(rng, 5);
    CHECK(bit_equal(momentum_update(nu, g, 0.0), g));
    CHECK(bit_equal(momentum_update(Latent{2.0}, Latent{4.0}, 0.5), Latent{3.0}));
    const Latent fixed{0.25, -1.5, 8.0};
    CHECK(bit_equal(momentum_update(fixed, fixed, 0.5), fixed));
}

TEST_CASE("iterated momentum matches the closed-form geometric sum") {
    Rng rng(21);
    for (double beta : {0.0, 0.3, 0.5, 0.9, 0.99}) {
        std::vector<Latent> seq;
        for (int k = 0; k < 100; ++k) seq.push_back(random_latent(rng, 8, 3.0));
        Latent nu(Shape{8});
        for (std::size_t t = 0; t < seq.size(); ++t) {
            nu = momentum_update(nu, seq[t], beta);
            for (std::size_t i = 0; i < 8; ++i) {
                double closed = 0.0;
                for (std::size_t k = 0; k <= t; ++k) closed += (1.0 - beta) * std::pow(beta, double(t - k)) * seq[k][i];
                REQUIRE(std::fabs(nu[i] - closed) <= 1e-12);
            }
        }
    }
}

TEST_CASE("sega_step with no concepts is bitwise cfg_term") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const Latent u = random_latent(rng, 9), p = random_latent(rng, 9);
        const double sg = 20.0 * rng.uniform();
        GuidanceState state;
        const GuidanceConfig cfg(std::string("p"), sg, 0.5, 0.7);
        const Latent out = sega_step(state, u, p, {}, cfg);
        REQUIRE(bit_equal(out, cfg_term(u, p, sg)));
        REQUIRE(count_nonzero(state.nu) == 0);
        REQUIRE(state.t == 1);
    }
}

TEST_CASE("sega_step composes gamma with a zero cfg term") {
    GuidanceState state;
    const GuidanceConfig cfg(std::nullopt, 0.0, 0.0, 0.0, {ConceptEdit("A", 10.0, 0.75, 0)});
    const Latent zero(Shape{4});
    const std::vector<Latent> edits{example_psi};
    CHECK(bit_equal(sega_step(state, zero, zero, edits, cfg), Latent{0.0, -9.0, 5.0, 0.0}));
}

TEST_CASE("warmup builds momentum while output stays unguided") {
    Rng rng(41);
    const double beta = 0.6;
    const GuidanceConfig cfg(std::string("p"), 7.5, 0.4, beta,
                             {ConceptEdit("A", 6.0, 0.5, 5), ConceptEdit("B", 3.0, 0.7, 8, Direction::negative)});
    GuidanceState state;
    for (std::size_t t = 0; t < 12; ++t) {
        const Latent u = random_latent(rng, 16), p = random_latent(rng, 16);
        const std::vector<Latent> e{random_latent(rng, 16), random_latent(rng, 16)};
        const Latent nu_before = state.nu.size() ? state.nu : Latent(Shape{16});
        const Latent out = sega_step(state, u, p, e, cfg);

        const std::vector<Latent> gammas{gamma(psi(u, e[0], Direction::positive), 6.0, 0.5),
                                         gamma(psi(u, e[1], Direction::negative), 3.0, 0.7)};
        const Latent ungated = combine_concepts(gammas, cfg.concepts(), std::nullopt);
        REQUIRE(count_nonzero(ungated) > 0);
        const Latent nu_expected = momentum_update(nu_before, ungated, beta);
        REQUIRE(bit_equal(state.nu, nu_expected));

        const Latent cfg_only = cfg_term(u, p, 7.5);
        if (t < 5) {
            REQUIRE(bit_equal(out, cfg_only));
            REQUIRE(count_nonzero(state.nu) > 0);
        } else {
            Latent expected = add(cfg_only, combine_concepts(gammas, cfg.concepts(), t));
            if (t >= 8) expected = add(expected, scale(nu_before, 0.4));
            for (std::size_t i = 0; i < 16; ++i) REQUIRE(out[i] == doctest::Approx(expected[i]).epsilon(1e-14));
        }
    }
}

TEST_CASE("recorded log replays the same outputs") {
    Rng rng(51);
    const GuidanceConfig cfg(std::string("p"), 3.0, 0.3, 0.5, {ConceptEdit("A", 4.0, 0.8, 2)});
    GuidanceState state;
    state.record_gamma = true;
    std::vector<Latent> cfgs, outs;
    for (int t = 0; t < 10; ++t) {
        const Latent u = random_latent(rng, 12), p = random_latent(rng, 12);
        const std::vector<Latent> e{random_latent(rng, 12)};
        outs.push_back(sega_step(state, u, p, e, cfg));
        cfgs.push_back(cfg_term(u, p, 3.0));
    }
    REQUIRE(state.gamma_log.size() == 10);
    for (std::size_t t = 0; t < 10; ++t) {
        CHECK(bit_equal(apply_recorded(state.gamma_log, t, cfgs[t]), outs[t]));
        CHECK(state.gamma_log[t].applied.has_value() == (t >= 2));
    }
    CHECK_THROWS(apply_recorded(state.gamma_log, 10, cfgs[0]));
}

TEST_CASE("hyperparameter ranges are validated") {
    CHECK_THROWS_AS(ConceptEdit("A", 25.0, 0.5, 0), ConfigError);
    CHECK_THROWS_AS(ConceptEdit("A", -1.0, 0.5, 0), ConfigError);
    CHECK_THROWS_AS(ConceptEdit("A", 5.0, 1.0, 0), ConfigError);
    CHECK_THROWS_AS(ConceptEdit("", 5.0, 0.5, 0), ConfigError);
    CHECK_NOTHROW(ConceptEdit("A", 20.0, 0.5, 0));
    CHECK_THROWS_AS(GuidanceConfig(std::nullopt, 21.0), ConfigError);
    CHECK_THROWS_AS(GuidanceConfig(std::nullopt, 1.0, 1.5), ConfigError);
    CHECK_THROWS_AS(GuidanceConfig(std::nullopt, 1.0, 0.5, 1.0), ConfigError);
    try {
        ConceptEdit("A", 25.0, 0.5, 0);
    } catch (const ConfigError& e) {
        CHECK(e.kind() == ConfigError::Kind::range);
        CHECK(std::string(e.what()).find("[0,20]") != std::string::npos);
    }
}

TEST_CASE("non-finite estimates are reported") {
    GuidanceState state;
    const GuidanceConfig cfg(std::nullopt, 1.0, 0.0, 0.0, {ConceptEdit("A", 1.0, 0.5, 0)});
    const std::vector<Latent> e{Latent{std::nan(""), 1.0}};
    CHECK_THROWS_AS(sega_step(state, Latent{0.0, 0.0}, Latent{0.0, 0.0}, e, cfg), NumericError);
}
