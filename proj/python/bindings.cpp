#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "sega/config.hpp"
#include "sega/error.hpp"
#include "sega/experiment.hpp"
#include "sega/guidance.hpp"

namespace py = pybind11;

namespace {

using Vec = std::vector<double>;

sega::Latent latent(const Vec& v) { return sega::Latent(v); }

std::vector<sega::Latent> latents(const std::vector<Vec>& vs) {
    std::vector<sega::Latent> out;
    out.reserve(vs.size());
    for (const auto& v : vs) out.push_back(latent(v));
    return out;
}

sega::ExperimentConfig config_from(const std::string& text) {
    return sega::parse_config(sega::parse_json_text(text));
}

}  // namespace

PYBIND11_MODULE(_sega, m) {
    m.doc() = "Semantic guidance engine and Gaussian-mixture diffusion testbed";

    py::register_exception<sega::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<sega::ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<sega::DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<sega::NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::enum_<sega::Direction>(m, "Direction")
        .value("positive", sega::Direction::positive)
        .value("negative", sega::Direction::negative);

    m.def(
        "percentile_threshold", [](const Vec& v, double lam) { return sega::percentile_threshold(v, lam); },
        py::arg("values"), py::arg("lam"));
    m.def(
        "cfg_term",
        [](const Vec& u, const Vec& p, double s_g) { return sega::cfg_term(latent(u), latent(p), s_g).data(); },
        py::arg("eps_uncond"), py::arg("eps_prompt"), py::arg("guidance_scale"));
    m.def(
        "psi", [](const Vec& u, const Vec& e, sega::Direction d) { return sega::psi(latent(u), latent(e), d).data(); },
        py::arg("eps_uncond"), py::arg("eps_edit"), py::arg("direction") = sega::Direction::positive);
    m.def(
        "mu_mask", [](const Vec& p, double s_e, double lam) { return sega::mu_mask(latent(p), s_e, lam).data(); },
        py::arg("psi"), py::arg("edit_scale"), py::arg("lam"));
    m.def(
        "gamma", [](const Vec& p, double s_e, double lam) { return sega::gamma(latent(p), s_e, lam).data(); },
        py::arg("psi"), py::arg("edit_scale"), py::arg("lam"));
    m.def(
        "momentum_update",
        [](const Vec& nu, const Vec& g, double beta) { return sega::momentum_update(latent(nu), latent(g), beta).data(); },
        py::arg("nu"), py::arg("gamma_hat"), py::arg("beta"));

    py::class_<sega::ConceptEdit>(m, "ConceptEdit")
        .def(py::init<std::string, double, double, std::size_t, sega::Direction, double>(), py::arg("condition"),
             py::arg("edit_scale"), py::arg("threshold"), py::arg("warmup") = 0,
             py::arg("direction") = sega::Direction::positive, py::arg("weight") = 1.0)
        .def_property_readonly("condition", &sega::ConceptEdit::condition)
        .def_property_readonly("edit_scale", &sega::ConceptEdit::edit_scale)
        .def_property_readonly("threshold", &sega::ConceptEdit::threshold)
        .def_property_readonly("warmup", &sega::ConceptEdit::warmup)
        .def_property_readonly("direction", &sega::ConceptEdit::direction)
        .def_property_readonly("weight", &sega::ConceptEdit::weight);

    py::class_<sega::GuidanceConfig>(m, "GuidanceConfig")
        .def(py::init<sega::Condition, double, double, double, std::vector<sega::ConceptEdit>>(), py::arg("prompt"),
             py::arg("guidance_scale"), py::arg("momentum_scale") = 0.0, py::arg("momentum_beta") = 0.0,
             py::arg("concepts") = std::vector<sega::ConceptEdit>{})
        .def_property_readonly("concepts", &sega::GuidanceConfig::concepts);

    py::class_<sega::GuidanceState>(m, "GuidanceState")
        .def(py::init<>())
        .def_readonly("t", &sega::GuidanceState::t)
        .def_property_readonly("nu", [](const sega::GuidanceState& s) { return s.nu.data(); });

    m.def(
        "sega_step",
        [](sega::GuidanceState& state, const Vec& u, const Vec& p, const std::vector<Vec>& edits,
           const sega::GuidanceConfig& config) {
            const auto e = latents(edits);
            return sega::sega_step(state, latent(u), latent(p), e, config).data();
        },
        py::arg("state"), py::arg("eps_uncond"), py::arg("eps_prompt"), py::arg("eps_edits"), py::arg("config"));

    // Experiment entry points take and return JSON text, the same documents
    // the CLI reads and writes.
    m.def(
        "canonical_config", [](const std::string& text) { return config_from(text).document.dump(); },
        py::arg("config"));
    m.def(
        "run",
        [](const std::string& text, std::size_t jobs) {
            const auto config = config_from(text);
            py::gil_scoped_release release;
            return sega::to_json(sega::run_experiment(config, jobs)).dump();
        },
        py::arg("config"), py::arg("jobs") = 1);
    m.def(
        "ablate",
        [](const std::string& text, std::size_t jobs, bool long_form) {
            const auto config = config_from(text);
            py::gil_scoped_release release;
            return sega::to_json(sega::run_ablation(config, jobs, long_form)).dump();
        },
        py::arg("config"), py::arg("jobs") = 1, py::arg("long_form") = false);
    m.def(
        "diag",
        [](const std::string& text, std::size_t jobs) {
            const auto config = config_from(text);
            py::gil_scoped_release release;
            return sega::to_json(sega::run_diag(config, jobs)).dump();
        },
        py::arg("config"), py::arg("jobs") = 1);
}
