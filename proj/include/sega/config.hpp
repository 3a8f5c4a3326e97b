#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sega/estimator.hpp"
#include "sega/guidance.hpp"
#include "sega/mixture.hpp"
#include "sega/schedule.hpp"

namespace sega {

using json = nlohmann::json;

/// Environment variable overriding the seed list of a config file.
inline constexpr const char* seed_env_var = "SEGA_FORGE_SEED";

struct GridAxis {
    /// Dotted path as written by the user, e.g. `concepts[0].edit_scale`.
    std::string path;
    /// JSON pointer into the canonical document.
    std::string pointer;
    std::vector<json> values;
};

struct OutputSpec {
    std::string directory = "sega_out";
    std::vector<std::string> formats{"csv", "json"};
};

/// Parsed experiment / session configuration. `document` is the canonical
/// form with every default spelled out; re-parsing it yields the same config.
struct ExperimentConfig {
    json document;
    std::vector<MixtureModel> model_blocks;
    bool factorized = false;
    Schedule schedule = Schedule::cosine(50);
    GuidanceConfig guidance{std::nullopt, 1.0};
    std::vector<std::uint64_t> seeds{0};
    std::vector<GridAxis> grid;
    /// Tag whose data posterior is the concept-expression metric.
    std::optional<std::string> target;
    OutputSpec outputs;
    json assertions = json::array();
    /// Sampling-loop step at which diag evaluates estimates.
    std::size_t diag_step = 0;

    std::shared_ptr<const MixtureEstimator> make_estimator() const;
};

/// Parses JSON text; syntax errors become ConfigError carrying line and column.
json parse_json_text(const std::string& text, const std::string& source = "config");

/// Validates a config document. Errors carry the dotted field path.
ExperimentConfig parse_config(const json& document);
ExperimentConfig load_config_file(const std::string& path);

std::vector<ConceptEdit> parse_concepts(const json& value, const std::string& path = "guidance.concepts");
GuidanceConfig parse_guidance(const json& value, const std::string& path = "guidance");
MixtureModel parse_mixture(const json& value, const std::string& path = "model");

json to_json(const ConceptEdit& edit);
json to_json(const GuidanceConfig& config);
json to_json(const MixtureModel& model);

/// "1,2,3", "7" or "start..end" (end exclusive).
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

/// Resolves `concepts[0].edit_scale`-style paths against the canonical
/// document. Paths not starting with a top-level section are looked up
/// under `guidance`. Throws ConfigError when nothing resolves.
std::string resolve_grid_path(const json& canonical, const std::string& path);

/// Parses `KEY=V1,V2,...`.
GridAxis parse_grid_flag(const json& canonical, const std::string& flag);

/// Copy of `config` with the grid point applied and the grid removed.
ExperimentConfig apply_overrides(const ExperimentConfig& config, const std::vector<std::pair<std::string, json>>& point);

}  // namespace sega
