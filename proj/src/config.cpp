#include "sega/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "sega/error.hpp"
#include "sega/sampler.hpp"

namespace sega {

namespace {

const std::set<std::string> top_level_keys{"model", "schedule", "guidance", "seeds", "grid",
                                           "target", "diag", "outputs", "assertions"};

void reject_unknown_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw ConfigError(path.empty() ? key : path + "." + key, "unknown field");
    }
}

const json& require_object(const json& v, const std::string& path) {
    if (!v.is_object()) throw ConfigError(path, "expected an object");
    return v;
}

double read_number(const json& obj, const std::string& key, const std::string& path, std::optional<double> fallback) {
    const std::string at = path + "." + key;
    if (!obj.contains(key) || obj.at(key).is_null()) {
        if (fallback) return *fallback;
        throw ConfigError(at, "required field missing");
    }
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(at, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(at, "must be finite");
    return d;
}

std::size_t read_count(const json& obj, const std::string& key, const std::string& path, std::optional<std::size_t> fallback) {
    const std::string at = path + "." + key;
    if (!obj.contains(key) || obj.at(key).is_null()) {
        if (fallback) return *fallback;
        throw ConfigError(at, "required field missing");
    }
    const json& v = obj.at(key);
    if (v.is_number_integer()) {
        if (v.get<std::int64_t>() < 0 && !v.is_number_unsigned())
            throw ConfigError(at, "must be non-negative", ConfigError::Kind::range);
        return v.get<std::size_t>();
    }
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d >= 0 && std::floor(d) == d && d < 1e15) return static_cast<std::size_t>(d);
    }
    throw ConfigError(at, "expected a non-negative integer");
}

std::vector<double> read_vector(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) throw ConfigError(path + "[" + std::to_string(i) + "]", "expected a number");
        out.push_back(v[i].get<double>());
    }
    return out;
}

/// ConfigError from a type constructor carries a bare field name; prefix it.
template <typename F>
auto with_prefix(const std::string& prefix, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError& e) {
        if (e.field().empty()) throw ConfigError(prefix, e.message(), e.kind());
        if (e.field().rfind(prefix, 0) == 0) throw;
        throw ConfigError(prefix + "." + e.field(), e.message(), e.kind());
    }
}

MixtureComponent parse_component(const json& v, const std::string& path) {
    require_object(v, path);
    reject_unknown_keys(v, path, {"weight", "mean", "covariance", "variance", "diagonal", "labels"});
    MixtureComponent c;
    c.weight = read_number(v, "weight", path, std::nullopt);
    if (!v.contains("mean")) throw ConfigError(path + ".mean", "required field missing");
    c.mean = read_vector(v.at("mean"), path + ".mean");
    const std::size_t d = c.mean.size();
    const int forms = int(v.contains("covariance")) + int(v.contains("variance")) + int(v.contains("diagonal"));
    if (forms > 1) throw ConfigError(path, "give only one of covariance, variance, diagonal");
    c.covariance.assign(d * d, 0.0);
    if (v.contains("covariance")) {
        const json& m = v.at("covariance");
        if (!m.is_array() || m.size() != d) {
            throw ConfigError(path + ".covariance", "expected a " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
        }
        for (std::size_t i = 0; i < d; ++i) {
            auto row = read_vector(m[i], path + ".covariance[" + std::to_string(i) + "]");
            if (row.size() != d) {
                throw ConfigError(path + ".covariance[" + std::to_string(i) + "]", "expected " + std::to_string(d) + " entries");
            }
            std::copy(row.begin(), row.end(), c.covariance.begin() + static_cast<std::ptrdiff_t>(i * d));
        }
    } else if (v.contains("diagonal")) {
        auto diag = read_vector(v.at("diagonal"), path + ".diagonal");
        if (diag.size() != d) throw ConfigError(path + ".diagonal", "expected " + std::to_string(d) + " entries");
        for (std::size_t i = 0; i < d; ++i) c.covariance[i * d + i] = diag[i];
    } else {
        const double var = read_number(v, "variance", path, 1.0);
        for (std::size_t i = 0; i < d; ++i) c.covariance[i * d + i] = var;
    }
    if (v.contains("labels")) {
        const json& labels = v.at("labels");
        if (!labels.is_array()) throw ConfigError(path + ".labels", "expected an array of strings");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (!labels[i].is_string()) throw ConfigError(path + ".labels[" + std::to_string(i) + "]", "expected a string");
            c.labels.push_back(labels[i].get<std::string>());
        }
    }
    return c;
}

// Parsed text yields unsigned numbers, but documents built in code carry
// signed ones.
bool is_seed_value(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

std::vector<std::uint64_t> parse_seeds_value(const json& v) {
    if (is_seed_value(v)) return {v.get<std::uint64_t>()};
    if (v.is_array()) {
        std::vector<std::uint64_t> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!is_seed_value(v[i])) throw ConfigError("seeds[" + std::to_string(i) + "]", "expected a non-negative integer");
            out.push_back(v[i].get<std::uint64_t>());
        }
        if (out.empty()) throw ConfigError("seeds", "needs at least one seed");
        return out;
    }
    if (v.is_object()) {
        reject_unknown_keys(v, "seeds", {"start", "count"});
        const std::size_t start = read_count(v, "start", "seeds", 0);
        const std::size_t count = read_count(v, "count", "seeds", std::nullopt);
        if (count == 0) throw ConfigError("seeds.count", "must be at least 1");
        std::vector<std::uint64_t> out(count);
        for (std::size_t i = 0; i < count; ++i) out[i] = start + i;
        return out;
    }
    throw ConfigError("seeds", "expected an integer, an array of integers or {start, count}");
}

/// `concepts[0].edit_scale` -> {"concepts", "0", "edit_scale"}
std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string current;
    for (std::size_t i = 0; i < path.size(); ++i) {
        const char c = path[i];
        if (c == '.') {
            if (!current.empty()) parts.push_back(current);
            current.clear();
        } else if (c == '[') {
            if (!current.empty()) parts.push_back(current);
            current.clear();
            const auto close = path.find(']', i);
            if (close == std::string::npos) throw ConfigError(path, "unbalanced '[' in grid path");
            parts.push_back(path.substr(i + 1, close - i - 1));
            i = close;
        } else {
            current += c;
        }
    }
    if (!current.empty()) parts.push_back(current);
    if (parts.empty()) throw ConfigError(path, "empty grid path");
    return parts;
}

std::string to_pointer(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) out += "/" + p;
    return out;
}

}  // namespace

json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
        std::size_t line = 1, column = 1;
        for (std::size_t i = 0; i + 1 < byte; ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        throw ConfigError(source, "JSON syntax error at line " + std::to_string(line) + ", column " +
                                      std::to_string(column) + ": " + e.what());
    }
}

MixtureModel parse_mixture(const json& value, const std::string& path) {
    require_object(value, path);
    reject_unknown_keys(value, path, {"components"});
    if (!value.contains("components") || !value.at("components").is_array()) {
        throw ConfigError(path + ".components", "expected an array of components");
    }
    std::vector<MixtureComponent> components;
    const json& list = value.at("components");
    for (std::size_t k = 0; k < list.size(); ++k) {
        components.push_back(parse_component(list[k], path + ".components[" + std::to_string(k) + "]"));
    }
    return with_prefix(path, [&] { return MixtureModel(std::move(components)); });
}

std::vector<ConceptEdit> parse_concepts(const json& value, const std::string& path) {
    if (!value.is_array()) throw ConfigError(path, "expected an array of concepts");
    std::vector<ConceptEdit> out;
    for (std::size_t i = 0; i < value.size(); ++i) {
        const std::string at = path + "[" + std::to_string(i) + "]";
        const json& c = require_object(value[i], at);
        reject_unknown_keys(c, at, {"condition", "edit_scale", "threshold", "warmup", "direction", "weight"});
        if (!c.contains("condition") || !c.at("condition").is_string()) {
            throw ConfigError(at + ".condition", "required string field");
        }
        Direction direction = Direction::positive;
        if (c.contains("direction")) {
            if (!c.at("direction").is_string()) throw ConfigError(at + ".direction", "expected a string");
            direction = with_prefix(at, [&] { return direction_from_string(c.at("direction").get<std::string>()); });
        }
        const double edit_scale = read_number(c, "edit_scale", at, std::nullopt);
        const double threshold = read_number(c, "threshold", at, std::nullopt);
        const std::size_t warmup = read_count(c, "warmup", at, 0);
        const double weight = read_number(c, "weight", at, 1.0);
        out.push_back(with_prefix(at, [&] {
            return ConceptEdit(c.at("condition").get<std::string>(), edit_scale, threshold, warmup, direction, weight);
        }));
    }
    return out;
}

GuidanceConfig parse_guidance(const json& value, const std::string& path) {
    require_object(value, path);
    reject_unknown_keys(value, path, {"prompt", "guidance_scale", "momentum_scale", "momentum_beta", "concepts"});
    Condition prompt;
    if (value.contains("prompt") && !value.at("prompt").is_null()) {
        if (!value.at("prompt").is_string()) throw ConfigError(path + ".prompt", "expected a tag string or null");
        prompt = value.at("prompt").get<std::string>();
    }
    const double s_g = read_number(value, "guidance_scale", path, 1.0);
    const double s_m = read_number(value, "momentum_scale", path, 0.0);
    const double beta = read_number(value, "momentum_beta", path, 0.0);
    std::vector<ConceptEdit> concepts;
    if (value.contains("concepts")) concepts = parse_concepts(value.at("concepts"), path + ".concepts");
    return with_prefix(path, [&] { return GuidanceConfig(prompt, s_g, s_m, beta, std::move(concepts)); });
}

json to_json(const ConceptEdit& e) {
    return {{"condition", e.condition()},   {"edit_scale", e.edit_scale()},
            {"threshold", e.threshold()},   {"warmup", e.warmup()},
            {"direction", to_string(e.direction())}, {"weight", e.weight()}};
}

json to_json(const GuidanceConfig& g) {
    json concepts = json::array();
    for (const auto& c : g.concepts()) concepts.push_back(to_json(c));
    return {{"prompt", g.prompt() ? json(*g.prompt()) : json(nullptr)},
            {"guidance_scale", g.guidance_scale()},
            {"momentum_scale", g.momentum_scale()},
            {"momentum_beta", g.momentum_beta()},
            {"concepts", concepts}};
}

json to_json(const MixtureModel& model) {
    json components = json::array();
    const std::size_t d = model.dimension();
    for (const auto& c : model.components()) {
        json cov = json::array();
        for (std::size_t i = 0; i < d; ++i) {
            cov.push_back(std::vector<double>(c.covariance.begin() + static_cast<std::ptrdiff_t>(i * d),
                                              c.covariance.begin() + static_cast<std::ptrdiff_t>((i + 1) * d)));
        }
        components.push_back({{"weight", c.weight}, {"mean", c.mean}, {"covariance", cov}, {"labels", c.labels}});
    }
    return {{"components", components}};
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        return s;
    };
    auto to_u64 = [&](const std::string& s) -> std::uint64_t {
        const std::string t = trim(s);
        if (t.empty() || !std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) {
            throw ConfigError("seeds", "invalid seed \"" + s + "\"");
        }
        return std::stoull(t);
    };
    std::vector<std::uint64_t> out;
    const auto range = text.find("..");
    if (range != std::string::npos) {
        const auto start = to_u64(text.substr(0, range));
        const auto end = to_u64(text.substr(range + 2));
        if (end <= start) throw ConfigError("seeds", "empty seed range \"" + text + "\"");
        for (auto s = start; s < end; ++s) out.push_back(s);
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_u64(item));
    if (out.empty()) throw ConfigError("seeds", "needs at least one seed");
    return out;
}

std::string resolve_grid_path(const json& canonical, const std::string& path) {
    auto parts = split_path(path);
    if (!top_level_keys.count(parts.front())) parts.insert(parts.begin(), "guidance");
    const std::string pointer = to_pointer(parts);
    const json::json_pointer ptr(pointer);
    if (!canonical.contains(ptr)) throw ConfigError("grid." + path, "path does not resolve to a config field");
    const json& target = canonical.at(ptr);
    if (target.is_object() || target.is_array()) {
        throw ConfigError("grid." + path, "path must name a scalar field");
    }
    return pointer;
}

GridAxis parse_grid_flag(const json& canonical, const std::string& flag) {
    const auto eq = flag.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--grid", "expected KEY=V1,V2,... got \"" + flag + "\"");
    GridAxis axis;
    axis.path = flag.substr(0, eq);
    axis.pointer = resolve_grid_path(canonical, axis.path);
    std::stringstream ss(flag.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            axis.values.push_back(json::parse(item));
        } catch (const json::parse_error&) {
            axis.values.push_back(item);
        }
    }
    if (axis.values.empty()) throw ConfigError("--grid", "axis " + axis.path + " has no values");
    return axis;
}

ExperimentConfig parse_config(const json& document) {
    require_object(document, "");
    reject_unknown_keys(document, "", top_level_keys);
    ExperimentConfig cfg;

    if (!document.contains("model")) throw ConfigError("model", "required field missing");
    const json& model = require_object(document.at("model"), "model");
    if (model.contains("blocks")) {
        reject_unknown_keys(model, "model", {"blocks"});
        const json& blocks = model.at("blocks");
        if (!blocks.is_array() || blocks.empty()) throw ConfigError("model.blocks", "expected a non-empty array");
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            cfg.model_blocks.push_back(parse_mixture(blocks[b], "model.blocks[" + std::to_string(b) + "]"));
        }
        cfg.factorized = true;
    } else {
        cfg.model_blocks.push_back(parse_mixture(model, "model"));
    }

    std::size_t steps = 50;
    if (document.contains("schedule")) {
        const json& s = require_object(document.at("schedule"), "schedule");
        reject_unknown_keys(s, "schedule", {"kind", "steps"});
        if (s.contains("kind") && s.at("kind") != "cosine") throw ConfigError("schedule.kind", "only \"cosine\" is supported");
        steps = read_count(s, "steps", "schedule", 50);
    }
    cfg.schedule = Schedule::cosine(steps);

    cfg.guidance = parse_guidance(document.value("guidance", json::object()), "guidance");

    if (document.contains("seeds")) cfg.seeds = parse_seeds_value(document.at("seeds"));

    if (document.contains("target") && !document.at("target").is_null()) {
        if (!document.at("target").is_string()) throw ConfigError("target", "expected a tag string");
        cfg.target = document.at("target").get<std::string>();
    }
    if (document.contains("diag")) {
        const json& d = require_object(document.at("diag"), "diag");
        reject_unknown_keys(d, "diag", {"step"});
        cfg.diag_step = read_count(d, "step", "diag", 0);
        if (cfg.diag_step >= steps) throw ConfigError("diag.step", "must be below schedule.steps");
    }
    if (document.contains("outputs")) {
        const json& o = require_object(document.at("outputs"), "outputs");
        reject_unknown_keys(o, "outputs", {"directory", "formats"});
        if (o.contains("directory")) {
            if (!o.at("directory").is_string()) throw ConfigError("outputs.directory", "expected a string");
            cfg.outputs.directory = o.at("directory").get<std::string>();
        }
        if (o.contains("formats")) {
            const json& f = o.at("formats");
            if (!f.is_array()) throw ConfigError("outputs.formats", "expected an array");
            cfg.outputs.formats.clear();
            for (const auto& item : f) {
                if (item != "csv" && item != "json") throw ConfigError("outputs.formats", "formats are \"csv\" and \"json\"");
                cfg.outputs.formats.push_back(item.get<std::string>());
            }
        }
    }
    if (document.contains("assertions")) {
        if (!document.at("assertions").is_array()) throw ConfigError("assertions", "expected an array");
        cfg.assertions = document.at("assertions");
        for (std::size_t i = 0; i < cfg.assertions.size(); ++i) {
            const std::string at = "assertions[" + std::to_string(i) + "]";
            const json& a = require_object(cfg.assertions[i], at);
            reject_unknown_keys(a, at, {"kind", "min", "max"});
            const std::string kind = a.value("kind", "");
            if (kind != "spearman" && kind != "target_posterior") {
                throw ConfigError(at + ".kind", "expected \"spearman\" or \"target_posterior\"");
            }
            if (!a.contains("min") && !a.contains("max")) throw ConfigError(at, "needs min and/or max");
        }
    }

    // Tags must resolve before anything runs.
    auto estimator = cfg.make_estimator();
    check_conditions(*estimator, cfg.guidance);
    if (cfg.target) {
        try {
            estimator->check_condition(cfg.target);
        } catch (const ConfigError& e) {
            throw ConfigError("target", e.message());
        }
    } else if (!cfg.guidance.concepts().empty()) {
        cfg.target = cfg.guidance.concepts().front().condition();
    } else if (auto tags = estimator->tags(); !tags.empty()) {
        cfg.target = tags.front();
    }

    // Canonical document: every default explicit.
    json canonical;
    if (cfg.factorized) {
        json blocks = json::array();
        for (const auto& b : cfg.model_blocks) blocks.push_back(to_json(b));
        canonical["model"] = {{"blocks", blocks}};
    } else {
        canonical["model"] = to_json(cfg.model_blocks.front());
    }
    canonical["schedule"] = {{"kind", "cosine"}, {"steps", steps}};
    canonical["guidance"] = to_json(cfg.guidance);
    canonical["seeds"] = cfg.seeds;
    canonical["target"] = cfg.target ? json(*cfg.target) : json(nullptr);
    canonical["diag"] = {{"step", cfg.diag_step}};
    canonical["outputs"] = {{"directory", cfg.outputs.directory}, {"formats", cfg.outputs.formats}};
    canonical["assertions"] = cfg.assertions;

    // Object form lists axes in key order (JSON objects are sorted here);
    // the array form [{"path", "values"}, ...] keeps the written order and is
    // what the canonical document uses.
    json grid = json::array();
    auto add_axis = [&](const std::string& path, const json& values, const std::string& at) {
        if (!values.is_array() || values.empty()) throw ConfigError(at, "expected a non-empty array of values");
        GridAxis axis{path, resolve_grid_path(canonical, path), {}};
        for (const auto& existing : cfg.grid)
            if (existing.pointer == axis.pointer) throw ConfigError(at, "axis repeats " + existing.path);
        for (const auto& v : values) axis.values.push_back(v);
        cfg.grid.push_back(std::move(axis));
        grid.push_back({{"path", path}, {"values", values}});
    };
    if (document.contains("grid") && !document.at("grid").is_null()) {
        const json& g = document.at("grid");
        if (g.is_array()) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                const std::string at = "grid[" + std::to_string(i) + "]";
                const json& entry = require_object(g[i], at);
                reject_unknown_keys(entry, at, {"path", "values"});
                if (!entry.contains("path") || !entry.at("path").is_string())
                    throw ConfigError(at + ".path", "expected a string");
                if (!entry.contains("values")) throw ConfigError(at + ".values", "required field missing");
                add_axis(entry.at("path").get<std::string>(), entry.at("values"), at + ".values");
            }
        } else {
            for (const auto& [path, values] : require_object(g, "grid").items()) add_axis(path, values, "grid." + path);
        }
    }
    canonical["grid"] = grid;
    cfg.document = std::move(canonical);
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot open \"" + path + "\"");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(parse_json_text(buffer.str(), path));
}

std::shared_ptr<const MixtureEstimator> ExperimentConfig::make_estimator() const {
    if (factorized) return std::make_shared<const MixtureEstimator>(model_blocks, schedule);
    return std::make_shared<const MixtureEstimator>(model_blocks.front(), schedule);
}

ExperimentConfig apply_overrides(const ExperimentConfig& config,
                                 const std::vector<std::pair<std::string, json>>& point) {
    json doc = config.document;
    doc["grid"] = json::array();
    for (const auto& [pointer, value] : point) doc[json::json_pointer(pointer)] = value;
    return parse_config(doc);
}

}  // namespace sega
