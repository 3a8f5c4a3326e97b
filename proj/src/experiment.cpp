#include "sega/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "sega/csv.hpp"
#include "sega/error.hpp"
#include "sega/parallel.hpp"
#include "sega/stats.hpp"

namespace sega {

namespace {

std::string cell_value(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_float()) return csv::number(v.get<double>());
    return v.dump();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << contents;
}

bool wants(const std::vector<std::string>& formats, const char* format) {
    return std::find(formats.begin(), formats.end(), format) != formats.end();
}

std::vector<double> axis_numbers(const GridAxis& axis) {
    std::vector<double> out;
    for (const auto& v : axis.values) {
        if (!v.is_number()) throw ConfigError("grid." + axis.path, "needs numeric values for rank statistics");
        out.push_back(v.get<double>());
    }
    return out;
}

json point_json(const GridPoint& point, const std::vector<GridAxis>& axes) {
    json out = json::object();
    for (std::size_t a = 0; a < point.size() && a < axes.size(); ++a) out[axes[a].path] = point[a].second;
    return out;
}

}  // namespace

bool RunResult::ok() const {
    return std::all_of(assertions.begin(), assertions.end(), [](const AssertionOutcome& a) { return a.passed; });
}

std::vector<GridPoint> expand_grid(const ExperimentConfig& config) {
    std::vector<GridPoint> points{GridPoint{}};
    for (const auto& axis : config.grid) {
        std::vector<GridPoint> next;
        for (const auto& prefix : points) {
            for (const auto& value : axis.values) {
                GridPoint p = prefix;
                p.emplace_back(axis.pointer, value);
                next.push_back(std::move(p));
            }
        }
        points = std::move(next);
    }
    return points;
}

CellOutcome run_cell(const ExperimentConfig& config, std::size_t jobs, bool keep_logs) {
    const auto estimator = config.make_estimator();
    const auto tags = estimator->tags();
    const bool guided = !config.guidance.concepts().empty();
    const GuidanceConfig baseline_config = config.guidance.with_concepts({});

    CellOutcome cell;
    cell.seeds.resize(config.seeds.size());
    parallel_for(config.seeds.size(), jobs, [&](std::size_t i) {
        SeedOutcome& out = cell.seeds[i];
        out.seed = config.seeds[i];
        RunOptions options;
        options.keep_trajectory = false;
        options.record_gamma = keep_logs;
        options.record_masks = guided;
        GuidedRun run = run_guided(*estimator, config.guidance, out.seed, options);
        out.final_sample = run.final_sample;
        for (const auto& tag : tags) out.posteriors.push_back(estimator->data_posterior(out.final_sample, tag));
        out.target_posterior = config.target ? estimator->data_posterior(out.final_sample, *config.target)
                                             : std::numeric_limits<double>::quiet_NaN();
        if (guided) {
            RunOptions base_options;
            base_options.keep_trajectory = false;
            base_options.record_gamma = false;
            const GuidedRun base = run_guided(*estimator, baseline_config, out.seed, base_options);
            out.displacement = l2_distance(out.final_sample, base.final_sample);
        }
        out.log = std::move(run.state.gamma_log);
    });

    double posterior_sum = 0.0, displacement_sum = 0.0;
    for (const auto& s : cell.seeds) {
        posterior_sum += s.target_posterior;
        displacement_sum += s.displacement;
    }
    const double n = static_cast<double>(cell.seeds.size());
    cell.mean_target_posterior = posterior_sum / n;
    cell.mean_displacement = displacement_sum / n;

    if (guided) {
        std::vector<const GammaLog*> logs;
        for (const auto& s : cell.seeds) logs.push_back(&s.log);
        cell.masks = mask_report(logs);
    }
    std::vector<double> pooled;
    for (const auto& s : cell.seeds) pooled.insert(pooled.end(), s.final_sample.data().begin(), s.final_sample.data().end());
    if (pooled.size() >= 2) cell.final_distribution = distribution_report(pooled);
    if (!keep_logs) {
        for (auto& s : cell.seeds) s.log.clear();
    }
    return cell;
}

RunResult run_experiment(const ExperimentConfig& config, std::size_t jobs) {
    RunResult result{config, config.make_estimator()->tags(), {}, {}};
    for (const auto& point : expand_grid(config)) {
        CellOutcome cell = run_cell(apply_overrides(config, point), jobs);
        cell.point = point;
        result.cells.push_back(std::move(cell));
    }

    for (const auto& a : config.assertions) {
        const std::string kind = a.at("kind").get<std::string>();
        const double lo = a.value("min", -std::numeric_limits<double>::infinity());
        const double hi = a.value("max", std::numeric_limits<double>::infinity());
        if (kind == "spearman") {
            if (config.grid.size() != 1) {
                throw ConfigError("assertions", "spearman assertion needs exactly one grid axis");
            }
            std::vector<double> metric;
            for (const auto& c : result.cells) metric.push_back(c.mean_target_posterior);
            const double rho = spearman(axis_numbers(config.grid.front()), metric);
            result.assertions.push_back(
                {"spearman(" + config.grid.front().path + ", mean target posterior)", rho, rho >= lo && rho <= hi});
        } else {
            for (std::size_t i = 0; i < result.cells.size(); ++i) {
                const double v = result.cells[i].mean_target_posterior;
                result.assertions.push_back(
                    {"cell " + std::to_string(i) + " mean target posterior", v, v >= lo && v <= hi});
            }
        }
    }
    return result;
}

AblationResult run_ablation(const ExperimentConfig& config, std::size_t jobs, bool long_form) {
    if (config.grid.empty()) throw ConfigError("grid", "ablate needs grid axes");
    if (!long_form && config.grid.size() != 2) {
        throw ConfigError("grid", "matrix output needs exactly 2 axes, got " + std::to_string(config.grid.size()) +
                                      " (use --long for long-form output)");
    }
    AblationResult result{config, config.grid, {}, {}, {}};
    for (const auto& point : expand_grid(config)) {
        CellOutcome cell = run_cell(apply_overrides(config, point), jobs);
        cell.point = point;
        result.cells.push_back(std::move(cell));
    }
    if (config.grid.size() == 2) {
        const std::size_t rows = config.grid[0].values.size();
        const std::size_t cols = config.grid[1].values.size();
        result.target_posterior.assign(rows, std::vector<double>(cols));
        result.displacement.assign(rows, std::vector<double>(cols));
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const CellOutcome& cell = result.cells[r * cols + c];
                result.target_posterior[r][c] = cell.mean_target_posterior;
                result.displacement[r][c] = cell.mean_displacement;
            }
        }
    }
    return result;
}

DiagResult run_diag(const ExperimentConfig& config, std::size_t jobs) {
    const auto estimator = config.make_estimator();
    check_conditions(*estimator, config.guidance);
    const std::size_t steps = config.schedule.steps();
    const std::size_t t = steps - config.diag_step;
    const auto& concepts = config.guidance.concepts();
    const std::size_t kinds = 2 + concepts.size();

    // values[seed][kind]
    std::vector<std::vector<Latent>> values(config.seeds.size());
    parallel_for(config.seeds.size(), jobs, [&](std::size_t i) {
        Particle p = make_particle(*estimator, config.seeds[i], false, false);
        while (p.state.t < config.diag_step) advance_particle(*estimator, config.guidance, p);
        values[i].push_back(estimator->estimate(p.z, t, std::nullopt));
        values[i].push_back(config.guidance.prompt() ? estimator->estimate(p.z, t, config.guidance.prompt())
                                                     : values[i].front());
        for (const auto& c : concepts) values[i].push_back(estimator->estimate(p.z, t, c.condition()));
    });

    DiagResult result;
    result.step = config.diag_step;
    result.diffusion_time = t;
    for (std::size_t k = 0; k < kinds; ++k) {
        std::vector<double> pooled;
        for (const auto& per_seed : values) pooled.insert(pooled.end(), per_seed[k].data().begin(), per_seed[k].data().end());
        std::string name = k == 0 ? "unconditional" : k == 1 ? "prompt" : "concept" + std::to_string(k - 2);
        result.reports.emplace_back(std::move(name), distribution_report(pooled));
    }
    return result;
}

std::string run_rows_csv(const RunResult& result) {
    std::vector<std::string> header{"cell"};
    for (const auto& axis : result.config.grid) header.push_back(axis.path);
    header.insert(header.end(), {"seed", "target", "target_posterior"});
    for (const auto& tag : result.tags) header.push_back("posterior[" + tag + "]");
    header.push_back("displacement");
    const std::size_t d = result.cells.empty() || result.cells.front().seeds.empty()
                              ? 0
                              : result.cells.front().seeds.front().final_sample.size();
    for (std::size_t j = 0; j < d; ++j) header.push_back("x" + std::to_string(j));
    std::string out = csv::row(header);
    for (std::size_t c = 0; c < result.cells.size(); ++c) {
        const auto& cell = result.cells[c];
        for (const auto& s : cell.seeds) {
            std::vector<std::string> row{std::to_string(c)};
            for (const auto& [pointer, value] : cell.point) row.push_back(cell_value(value));
            row.push_back(std::to_string(s.seed));
            row.push_back(result.config.target.value_or(""));
            row.push_back(csv::number(s.target_posterior));
            for (double p : s.posteriors) row.push_back(csv::number(p));
            row.push_back(csv::number(s.displacement));
            for (double x : s.final_sample.values()) row.push_back(csv::number(x));
            out += csv::row(row);
        }
    }
    return out;
}

std::string cell_summary_csv(const RunResult& result) {
    std::vector<std::string> header{"cell"};
    for (const auto& axis : result.config.grid) header.push_back(axis.path);
    header.insert(header.end(), {"seeds", "mean_target_posterior", "mean_displacement", "mask_nonzero_fraction"});
    std::string out = csv::row(header);
    for (std::size_t c = 0; c < result.cells.size(); ++c) {
        const auto& cell = result.cells[c];
        std::vector<std::string> row{std::to_string(c)};
        for (const auto& [pointer, value] : cell.point) row.push_back(cell_value(value));
        row.push_back(std::to_string(cell.seeds.size()));
        row.push_back(csv::number(cell.mean_target_posterior));
        row.push_back(csv::number(cell.mean_displacement));
        row.push_back(cell.masks ? csv::number(cell.masks->nonzero_fraction) : "");
        out += csv::row(row);
    }
    return out;
}

std::string ablation_matrix_csv(const AblationResult& result, const std::vector<std::vector<double>>& matrix) {
    if (result.axes.size() != 2) throw ConfigError("grid", "matrix output needs exactly 2 axes");
    std::vector<std::string> header{result.axes[0].path + " \\ " + result.axes[1].path};
    for (const auto& v : result.axes[1].values) header.push_back(cell_value(v));
    std::string out = csv::row(header);
    for (std::size_t r = 0; r < matrix.size(); ++r) {
        std::vector<std::string> row{cell_value(result.axes[0].values[r])};
        for (double v : matrix[r]) row.push_back(csv::number(v));
        out += csv::row(row);
    }
    return out;
}

std::string ablation_long_csv(const AblationResult& result) {
    std::vector<std::string> header;
    for (const auto& axis : result.axes) header.push_back(axis.path);
    header.insert(header.end(), {"mean_target_posterior", "mean_displacement"});
    std::string out = csv::row(header);
    for (const auto& cell : result.cells) {
        std::vector<std::string> row;
        for (const auto& [pointer, value] : cell.point) row.push_back(cell_value(value));
        row.push_back(csv::number(cell.mean_target_posterior));
        row.push_back(csv::number(cell.mean_displacement));
        out += csv::row(row);
    }
    return out;
}

json to_json(const RunResult& result) {
    json cells = json::array();
    for (const auto& cell : result.cells) {
        json c{{"point", point_json(cell.point, result.config.grid)},
               {"seeds", cell.seeds.size()},
               {"mean_target_posterior", cell.mean_target_posterior},
               {"mean_displacement", cell.mean_displacement}};
        if (cell.masks) c["mask_report"] = to_json(*cell.masks);
        if (cell.final_distribution) c["final_sample_distribution"] = to_json(*cell.final_distribution);
        cells.push_back(std::move(c));
    }
    json assertions = json::array();
    for (const auto& a : result.assertions) {
        assertions.push_back({{"description", a.description}, {"value", a.value}, {"passed", a.passed}});
    }
    return {{"config", result.config.document}, {"tags", result.tags}, {"cells", cells}, {"assertions", assertions}};
}

json to_json(const AblationResult& result) {
    json axes = json::array();
    for (const auto& a : result.axes) axes.push_back({{"path", a.path}, {"values", a.values}});
    json cells = json::array();
    for (const auto& cell : result.cells) {
        cells.push_back({{"point", point_json(cell.point, result.axes)},
                         {"mean_target_posterior", cell.mean_target_posterior},
                         {"mean_displacement", cell.mean_displacement}});
    }
    json out{{"config", result.config.document}, {"axes", axes}, {"cells", cells}};
    if (!result.target_posterior.empty()) {
        out["target_posterior"] = result.target_posterior;
        out["displacement"] = result.displacement;
    }
    return out;
}

json to_json(const DiagResult& result) {
    json reports = json::object();
    for (const auto& [name, report] : result.reports) reports[name] = to_json(report);
    return {{"step", result.step}, {"diffusion_time", result.diffusion_time}, {"reports", reports}};
}

void write_run_outputs(const RunResult& result, const std::string& directory, const std::vector<std::string>& formats) {
    const std::filesystem::path dir(directory);
    std::filesystem::create_directories(dir);
    if (wants(formats, "csv")) {
        write_file(dir / "runs.csv", run_rows_csv(result));
        write_file(dir / "cells.csv", cell_summary_csv(result));
        std::string masks;
        for (std::size_t c = 0; c < result.cells.size(); ++c) {
            if (!result.cells[c].masks) continue;
            std::string series = mask_series_csv(*result.cells[c].masks);
            const auto header_end = series.find('\n') + 1;
            if (masks.empty()) masks = "cell," + series.substr(0, header_end);
            std::size_t pos = header_end;
            while (pos < series.size()) {
                const auto end = series.find('\n', pos) + 1;
                masks += std::to_string(c) + "," + series.substr(pos, end - pos);
                pos = end;
            }
        }
        if (!masks.empty()) write_file(dir / "masks.csv", masks);
    }
    if (wants(formats, "json")) write_file(dir / "report.json", to_json(result).dump(2) + "\n");
}

void write_ablation_outputs(const AblationResult& result, const std::string& directory,
                            const std::vector<std::string>& formats) {
    const std::filesystem::path dir(directory);
    std::filesystem::create_directories(dir);
    if (wants(formats, "csv")) {
        write_file(dir / "ablate_long.csv", ablation_long_csv(result));
        if (result.axes.size() == 2) {
            write_file(dir / "ablate_target_posterior.csv", ablation_matrix_csv(result, result.target_posterior));
            write_file(dir / "ablate_displacement.csv", ablation_matrix_csv(result, result.displacement));
        }
    }
    if (wants(formats, "json")) write_file(dir / "ablate.json", to_json(result).dump(2) + "\n");
}

void write_diag_outputs(const DiagResult& result, const std::string& directory, const std::vector<std::string>& formats) {
    const std::filesystem::path dir(directory);
    std::filesystem::create_directories(dir);
    if (wants(formats, "csv")) {
        std::string summary = csv::row({"estimate", "count", "mean", "variance", "skewness", "excess_kurtosis", "bandwidth"});
        for (const auto& [name, r] : result.reports) {
            summary += csv::row({name, std::to_string(r.count), csv::number(r.mean), csv::number(r.variance),
                                 csv::number(r.skewness), csv::number(r.excess_kurtosis), csv::number(r.kde.bandwidth)});
            write_file(dir / ("diag_" + name + "_hist.csv"), histogram_csv(r));
            write_file(dir / ("diag_" + name + "_kde.csv"), kde_csv(r));
        }
        write_file(dir / "diag_summary.csv", summary);
    }
    if (wants(formats, "json")) write_file(dir / "diag.json", to_json(result).dump(2) + "\n");
}

}  // namespace sega
