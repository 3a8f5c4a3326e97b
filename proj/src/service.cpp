#include "sega/service.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "sega/diagnostics.hpp"
#include "sega/error.hpp"
#include "sega/parallel.hpp"

namespace sega {

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t secs = std::chrono::system_clock::to_time_t(now);
    const auto millis =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(millis));
    return out;
}

ServiceError from_config_error(const ConfigError& e, const std::string& prefix, int schema_status, int range_status) {
    std::string field = e.field();
    if (!prefix.empty()) field = field.empty() ? prefix : prefix + "." + field;
    const bool range = e.kind() == ConfigError::Kind::range;
    return ServiceError(range ? range_status : schema_status, range ? "out_of_range" : "invalid_body", field,
                        e.message());
}

json latent_json(const Latent& z) { return z.data(); }

}  // namespace

json ServiceError::body() const {
    return {{"error", {{"code", code_}, {"field", field_}, {"message", what()}}}};
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(404, "not_found", "id", "no session \"" + id + "\"");
    return it->second;
}

std::vector<std::string> SessionManager::list() const {
    std::shared_lock lock(sessions_mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, s] : sessions_) ids.push_back(id);
    return ids;
}

json SessionManager::create(const json& body) {
    if (!body.is_object()) throw ServiceError(400, "invalid_body", "body", "expected a JSON object");
    for (const auto& [key, value] : body.items()) {
        if (key != "config" && key != "particles" && key != "seed" && key != "id") {
            throw ServiceError(400, "invalid_body", key, "unknown field");
        }
    }
    if (!body.contains("config")) throw ServiceError(400, "invalid_body", "config", "required field missing");

    std::size_t count = 1;
    if (body.contains("particles")) {
        const json& p = body.at("particles");
        if (!p.is_number_integer()) throw ServiceError(400, "invalid_body", "particles", "expected an integer");
        const auto n = p.get<long long>();
        if (n < 1 || n > static_cast<long long>(max_particles)) {
            throw ServiceError(400, "invalid_body", "particles", "must lie in [1,10000], got " + std::to_string(n));
        }
        count = static_cast<std::size_t>(n);
    }
    std::uint64_t seed = 0;
    if (body.contains("seed")) {
        if (!body.at("seed").is_number_unsigned()) {
            throw ServiceError(400, "invalid_body", "seed", "expected a non-negative integer");
        }
        seed = body.at("seed").get<std::uint64_t>();
    }

    auto session = std::make_shared<Session>();
    try {
        session->config = parse_config(body.at("config"));
    } catch (const ConfigError& e) {
        throw from_config_error(e, "config", 400, 400);
    }
    session->creation_config = session->config.document;
    session->estimator = session->config.make_estimator();
    session->guidance = session->config.guidance;
    session->seed = seed;
    session->particles.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        session->particles.push_back(make_particle(*session->estimator, seed + i, true, true));
    }
    session->created = session->updated = utc_now();

    {
        std::unique_lock lock(sessions_mutex_);
        if (body.contains("id")) {
            if (!body.at("id").is_string() || body.at("id").get<std::string>().empty()) {
                throw ServiceError(400, "invalid_body", "id", "expected a non-empty string");
            }
            session->id = body.at("id").get<std::string>();
            if (sessions_.count(session->id)) {
                throw ServiceError(409, "conflict", "id", "session \"" + session->id + "\" already exists");
            }
        } else {
            do {
                session->id = "s" + std::to_string(next_id_++);
            } while (sessions_.count(session->id));
        }
        sessions_[session->id] = session;
    }
    std::lock_guard lock(session->mutex);
    return snapshot(*session);
}

json SessionManager::get(const std::string& id) const {
    auto session = find(id);
    std::lock_guard lock(session->mutex);
    return snapshot(*session);
}

void SessionManager::remove(const std::string& id) {
    std::unique_lock lock(sessions_mutex_);
    if (sessions_.erase(id) == 0) throw ServiceError(404, "not_found", "id", "no session \"" + id + "\"");
}

json SessionManager::update_edits(const std::string& id, const json& body) {
    auto session = find(id);
    const json* list = &body;
    std::string prefix = "concepts";
    if (body.is_object()) {
        for (const auto& [key, value] : body.items()) {
            if (key != "concepts") throw ServiceError(400, "invalid_body", key, "unknown field");
        }
        if (!body.contains("concepts")) throw ServiceError(400, "invalid_body", "concepts", "required field missing");
        list = &body.at("concepts");
    }
    std::vector<ConceptEdit> concepts;
    try {
        concepts = parse_concepts(*list, prefix);
    } catch (const ConfigError& e) {
        throw from_config_error(e, "", 400, 422);
    }

    std::lock_guard lock(session->mutex);
    GuidanceConfig updated = session->guidance.with_concepts(concepts);
    try {
        check_conditions(*session->estimator, updated);
    } catch (const ConfigError& e) {
        std::string field = e.field();
        if (field.rfind("guidance.", 0) == 0) field = field.substr(9);
        throw ServiceError(422, "out_of_range", field, e.message());
    }
    session->guidance = std::move(updated);
    json edits = json::array();
    for (const auto& c : concepts) edits.push_back(to_json(c));
    session->actions.push_back({{"action", "edits"}, {"concepts", edits}});
    session->updated = utc_now();
    return {{"id", session->id}, {"t", session->particles.front().state.t}, {"guidance", to_json(session->guidance)}};
}

json SessionManager::advance(const std::string& id, const json& body) {
    auto session = find(id);
    if (!body.is_object() || !body.contains("steps")) {
        throw ServiceError(400, "invalid_body", "steps", "required field missing");
    }
    if (!body.at("steps").is_number_integer() || body.at("steps").get<long long>() < 1) {
        throw ServiceError(400, "invalid_body", "steps", "expected a positive integer");
    }
    const auto steps = static_cast<std::size_t>(body.at("steps").get<long long>());

    std::lock_guard lock(session->mutex);
    const std::size_t total = session->config.schedule.steps();
    const std::size_t t = session->particles.front().state.t;
    if (t >= total) throw ServiceError(409, "conflict", "steps", "session already at t=T=" + std::to_string(total));
    if (t + steps > total) {
        throw ServiceError(409, "conflict", "steps",
                           "advancing " + std::to_string(steps) + " steps from t=" + std::to_string(t) +
                               " would pass T=" + std::to_string(total));
    }
    parallel_for(session->particles.size(), workers_, [&](std::size_t i) {
        Particle& p = session->particles[i];
        for (std::size_t k = 0; k < steps; ++k) advance_particle(*session->estimator, session->guidance, p);
        // Only particle 0 keeps its full log for the inspector; the rest keep
        // the latest step for mask statistics.
        if (i != 0 && p.state.gamma_log.size() > 1) {
            p.state.gamma_log.erase(p.state.gamma_log.begin(), p.state.gamma_log.end() - 1);
        }
    });
    session->actions.push_back({{"action", "advance"}, {"steps", steps}});
    session->updated = utc_now();
    return summary(*session);
}

std::string SessionManager::snapshot_to_disk(const std::string& id, const std::string& directory) const {
    const json state = get(id);
    std::filesystem::create_directories(directory);
    const auto path = std::filesystem::path(directory) / (id + ".json");
    std::ofstream out(path);
    if (!out) throw ServiceError(500, "io_error", "path", "cannot write " + path.string());
    out << state.dump(2) << "\n";
    return path.string();
}

json SessionManager::summary(const Session& s) const {
    const std::size_t total = s.config.schedule.steps();
    const std::size_t t = s.particles.front().state.t;
    const std::size_t diffusion_time = total - t;
    const std::size_t d = s.estimator->dimension();
    const double n = static_cast<double>(s.particles.size());

    json stats = json::object();
    json posterior = json::object();
    for (const auto& tag : s.estimator->tags()) {
        double sum = 0.0;
        for (const auto& p : s.particles) sum += std::exp(s.estimator->log_posterior(p.z, diffusion_time, tag));
        posterior[tag] = sum / n;
    }
    stats["posterior"] = posterior;
    stats["target"] = s.config.target ? json(*s.config.target) : json(nullptr);
    stats["target_posterior"] = s.config.target ? posterior.at(*s.config.target) : json(nullptr);

    std::vector<double> centroid(d, 0.0);
    std::vector<double> pooled;
    pooled.reserve(s.particles.size() * d);
    for (const auto& p : s.particles) {
        for (std::size_t j = 0; j < d; ++j) centroid[j] += p.z[j] / n;
        pooled.insert(pooled.end(), p.z.data().begin(), p.z.data().end());
    }
    stats["centroid"] = centroid;

    double sparsity = 0.0;
    std::size_t counted = 0;
    for (const auto& p : s.particles) {
        if (p.state.gamma_log.empty()) continue;
        for (const auto& mask : p.state.gamma_log.back().masks) {
            sparsity += static_cast<double>(std::count(mask.begin(), mask.end(), std::uint8_t{1})) /
                        static_cast<double>(mask.size());
            ++counted;
        }
    }
    stats["mask_sparsity"] = counted ? json(sparsity / static_cast<double>(counted)) : json(nullptr);
    if (pooled.size() >= 2) {
        const DistributionReport r = distribution_report(pooled);
        stats["distribution"] = {{"count", r.count},
                                 {"mean", r.mean},
                                 {"variance", r.variance},
                                 {"skewness", r.skewness},
                                 {"excess_kurtosis", r.excess_kurtosis}};
    }

    json particles = nullptr;
    if (d <= max_raw_dimension) {
        particles = json::array();
        for (const auto& p : s.particles) particles.push_back(latent_json(p.z));
    }
    return {{"id", s.id}, {"t", t}, {"T", total}, {"diffusion_time", diffusion_time}, {"particles", particles},
            {"stats", stats}};
}

json SessionManager::snapshot(const Session& s) const {
    json out = summary(s);
    const Particle& lead = s.particles.front();
    json log = json::array();
    for (const auto& r : lead.state.gamma_log) {
        json masks = json::array();
        for (const auto& m : r.masks) {
            masks.push_back(static_cast<double>(std::count(m.begin(), m.end(), std::uint8_t{1})) /
                            static_cast<double>(m.size()));
        }
        log.push_back({{"step", r.step},
                       {"combined", latent_json(r.combined)},
                       {"applied", r.applied ? latent_json(*r.applied) : json(nullptr)},
                       {"mask_nonzero_fraction", masks}});
    }
    out["seed"] = s.seed;
    out["particle_count"] = s.particles.size();
    out["dimension"] = s.estimator->dimension();
    out["config"] = s.creation_config;
    out["guidance"] = to_json(s.guidance);
    out["momentum"] = lead.state.nu.empty() ? json::array() : latent_json(lead.state.nu);
    out["gamma_log"] = log;
    out["actions"] = s.actions;
    out["created"] = s.created;
    out["updated"] = s.updated;
    return out;
}

SteeringServer::SteeringServer(std::size_t worker_threads, std::string snapshot_directory)
    : manager_(worker_threads), snapshot_directory_(std::move(snapshot_directory)),
      server_(std::make_unique<httplib::Server>()) {
    auto& srv = *server_;

    auto reply = [](httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };
    auto handle = [reply](httplib::Response& res, auto&& fn) {
        try {
            fn();
        } catch (const ServiceError& e) {
            reply(res, e.status(), e.body());
        } catch (const std::exception& e) {
            reply(res, 500, ServiceError(500, "internal", "", e.what()).body());
        }
    };
    auto parse_body = [](const httplib::Request& req) {
        try {
            return req.body.empty() ? json::object() : json::parse(req.body);
        } catch (const json::parse_error& e) {
            throw ServiceError(400, "invalid_json", "body", e.what());
        }
    };

    srv.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
    srv.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    srv.Get("/v1/sessions", [=, this](const httplib::Request&, httplib::Response& res) {
        handle(res, [&] { reply(res, 200, {{"sessions", manager_.list()}}); });
    });
    srv.Post("/v1/sessions", [=, this](const httplib::Request& req, httplib::Response& res) {
        handle(res, [&] { reply(res, 201, manager_.create(parse_body(req))); });
    });
    srv.Get(R"(/v1/sessions/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        handle(res, [&] { reply(res, 200, manager_.get(req.matches[1])); });
    });
    srv.Delete(R"(/v1/sessions/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
        handle(res, [&] {
            manager_.remove(req.matches[1]);
            res.status = 204;
        });
    });
    srv.Put(R"(/v1/sessions/([^/]+)/edits)", [=, this](const httplib::Request& req, httplib::Response& res) {
        handle(res, [&] { reply(res, 200, manager_.update_edits(req.matches[1], parse_body(req))); });
    });
    srv.Post(R"(/v1/sessions/([^/]+)/advance)", [=, this](const httplib::Request& req, httplib::Response& res) {
        handle(res, [&] { reply(res, 200, manager_.advance(req.matches[1], parse_body(req))); });
    });
    srv.Post(R"(/v1/sessions/([^/]+)/snapshot)", [=, this](const httplib::Request& req, httplib::Response& res) {
        handle(res, [&] {
            if (snapshot_directory_.empty()) {
                throw ServiceError(404, "not_found", "snapshot", "server started without a snapshot directory");
            }
            reply(res, 200, {{"path", manager_.snapshot_to_disk(req.matches[1], snapshot_directory_)}});
        });
    });
}

SteeringServer::~SteeringServer() { stop(); }

int SteeringServer::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    if (!server_->bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void SteeringServer::serve() { server_->listen_after_bind(); }

int SteeringServer::start(const std::string& host, int port) {
    const int bound = bind(host, port);
    if (bound <= 0) throw std::runtime_error("cannot bind " + host);
    thread_ = std::thread([this] { serve(); });
    server_->wait_until_ready();
    return bound;
}

void SteeringServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace sega
