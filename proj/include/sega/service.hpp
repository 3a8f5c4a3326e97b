#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sega/config.hpp"
#include "sega/sampler.hpp"

namespace httplib {
class Server;
}

namespace sega {

/// Environment variable consulted for the listening port.
inline constexpr const char* port_env_var = "SEGA_FORGE_PORT";
inline constexpr std::size_t max_particles = 10'000;
/// Particle coordinates are returned raw up to this dimension.
inline constexpr std::size_t max_raw_dimension = 8;

/// A request failure with its HTTP status and the offending field/resource.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, std::string code, std::string field, const std::string& message)
        : std::runtime_error(message), status_(status), code_(std::move(code)), field_(std::move(field)) {}

    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }
    const std::string& field() const noexcept { return field_; }
    json body() const;

private:
    int status_;
    std::string code_;
    std::string field_;
};

/// In-memory steering sessions. Calls on different sessions run
/// concurrently; calls on one session are serialized, so snapshots never see
/// a half-applied step.
class SessionManager {
public:
    explicit SessionManager(std::size_t worker_threads = 1) : workers_(worker_threads) {}

    /// Body: {"config": {...}, "particles": N, "seed": S, "id": optional}.
    json create(const json& body);
    json get(const std::string& id) const;
    void remove(const std::string& id);
    /// Body: array of concepts, or {"concepts": [...]}. Momentum is kept.
    json update_edits(const std::string& id, const json& body);
    /// Body: {"steps": k}.
    json advance(const std::string& id, const json& body);
    /// Writes the get() payload to `<directory>/<id>.json`.
    std::string snapshot_to_disk(const std::string& id, const std::string& directory) const;

    std::vector<std::string> list() const;

private:
    struct Session {
        std::string id;
        json creation_config;
        ExperimentConfig config;
        std::shared_ptr<const MixtureEstimator> estimator;
        GuidanceConfig guidance{std::nullopt, 1.0};
        std::uint64_t seed = 0;
        std::vector<Particle> particles;
        json actions = json::array();
        std::string created;
        std::string updated;
        mutable std::mutex mutex;
    };

    std::shared_ptr<Session> find(const std::string& id) const;
    json summary(const Session& s) const;
    json snapshot(const Session& s) const;

    std::size_t workers_;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_id_ = 1;
};

/// HTTP/1.1 JSON facade over a SessionManager.
///   POST   /v1/sessions
///   GET    /v1/sessions/{id}
///   DELETE /v1/sessions/{id}
///   PUT    /v1/sessions/{id}/edits
///   POST   /v1/sessions/{id}/advance
///   POST   /v1/sessions/{id}/snapshot   (only with a snapshot directory)
class SteeringServer {
public:
    explicit SteeringServer(std::size_t worker_threads = 1, std::string snapshot_directory = "");
    ~SteeringServer();
    SteeringServer(const SteeringServer&) = delete;
    SteeringServer& operator=(const SteeringServer&) = delete;

    /// Binds `host:port` (port 0 picks a free port) and returns the port.
    int bind(const std::string& host, int port);
    /// Blocks serving requests until stop().
    void serve();
    /// bind + serve on a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();

    SessionManager& sessions() noexcept { return manager_; }

private:
    SessionManager manager_;
    std::string snapshot_directory_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace sega
