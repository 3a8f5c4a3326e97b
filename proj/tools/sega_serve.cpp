// sega_serve: HTTP steering service for live guided-diffusion sessions.

#include <CLI11.hpp>

#include <pthread.h>
#include <signal.h>

#include <cstdlib>
#include <iostream>
#include <thread>

#include "sega/service.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Steering service for semantic-guidance sessions"};
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
    std::string snapshot_dir;
    if (const char* env = std::getenv(sega::port_env_var); env && *env) port = std::atoi(env);
    app.add_option("--host", host, "Listen address");
    app.add_option("--port", port, "Listen port (default 8080 or $SEGA_FORGE_PORT)")->check(CLI::Range(0, 65535));
    app.add_option("--jobs", jobs, "Worker threads per advance call")->check(CLI::PositiveNumber);
    app.add_option("--snapshot-dir", snapshot_dir, "Enable POST /v1/sessions/{id}/snapshot into this directory");
    CLI11_PARSE(app, argc, argv);

    // Block the shutdown signals before any thread starts; one thread waits
    // for them and stops the server outside signal-handler context.
    sigset_t shutdown_signals;
    sigemptyset(&shutdown_signals);
    sigaddset(&shutdown_signals, SIGINT);
    sigaddset(&shutdown_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &shutdown_signals, nullptr);

    sega::SteeringServer server(jobs, snapshot_dir);
    int bound = 0;
    try {
        bound = server.bind(host, port);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    if (bound <= 0) {
        std::cerr << "cannot bind " << host << ":" << port << "\n";
        return 1;
    }
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&shutdown_signals, &sig);
        server.stop();
    });
    waiter.detach();
    std::cerr << "listening on http://" << host << ":" << bound << std::endl;
    server.serve();
    return 0;
}
