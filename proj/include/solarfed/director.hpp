#pragma once

// Federation director: registration endpoint, path resolution / redirect for
// clients, registry listing, and the accounting sink. One director per
// federation; services heartbeat by re-registering.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "solarfed/accounting.hpp"
#include "solarfed/geo.hpp"
#include "solarfed/registry.hpp"

#include "httplib.h"

namespace solarfed {

struct DirectorConfig {
    std::string listen_addr = "127.0.0.1:0";
    std::string geo_table_path;           // optional: empty means no GeoIP table
    std::filesystem::path data_dir = "."; // accounting log lives here
    std::int64_t staleness_s = 300;
};

DirectorConfig director_config_from_json(const nlohmann::json& j);

class DirectorServer {
public:
    explicit DirectorServer(DirectorConfig cfg);
    ~DirectorServer();

    DirectorServer(const DirectorServer&) = delete;
    DirectorServer& operator=(const DirectorServer&) = delete;

    // Binds and starts serving on a background thread. Returns false when the
    // address cannot be bound (port in use).
    bool start();
    void stop();

    int port() const { return port_; }
    std::string base_url() const;

    Registry& registry() { return registry_; }
    TransferLog& transfer_log() { return *log_; }

private:
    void install_routes();
    std::optional<GeoPoint> client_geo(const httplib::Request& req) const;
    void handle_resolution(const httplib::Request& req, httplib::Response& res, bool redirect);

    DirectorConfig cfg_;
    GeoTable geo_table_;
    Registry registry_;
    std::unique_ptr<TransferLog> log_;
    httplib::Server server_;
    std::thread serve_thread_;
    std::atomic<bool> running_{false};
    int port_ = 0;
};

}  // namespace solarfed
