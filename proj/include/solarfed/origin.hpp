#pragma once

// Origin service: exports a local directory subtree as one federation
// namespace prefix over HTTP. GET/HEAD serve files, PUT writes them back
// atomically; every completed transfer is reported to the director.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "solarfed/emitter.hpp"
#include "solarfed/geo.hpp"
#include "solarfed/path.hpp"
#include "solarfed/registration.hpp"

#include "httplib.h"
#include "json.hpp"

namespace solarfed {

struct OriginConfig {
    std::string name;
    std::string prefix;  // canonical namespace prefix, e.g. "/bbso"
    std::filesystem::path root_dir;
    std::string director_url;  // empty: standalone (no registration/accounting)
    std::string listen_addr = "127.0.0.1:0";
    GeoPoint location;
    std::int64_t heartbeat_s = 100;  // director staleness default 300 / 3
};

OriginConfig origin_config_from_json(const nlohmann::json& j);

class OriginServer {
public:
    explicit OriginServer(OriginConfig cfg);
    ~OriginServer();

    OriginServer(const OriginServer&) = delete;
    OriginServer& operator=(const OriginServer&) = delete;

    bool start();  // false when the listen address cannot be bound
    void stop();

    int port() const { return port_; }
    std::string base_url() const;
    bool registration_failed() const;
    void drain_accounting();  // flush pending records (tests, shutdown)

private:
    void install_routes();
    // Maps an object path to a file under root_dir, enforcing the prefix and
    // the no-escape rule. Sets the response status itself on rejection.
    std::optional<std::filesystem::path> map_object(const std::string& raw_path,
                                                    httplib::Response& res,
                                                    ObjectPath* parsed_out);
    std::string client_name(const httplib::Request& req) const;

    OriginConfig cfg_;
    NamespacePrefix prefix_;
    std::filesystem::path root_;  // canonical root_dir
    httplib::Server server_;
    std::unique_ptr<AccountingEmitter> emitter_;
    std::unique_ptr<RegistrationLoop> registration_;
    std::thread serve_thread_;
    std::atomic<bool> running_{false};
    std::atomic<std::uint64_t> put_seq_{0};
    int port_ = 0;
};

}  // namespace solarfed
