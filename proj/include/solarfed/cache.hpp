#pragma once

// Pull-through cache service. Serves objects from the local store, fetching
// the full object from its origin (located via the director) on miss, with
// request coalescing and watermark LRU eviction in CacheStore.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "solarfed/cache_store.hpp"
#include "solarfed/emitter.hpp"
#include "solarfed/geo.hpp"
#include "solarfed/path.hpp"
#include "solarfed/registration.hpp"

#include "httplib.h"
#include "json.hpp"

namespace solarfed {

struct CacheConfig {
    std::string name;
    std::string listen_addr = "127.0.0.1:0";
    std::string director_url;
    GeoPoint location;
    std::filesystem::path store_dir;
    std::uint64_t capacity = std::uint64_t{1} << 30;
    double high_watermark = 0.90;
    double low_watermark = 0.80;
    std::int64_t heartbeat_s = 100;
};

CacheConfig cache_config_from_json(const nlohmann::json& j);

class CacheServer {
public:
    explicit CacheServer(CacheConfig cfg);  // throws on invalid watermarks
    ~CacheServer();

    CacheServer(const CacheServer&) = delete;
    CacheServer& operator=(const CacheServer&) = delete;

    bool start();
    void stop();

    int port() const { return port_; }
    std::string base_url() const;
    bool registration_failed() const;
    CacheStore& store() { return *store_; }
    void drain_accounting();

private:
    void install_routes();
    void lead_fetch(const ObjectPath& object);
    void serve_outcome(httplib::Response& res, bool hit, std::shared_ptr<PinnedFile> file,
                       std::uint64_t size, const std::string& object_text,
                       const std::string& client);

    CacheConfig cfg_;
    std::unique_ptr<CacheStore> store_;
    httplib::Server server_;
    std::unique_ptr<AccountingEmitter> emitter_;
    std::unique_ptr<RegistrationLoop> registration_;
    std::thread serve_thread_;
    std::atomic<bool> running_{false};
    int port_ = 0;
};

}  // namespace solarfed
