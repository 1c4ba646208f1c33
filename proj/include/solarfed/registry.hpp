#pragma once

#include <functional>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "solarfed/service.hpp"

namespace solarfed {

enum class RegistryErrc { duplicate_prefix, invalid_record, unknown_namespace };

class RegistryError : public std::runtime_error {
public:
    RegistryError(RegistryErrc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    RegistryErrc code() const { return code_; }

private:
    RegistryErrc code_;
};

struct ListedService {
    ServiceRecord record;
    bool stale = false;
};

// The director's service registry. Concurrent reads, serialized mutations;
// resolve works over an atomic snapshot. Records whose last heartbeat is
// older than staleness_s are excluded from resolution but still listed.
class Registry {
public:
    explicit Registry(std::int64_t staleness_s = 300,
                      std::function<std::int64_t()> now_fn = nullptr);

    // Validates and inserts; same-name registration replaces the record and
    // refreshes last_heartbeat. Throws RegistryError.
    void register_service(ServiceRecord record);

    ResolutionResult resolve(const ObjectPath& path, const std::optional<GeoPoint>& client) const;

    std::vector<ListedService> list() const;  // name order
    size_t size() const;
    std::int64_t staleness_s() const { return staleness_s_; }

private:
    std::int64_t staleness_s_;
    std::function<std::int64_t()> now_;
    mutable std::shared_mutex mu_;
    std::vector<ServiceRecord> services_;  // kept sorted by name

    bool fresh(const ServiceRecord& r, std::int64_t now) const {
        return now - r.last_heartbeat <= staleness_s_;
    }
};

}  // namespace solarfed
