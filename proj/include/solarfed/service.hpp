#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "solarfed/geo.hpp"
#include "solarfed/path.hpp"

#include "json.hpp"

namespace solarfed {

enum class ServiceKind { origin, cache };

std::string to_string(ServiceKind k);
std::optional<ServiceKind> parse_service_kind(const std::string& s);

// A registered origin or cache as the director sees it.
struct ServiceRecord {
    std::string name;
    ServiceKind kind = ServiceKind::origin;
    std::string base_url;
    GeoPoint location;
    std::vector<NamespacePrefix> prefixes;  // non-empty iff origin
    std::int64_t registered_at = 0;
    std::int64_t last_heartbeat = 0;
};

// Director resolution for one object: owning origin plus caches in rank order.
struct ResolutionResult {
    ObjectPath object;
    std::string origin_url;
    std::vector<std::string> cache_urls;
};

// Orders caches for a client: ascending haversine distance, ties (and the
// unknown-location fallback) lexicographic by service name. Output is a
// permutation of the input.
std::vector<ServiceRecord> rank_caches(const std::optional<GeoPoint>& client,
                                       std::vector<ServiceRecord> caches);

// "http://host:port" + "/data" + canonical path text.
std::string object_url(const std::string& base_url, const ObjectPath& path);

nlohmann::json service_record_to_json(const ServiceRecord& r);
ServiceRecord service_record_from_json(const nlohmann::json& j);  // throws on bad shape

}  // namespace solarfed
