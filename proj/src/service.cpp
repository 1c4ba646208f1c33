#include "solarfed/service.hpp"

#include <algorithm>

namespace solarfed {

std::string to_string(ServiceKind k) {
    return k == ServiceKind::origin ? "origin" : "cache";
}

std::optional<ServiceKind> parse_service_kind(const std::string& s) {
    if (s == "origin") return ServiceKind::origin;
    if (s == "cache") return ServiceKind::cache;
    return std::nullopt;
}

std::vector<ServiceRecord> rank_caches(const std::optional<GeoPoint>& client,
                                       std::vector<ServiceRecord> caches) {
    if (!client) {
        std::sort(caches.begin(), caches.end(),
                  [](const ServiceRecord& a, const ServiceRecord& b) { return a.name < b.name; });
        return caches;
    }
    std::vector<std::pair<double, size_t>> keyed;
    keyed.reserve(caches.size());
    for (size_t i = 0; i < caches.size(); ++i) {
        keyed.emplace_back(haversine_km(*client, caches[i].location), i);
    }
    std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return caches[a.second].name < caches[b.second].name;
    });
    std::vector<ServiceRecord> out;
    out.reserve(caches.size());
    for (const auto& [dist, idx] : keyed) {
        (void)dist;
        out.push_back(caches[idx]);
    }
    return out;
}

std::string object_url(const std::string& base_url, const ObjectPath& path) {
    std::string base = base_url;
    while (!base.empty() && base.back() == '/') base.pop_back();
    return base + "/data" + url_encode_path(path.text());
}

nlohmann::json service_record_to_json(const ServiceRecord& r) {
    nlohmann::json prefixes = nlohmann::json::array();
    for (const auto& p : r.prefixes) prefixes.push_back(p.text());
    return nlohmann::json{{"name", r.name},
                          {"kind", to_string(r.kind)},
                          {"base_url", r.base_url},
                          {"lat", r.location.lat},
                          {"lon", r.location.lon},
                          {"prefixes", prefixes},
                          {"registered_at", r.registered_at},
                          {"last_heartbeat", r.last_heartbeat}};
}

ServiceRecord service_record_from_json(const nlohmann::json& j) {
    ServiceRecord r;
    r.name = j.at("name").get<std::string>();
    auto kind = parse_service_kind(j.at("kind").get<std::string>());
    if (!kind) throw std::runtime_error("unknown service kind");
    r.kind = *kind;
    r.base_url = j.at("base_url").get<std::string>();
    r.location.lat = j.at("lat").get<double>();
    r.location.lon = j.at("lon").get<double>();
    if (j.contains("prefixes")) {
        for (const auto& p : j.at("prefixes")) {
            r.prefixes.push_back(ObjectPath::parse(p.get<std::string>()));
        }
    }
    r.registered_at = j.value("registered_at", std::int64_t{0});
    r.last_heartbeat = j.value("last_heartbeat", std::int64_t{0});
    return r;
}

}  // namespace solarfed
