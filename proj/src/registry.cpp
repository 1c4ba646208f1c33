#include "solarfed/registry.hpp"

#include <algorithm>
#include <ctime>
#include <mutex>

namespace solarfed {

Registry::Registry(std::int64_t staleness_s, std::function<std::int64_t()> now_fn)
    : staleness_s_(staleness_s),
      now_(now_fn ? std::move(now_fn) : [] { return static_cast<std::int64_t>(::time(nullptr)); }) {}

void Registry::register_service(ServiceRecord record) {
    if (record.name.empty())
        throw RegistryError(RegistryErrc::invalid_record, "service name empty");
    if (!geo_point_valid(record.location))
        throw RegistryError(RegistryErrc::invalid_record, "location out of range");
    if (record.base_url.rfind("http://", 0) != 0 && record.base_url.rfind("https://", 0) != 0)
        throw RegistryError(RegistryErrc::invalid_record, "base_url must be absolute http(s)");
    if (record.kind == ServiceKind::origin) {
        if (record.prefixes.empty())
            throw RegistryError(RegistryErrc::invalid_record, "origin needs at least one prefix");
        for (size_t i = 0; i < record.prefixes.size(); ++i) {
            for (size_t j = i + 1; j < record.prefixes.size(); ++j) {
                if (record.prefixes[i] == record.prefixes[j])
                    throw RegistryError(RegistryErrc::invalid_record, "duplicate prefix in record");
            }
        }
    } else if (!record.prefixes.empty()) {
        throw RegistryError(RegistryErrc::invalid_record, "cache must not export prefixes");
    }
    while (!record.base_url.empty() && record.base_url.back() == '/') record.base_url.pop_back();

    const std::int64_t now = now_();

    std::unique_lock lock(mu_);

    for (const auto& existing : services_) {
        if (existing.name == record.name) continue;  // replacement candidate
        if (existing.kind != ServiceKind::origin) continue;
        for (const auto& p : existing.prefixes) {
            for (const auto& q : record.prefixes) {
                if (p == q)
                    throw RegistryError(RegistryErrc::duplicate_prefix,
                                        "prefix " + q.text() + " already registered by " +
                                            existing.name);
            }
        }
    }

    record.last_heartbeat = now;
    auto it = std::find_if(services_.begin(), services_.end(),
                           [&](const ServiceRecord& s) { return s.name == record.name; });
    if (it != services_.end()) {
        record.registered_at = it->registered_at;
        *it = std::move(record);
    } else {
        record.registered_at = now;
        services_.insert(std::upper_bound(services_.begin(), services_.end(), record,
                                          [](const ServiceRecord& a, const ServiceRecord& b) {
                                              return a.name < b.name;
                                          }),
                         std::move(record));
    }
}

ResolutionResult Registry::resolve(const ObjectPath& path,
                                   const std::optional<GeoPoint>& client) const {
    const std::int64_t now = now_();

    std::shared_lock lock(mu_);

    std::vector<NamespacePrefix> prefixes;
    std::vector<const ServiceRecord*> owners;
    std::vector<ServiceRecord> caches;
    for (const auto& s : services_) {
        if (!fresh(s, now)) continue;
        if (s.kind == ServiceKind::origin) {
            for (const auto& p : s.prefixes) {
                prefixes.push_back(p);
                owners.push_back(&s);
            }
        } else {
            caches.push_back(s);
        }
    }

    auto matched = match_prefix(path, prefixes);
    if (!matched)
        throw RegistryError(RegistryErrc::unknown_namespace,
                            "no origin exports a prefix of " + path.text());
    const ServiceRecord* owner = nullptr;
    for (size_t i = 0; i < prefixes.size(); ++i) {
        if (prefixes[i] == *matched) {
            owner = owners[i];
            break;
        }
    }

    ResolutionResult result;
    result.object = path;
    result.origin_url = object_url(owner->base_url, path);
    for (const auto& c : rank_caches(client, std::move(caches))) {
        result.cache_urls.push_back(object_url(c.base_url, path));
    }
    return result;
}

std::vector<ListedService> Registry::list() const {
    const std::int64_t now = now_();
    std::shared_lock lock(mu_);
    std::vector<ListedService> out;
    out.reserve(services_.size());
    for (const auto& s : services_) out.push_back({s, !fresh(s, now)});
    return out;
}

size_t Registry::size() const {
    std::shared_lock lock(mu_);
    return services_.size();
}

}  // namespace solarfed
