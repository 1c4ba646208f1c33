#pragma once

// Federation client: resolves object paths through the director, downloads
// through the ranked caches with per-source fallback (origin always last),
// and writes products straight back to the origin.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "solarfed/accounting.hpp"
#include "solarfed/geo.hpp"
#include "solarfed/path.hpp"
#include "solarfed/service.hpp"

namespace solarfed {

enum class ClientErrc {
    director_unreachable,
    unknown_namespace,
    not_found,           // a source authoritatively reported the object absent
    all_sources_failed,
    origin_unreachable,
    storage_full,
    rejected,            // origin refused the write (e.g. outside its prefix)
};

struct SourceFailure {
    std::string url;
    int status = 0;  // 0 for network-level failure
    std::string cause;
};

class ClientError : public std::runtime_error {
public:
    ClientError(ClientErrc code, const std::string& what,
                std::vector<SourceFailure> failures = {})
        : std::runtime_error(what), code_(code), failures_(std::move(failures)) {}
    ClientErrc code() const { return code_; }
    const std::vector<SourceFailure>& failures() const { return failures_; }

private:
    ClientErrc code_;
    std::vector<SourceFailure> failures_;
};

struct FetchReport {
    std::uint64_t bytes = 0;
    std::string source_used;           // object URL that served
    std::optional<bool> cache_hit;     // from X-Cache when a cache served
};

struct ClientConfig {
    std::string director_url;
    std::string client_name;           // transfer attribution; defaults to "fed-client"
    std::optional<GeoPoint> geo;       // sent as X-Client-Geo when present
    bool follow_redirect = false;      // plan via 307 instead of resolve metadata
    int attempts_per_source = 1;
    int connect_timeout_s = 10;
    int transfer_timeout_s = 60;
};

class FederationClient {
public:
    explicit FederationClient(ClientConfig cfg);

    ResolutionResult locate(const ObjectPath& path) const;

    // Ordered object URLs to try: ranked caches then origin, or origin only.
    std::vector<std::string> plan(const ObjectPath& path, bool bypass_cache) const;

    // Downloads into dest atomically (temp + rename). Tries plan() sources in
    // order, attempts_per_source each, never reordering.
    FetchReport fetch(const ObjectPath& path, const std::filesystem::path& dest,
                      bool bypass_cache = false) const;

    // PUT src to the object's origin; caches are never written through.
    void store(const std::filesystem::path& src, const ObjectPath& path) const;

    StatsAggregate stats(const StatsFilter& filter) const;

private:
    ClientConfig cfg_;
};

}  // namespace solarfed
