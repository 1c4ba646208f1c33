#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "solarfed/service.hpp"

#include "json.hpp"

namespace solarfed {

class InvalidRecord : public std::runtime_error {
public:
    explicit InvalidRecord(const std::string& what) : std::runtime_error(what) {}
};

enum class TransferDirection { serve, ingest };

std::string to_string(TransferDirection d);
std::optional<TransferDirection> parse_transfer_direction(const std::string& s);

// One accounting event. cache_hit is present exactly when a cache served.
struct TransferRecord {
    std::string service;
    ServiceKind kind = ServiceKind::origin;
    std::string path;
    TransferDirection direction = TransferDirection::serve;
    std::uint64_t bytes = 0;
    std::optional<bool> cache_hit;
    std::string client;
    std::int64_t timestamp = 0;
    std::int64_t duration_ms = 0;

    void validate() const;  // throws InvalidRecord
};

nlohmann::json transfer_record_to_json(const TransferRecord& r);
TransferRecord transfer_record_from_json(const nlohmann::json& j);

struct StatsFilter {
    std::optional<std::string> service;
    std::optional<std::int64_t> since;
};

struct StatsAggregate {
    std::uint64_t records = 0;
    std::uint64_t total_bytes = 0;
    std::uint64_t hits = 0;    // cache serve records only
    std::uint64_t misses = 0;  // cache serve records only
    std::map<std::string, std::uint64_t> bytes_by_service;
};

nlohmann::json stats_to_json(const StatsAggregate& s);
StatsAggregate stats_from_json(const nlohmann::json& j);

// Newline-delimited JSON append log. Appends are serialized; queries fold a
// consistent snapshot. Reopens and replays an existing log on construction.
class TransferLog {
public:
    explicit TransferLog(const std::filesystem::path& file);

    void append(const TransferRecord& r);  // throws InvalidRecord
    StatsAggregate aggregate(const StatsFilter& f) const;
    std::vector<TransferRecord> snapshot(const StatsFilter& f) const;
    size_t size() const;
    const std::filesystem::path& file() const { return file_; }

private:
    std::filesystem::path file_;
    mutable std::mutex mu_;
    std::ofstream out_;
    std::vector<TransferRecord> records_;
};

// Folds records matching the filter. Shared by TransferLog and the tests'
// independent re-fold over raw log lines.
StatsAggregate fold_stats(const std::vector<TransferRecord>& records, const StatsFilter& f);

// Parses an NDJSON transfer log from disk (scenario evidence path).
std::vector<TransferRecord> read_transfer_log(const std::filesystem::path& file);

}  // namespace solarfed
