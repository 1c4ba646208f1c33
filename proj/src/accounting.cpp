#include "solarfed/accounting.hpp"

namespace solarfed {

std::string to_string(TransferDirection d) {
    return d == TransferDirection::serve ? "serve" : "ingest";
}

std::optional<TransferDirection> parse_transfer_direction(const std::string& s) {
    if (s == "serve") return TransferDirection::serve;
    if (s == "ingest") return TransferDirection::ingest;
    return std::nullopt;
}

void TransferRecord::validate() const {
    if (service.empty()) throw InvalidRecord("service name empty");
    if (path.empty()) throw InvalidRecord("path empty");
    const bool cache_serve = kind == ServiceKind::cache && direction == TransferDirection::serve;
    if (cache_serve && !cache_hit)
        throw InvalidRecord("cache serve record missing cache_hit");
    if (!cache_serve && cache_hit)
        throw InvalidRecord("cache_hit only valid on cache serve records");
    if (duration_ms < 0) throw InvalidRecord("negative duration");
}

nlohmann::json transfer_record_to_json(const TransferRecord& r) {
    nlohmann::json j{{"service", r.service},
                     {"kind", to_string(r.kind)},
                     {"path", r.path},
                     {"direction", to_string(r.direction)},
                     {"bytes", r.bytes},
                     {"client", r.client},
                     {"timestamp", r.timestamp},
                     {"duration_ms", r.duration_ms}};
    if (r.cache_hit) j["cache_hit"] = *r.cache_hit;
    return j;
}

TransferRecord transfer_record_from_json(const nlohmann::json& j) {
    TransferRecord r;
    r.service = j.at("service").get<std::string>();
    auto kind = parse_service_kind(j.at("kind").get<std::string>());
    if (!kind) throw InvalidRecord("unknown kind");
    r.kind = *kind;
    r.path = j.at("path").get<std::string>();
    auto dir = parse_transfer_direction(j.at("direction").get<std::string>());
    if (!dir) throw InvalidRecord("unknown direction");
    r.direction = *dir;
    if (j.at("bytes").is_number_integer() && j.at("bytes").get<std::int64_t>() < 0)
        throw InvalidRecord("negative bytes");
    r.bytes = j.at("bytes").get<std::uint64_t>();
    if (j.contains("cache_hit") && !j.at("cache_hit").is_null())
        r.cache_hit = j.at("cache_hit").get<bool>();
    r.client = j.value("client", std::string{});
    r.timestamp = j.at("timestamp").get<std::int64_t>();
    r.duration_ms = j.value("duration_ms", std::int64_t{0});
    return r;
}

nlohmann::json stats_to_json(const StatsAggregate& s) {
    nlohmann::json by = nlohmann::json::object();
    for (const auto& [name, bytes] : s.bytes_by_service) by[name] = bytes;
    return nlohmann::json{{"records", s.records},
                          {"total_bytes", s.total_bytes},
                          {"hits", s.hits},
                          {"misses", s.misses},
                          {"bytes_by_service", by}};
}

StatsAggregate stats_from_json(const nlohmann::json& j) {
    StatsAggregate s;
    s.records = j.at("records").get<std::uint64_t>();
    s.total_bytes = j.at("total_bytes").get<std::uint64_t>();
    s.hits = j.at("hits").get<std::uint64_t>();
    s.misses = j.at("misses").get<std::uint64_t>();
    for (const auto& [name, bytes] : j.at("bytes_by_service").items()) {
        s.bytes_by_service[name] = bytes.get<std::uint64_t>();
    }
    return s;
}

StatsAggregate fold_stats(const std::vector<TransferRecord>& records, const StatsFilter& f) {
    StatsAggregate agg;
    for (const auto& r : records) {
        if (f.service && r.service != *f.service) continue;
        if (f.since && r.timestamp < *f.since) continue;
        agg.records += 1;
        agg.total_bytes += r.bytes;
        agg.bytes_by_service[r.service] += r.bytes;
        if (r.kind == ServiceKind::cache && r.direction == TransferDirection::serve) {
            if (r.cache_hit && *r.cache_hit)
                agg.hits += 1;
            else
                agg.misses += 1;
        }
    }
    return agg;
}

TransferLog::TransferLog(const std::filesystem::path& file) : file_(file) {
    if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
    if (std::filesystem::exists(file_)) {
        records_ = read_transfer_log(file_);
    }
    out_.open(file_, std::ios::app);
    if (!out_) throw std::runtime_error("cannot open transfer log " + file_.string());
}

void TransferLog::append(const TransferRecord& r) {
    r.validate();
    const std::string line = transfer_record_to_json(r).dump();
    std::lock_guard lock(mu_);
    out_ << line << '\n';
    out_.flush();
    records_.push_back(r);
}

StatsAggregate TransferLog::aggregate(const StatsFilter& f) const {
    std::lock_guard lock(mu_);
    return fold_stats(records_, f);
}

std::vector<TransferRecord> TransferLog::snapshot(const StatsFilter& f) const {
    std::lock_guard lock(mu_);
    std::vector<TransferRecord> out;
    for (const auto& r : records_) {
        if (f.service && r.service != *f.service) continue;
        if (f.since && r.timestamp < *f.since) continue;
        out.push_back(r);
    }
    return out;
}

size_t TransferLog::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

std::vector<TransferRecord> read_transfer_log(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read transfer log " + file.string());
    std::vector<TransferRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(transfer_record_from_json(nlohmann::json::parse(line)));
    }
    return out;
}

}  // namespace solarfed
