#include "solarfed/director.hpp"

#include <cstdio>

#include "solarfed/http_util.hpp"
#include "solarfed/path.hpp"

namespace solarfed {

namespace {

void json_error(httplib::Response& res, int status, const std::string& code,
                const std::string& detail) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", code}, {"detail", detail}}.dump(),
                    "application/json");
}

// Extracts and parses the `path` query parameter from the raw request target,
// so percent-encodings reach ObjectPath::parse undisturbed.
std::optional<ObjectPath> parse_path_param(const httplib::Request& req, httplib::Response& res) {
    auto raw = http_util::raw_query_param(req.target, "path");
    if (!raw) {
        json_error(res, 400, "MalformedPath", "missing path query parameter");
        return std::nullopt;
    }
    try {
        return ObjectPath::parse(*raw);
    } catch (const MalformedPath& e) {
        json_error(res, 400, "MalformedPath", e.what());
        return std::nullopt;
    }
}

}  // namespace

DirectorConfig director_config_from_json(const nlohmann::json& j) {
    DirectorConfig cfg;
    cfg.listen_addr = j.value("listen_addr", cfg.listen_addr);
    cfg.geo_table_path = j.value("geo_table_path", cfg.geo_table_path);
    if (j.contains("data_dir")) cfg.data_dir = j.at("data_dir").get<std::string>();
    cfg.staleness_s = j.value("staleness_s", cfg.staleness_s);
    return cfg;
}

DirectorServer::DirectorServer(DirectorConfig cfg)
    : cfg_(std::move(cfg)), registry_(cfg_.staleness_s) {
    if (!cfg_.geo_table_path.empty()) {
        geo_table_ = GeoTable::load_csv_file(cfg_.geo_table_path);
    }
    std::filesystem::create_directories(cfg_.data_dir);
    log_ = std::make_unique<TransferLog>(cfg_.data_dir / "transfers.ndjson");
    server_.new_task_queue = [] { return new httplib::ThreadPool(32); };
    install_routes();
}

DirectorServer::~DirectorServer() { stop(); }

std::string DirectorServer::base_url() const {
    auto addr = http_util::parse_listen_addr(cfg_.listen_addr);
    const std::string host = addr ? addr->host : "127.0.0.1";
    return "http://" + host + ":" + std::to_string(port_);
}

std::optional<GeoPoint> DirectorServer::client_geo(const httplib::Request& req) const {
    std::optional<GeoPoint> override_point;
    if (req.has_header("X-Client-Geo")) {
        override_point = parse_geo_pair(req.get_header_value("X-Client-Geo"));
    }
    return lookup_client(geo_table_, req.remote_addr, override_point);
}

void DirectorServer::handle_resolution(const httplib::Request& req, httplib::Response& res,
                                       bool redirect) {
    auto path = parse_path_param(req, res);
    if (!path) return;
    ResolutionResult result;
    try {
        result = registry_.resolve(*path, client_geo(req));
    } catch (const RegistryError& e) {
        json_error(res, 404, "UnknownNamespace", e.what());
        return;
    }
    if (!redirect) {
        nlohmann::json body{{"object", result.object.text()},
                            {"origin_url", result.origin_url},
                            {"cache_urls", result.cache_urls}};
        res.set_content(body.dump(), "application/json");
        return;
    }
    // 307 keeps the method, so writeback PUTs survive redirection. Alternates
    // are the remaining caches then the origin, first choice excluded.
    std::string location;
    std::string alternates;
    if (result.cache_urls.empty()) {
        location = result.origin_url;
    } else {
        location = result.cache_urls.front();
        for (size_t i = 1; i < result.cache_urls.size(); ++i) {
            alternates += result.cache_urls[i];
            alternates += ',';
        }
        alternates += result.origin_url;
    }
    res.status = 307;
    res.set_header("Location", location);
    res.set_header("X-Alt-Sources", alternates);
}

void DirectorServer::install_routes() {
    server_.Post("/api/v1/register", [this](const httplib::Request& req, httplib::Response& res) {
        ServiceRecord record;
        try {
            record = service_record_from_json(nlohmann::json::parse(req.body));
        } catch (const std::exception& e) {
            json_error(res, 400, "InvalidRecord", e.what());
            return;
        }
        try {
            registry_.register_service(std::move(record));
        } catch (const RegistryError& e) {
            if (e.code() == RegistryErrc::duplicate_prefix) {
                json_error(res, 409, "DuplicatePrefix", e.what());
            } else {
                json_error(res, 400, "InvalidRecord", e.what());
            }
            return;
        }
        res.set_content(nlohmann::json{{"ok", true}}.dump(), "application/json");
    });

    server_.Get("/api/v1/resolve", [this](const httplib::Request& req, httplib::Response& res) {
        handle_resolution(req, res, /*redirect=*/false);
    });

    server_.Get("/api/v1/redirect", [this](const httplib::Request& req, httplib::Response& res) {
        handle_resolution(req, res, /*redirect=*/true);
    });

    server_.Get("/api/v1/services", [this](const httplib::Request&, httplib::Response& res) {
        nlohmann::json body = nlohmann::json::array();
        for (const auto& [record, stale] : registry_.list()) {
            nlohmann::json entry = service_record_to_json(record);
            entry["stale"] = stale;
            body.push_back(std::move(entry));
        }
        res.set_content(body.dump(), "application/json");
    });

    server_.Post("/api/v1/accounting", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            log_->append(transfer_record_from_json(nlohmann::json::parse(req.body)));
        } catch (const std::exception& e) {
            json_error(res, 400, "InvalidRecord", e.what());
            return;
        }
        res.status = 204;
    });

    server_.Get("/api/v1/stats", [this](const httplib::Request& req, httplib::Response& res) {
        StatsFilter filter;
        if (req.has_param("service")) filter.service = req.get_param_value("service");
        if (req.has_param("since")) {
            try {
                filter.since = std::stoll(req.get_param_value("since"));
            } catch (const std::exception&) {
                json_error(res, 400, "InvalidRecord", "since must be a unix timestamp");
                return;
            }
        }
        res.set_content(stats_to_json(log_->aggregate(filter)).dump(), "application/json");
    });
}

bool DirectorServer::start() {
    auto addr = http_util::parse_listen_addr(cfg_.listen_addr);
    if (!addr) return false;
    if (addr->port == 0) {
        port_ = server_.bind_to_any_port(addr->host);
        if (port_ < 0) return false;
    } else {
        if (!server_.bind_to_port(addr->host, addr->port)) return false;
        port_ = addr->port;
    }
    running_ = true;
    serve_thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return true;
}

void DirectorServer::stop() {
    if (!running_.exchange(false)) return;
    server_.stop();
    if (serve_thread_.joinable()) serve_thread_.join();
}

}  // namespace solarfed
