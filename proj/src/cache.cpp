#include "solarfed/cache.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "solarfed/http_util.hpp"
#include "solarfed/service.hpp"

namespace solarfed {

namespace {

struct ServeState {
    std::shared_ptr<PinnedFile> file;
    std::uint64_t sent = 0;
    double started = 0.0;
};

}  // namespace

CacheConfig cache_config_from_json(const nlohmann::json& j) {
    CacheConfig cfg;
    cfg.name = j.at("name").get<std::string>();
    cfg.listen_addr = j.value("listen_addr", cfg.listen_addr);
    cfg.director_url = j.value("director_url", std::string());
    cfg.location.lat = j.value("lat", 0.0);
    cfg.location.lon = j.value("lon", 0.0);
    cfg.store_dir = j.at("store_dir").get<std::string>();
    cfg.capacity = j.value("capacity", cfg.capacity);
    cfg.high_watermark = j.value("high_watermark", cfg.high_watermark);
    cfg.low_watermark = j.value("low_watermark", cfg.low_watermark);
    cfg.heartbeat_s = j.value("heartbeat_s", cfg.heartbeat_s);
    return cfg;
}

CacheServer::CacheServer(CacheConfig cfg) : cfg_(std::move(cfg)) {
    if (!(cfg_.low_watermark > 0.0 && cfg_.low_watermark < cfg_.high_watermark &&
          cfg_.high_watermark <= 1.0)) {
        throw std::invalid_argument("watermarks must satisfy 0 < low < high <= 1");
    }
    store_ = std::make_unique<CacheStore>(cfg_.store_dir, cfg_.capacity, cfg_.high_watermark,
                                          cfg_.low_watermark);
    emitter_ = std::make_unique<AccountingEmitter>(cfg_.director_url);
    // Followers of a coalesced miss park their worker thread on the flight
    // future; keep enough workers that the leader always has one.
    server_.new_task_queue = [] { return new httplib::ThreadPool(32); };
    install_routes();
}

CacheServer::~CacheServer() { stop(); }

std::string CacheServer::base_url() const {
    auto addr = http_util::parse_listen_addr(cfg_.listen_addr);
    const std::string host = addr ? addr->host : "127.0.0.1";
    return "http://" + host + ":" + std::to_string(port_);
}

bool CacheServer::registration_failed() const {
    return registration_ && registration_->failed();
}

void CacheServer::drain_accounting() {
    if (emitter_) emitter_->stop();
}

// Leader-side upstream fetch: resolve the origin via the director, stream the
// FULL object into a temp file (whatever range the triggering request asked
// for), and hand it to the store. Every waiter is released by the store.
void CacheServer::lead_fetch(const ObjectPath& object) {
    std::string origin_url;
    {
        httplib::Client director(cfg_.director_url);
        director.set_connection_timeout(2, 0);
        director.set_read_timeout(5, 0);
        auto res = director.Get("/api/v1/resolve?path=" + url_encode_path(object.text()));
        if (!res) {
            store_->fail_download(object.text(), 502, "director unreachable");
            return;
        }
        if (res->status == 404) {
            store_->fail_download(object.text(), 404, "unknown namespace");
            return;
        }
        if (res->status != 200) {
            store_->fail_download(object.text(), 502,
                                  "director error " + std::to_string(res->status));
            return;
        }
        try {
            origin_url = nlohmann::json::parse(res->body).at("origin_url").get<std::string>();
        } catch (const std::exception&) {
            store_->fail_download(object.text(), 502, "unparseable resolution");
            return;
        }
    }

    // origin_url already carries the /data/<path> suffix.
    const auto split = http_util::split_url(origin_url);
    if (!split) {
        store_->fail_download(object.text(), 502, "malformed origin url");
        return;
    }
    const std::string origin_base = split->base;
    const std::string origin_path = split->path;

    const std::filesystem::path temp = store_->temp_path();
    const int fd = ::open(temp.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
    if (fd < 0) {
        store_->fail_download(object.text(), 502, "cannot create temp file");
        return;
    }

    const double started = http_util::now_epoch_fs();
    std::uint64_t received = 0;
    bool disk_error = false;
    httplib::Client origin(origin_base);
    origin.set_connection_timeout(5, 0);
    origin.set_read_timeout(60, 0);
    std::string origin_name;
    auto res = origin.Get(
        origin_path, {{"X-Client-Name", cfg_.name}},
        [&](const httplib::Response& response) {
            origin_name = response.get_header_value("X-Service-Name");
            return true;
        },
        [&](const char* data, size_t len) {
            size_t off = 0;
            while (off < len) {
                const ssize_t n = ::write(fd, data + off, len - off);
                if (n < 0) {
                    disk_error = true;
                    return false;
                }
                off += static_cast<size_t>(n);
            }
            received += len;
            return true;
        });
    ::close(fd);

    if (!res || disk_error) {
        ::unlink(temp.c_str());
        store_->fail_download(object.text(), 502,
                              disk_error ? "cache disk write failed" : "origin unreachable");
        return;
    }
    if (res->status != 200) {
        ::unlink(temp.c_str());
        store_->fail_download(object.text(), res->status == 404 ? 404 : 502,
                              "origin status " + std::to_string(res->status));
        return;
    }

    store_->finish_download(object.text(), temp, received, 200);

    TransferRecord record;
    record.service = cfg_.name;
    record.kind = ServiceKind::cache;
    record.path = object.text();
    record.direction = TransferDirection::ingest;
    record.bytes = received;
    record.client = origin_name.empty() ? origin_base : origin_name;
    record.timestamp = http_util::now_epoch_s();
    record.duration_ms =
        static_cast<std::int64_t>((http_util::now_epoch_fs() - started) * 1000.0);
    emitter_->enqueue(std::move(record));
}

void CacheServer::serve_outcome(httplib::Response& res, bool hit,
                                std::shared_ptr<PinnedFile> file, std::uint64_t size,
                                const std::string& object_text, const std::string& client) {
    res.set_header("X-Cache", hit ? "HIT" : "MISS");
    auto state = std::make_shared<ServeState>();
    state->file = std::move(file);
    state->started = http_util::now_epoch_fs();
    res.set_content_provider(
        static_cast<size_t>(size), "application/octet-stream",
        [state](size_t offset, size_t length, httplib::DataSink& sink) {
            char buf[64 * 1024];
            while (length > 0) {
                const size_t chunk = std::min(length, sizeof buf);
                const ssize_t n =
                    ::pread(state->file->fd(), buf, chunk, static_cast<off_t>(offset));
                if (n <= 0) return false;
                if (!sink.write(buf, static_cast<size_t>(n))) return false;
                state->sent += static_cast<std::uint64_t>(n);
                offset += static_cast<size_t>(n);
                length -= static_cast<size_t>(n);
            }
            return true;
        },
        [this, state, hit, object_text, client](bool success) {
            if (!success || state->sent == 0) return;
            TransferRecord record;
            record.service = cfg_.name;
            record.kind = ServiceKind::cache;
            record.path = object_text;
            record.direction = TransferDirection::serve;
            record.bytes = state->sent;
            record.cache_hit = hit;
            record.client = client;
            record.timestamp = http_util::now_epoch_s();
            record.duration_ms = static_cast<std::int64_t>(
                (http_util::now_epoch_fs() - state->started) * 1000.0);
            emitter_->enqueue(std::move(record));
        });
}

void CacheServer::install_routes() {
    server_.set_pre_routing_handler([this](const httplib::Request&, httplib::Response& res) {
        res.set_header("X-Service-Name", cfg_.name);
        return httplib::Server::HandlerResponse::Unhandled;
    });

    server_.Get("/data/.*", [this](const httplib::Request& req, httplib::Response& res) {
        ObjectPath object;
        try {
            object = ObjectPath::parse(
                http_util::raw_target_path(req.target).substr(std::strlen("/data")));
        } catch (const MalformedPath&) {
            res.status = 404;
            return;
        }
        if (req.ranges.size() > 1) {
            res.status = 416;  // single-range only
            return;
        }
        const std::string client =
            req.has_header("X-Client-Name") ? req.get_header_value("X-Client-Name")
                                            : req.remote_addr;

        auto acquired = store_->acquire(object.text());
        if (acquired.role == CacheStore::Acquired::Role::hit) {
            serve_outcome(res, true, acquired.file, acquired.size, object.text(), client);
            return;
        }
        if (acquired.role == CacheStore::Acquired::Role::leader) {
            lead_fetch(object);
        }
        const FetchOutcome outcome = acquired.flight.get();
        if (!outcome.ok) {
            res.status = outcome.status == 0 ? 502 : outcome.status;
            return;
        }
        serve_outcome(res, false, outcome.file, outcome.size, object.text(), client);
    });

    server_.Delete("/admin/purge/.*", [this](const httplib::Request& req, httplib::Response& res) {
        ObjectPath object;
        try {
            object = ObjectPath::parse(
                http_util::raw_target_path(req.target).substr(std::strlen("/admin/purge")));
        } catch (const MalformedPath&) {
            res.status = 404;
            return;
        }
        const bool purged = store_->purge(object.text());
        res.set_content(nlohmann::json{{"purged", purged}}.dump(), "application/json");
    });

    server_.Get("/admin/usage", [this](const httplib::Request&, httplib::Response& res) {
        const CacheUsage u = store_->usage();
        res.set_content(nlohmann::json{{"bytes_used", u.bytes_used},
                                       {"capacity", u.capacity},
                                       {"object_count", u.object_count}}
                            .dump(),
                        "application/json");
    });
}

bool CacheServer::start() {
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

    if (!cfg_.director_url.empty()) {
        ServiceRecord record;
        record.name = cfg_.name;
        record.kind = ServiceKind::cache;
        record.base_url = base_url();
        record.location = cfg_.location;
        registration_ = std::make_unique<RegistrationLoop>(
            cfg_.director_url, std::move(record), cfg_.heartbeat_s,
            [this](const std::string& why) {
                std::fprintf(stderr, "%s: fatal: %s\n", cfg_.name.c_str(), why.c_str());
            });
        registration_->start();
    }
    return true;
}

void CacheServer::stop() {
    if (!running_.exchange(false)) return;
    if (registration_) registration_->stop();
    server_.stop();
    if (serve_thread_.joinable()) serve_thread_.join();
    emitter_->stop();
}

}  // namespace solarfed
