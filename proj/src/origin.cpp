#include "solarfed/origin.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstring>

#include "solarfed/http_util.hpp"

namespace solarfed {

namespace {

constexpr const char* kStagingDir = ".staging";

// Shared by the content provider and its releaser: the open file plus the
// byte count actually written to the socket.
struct ServeState {
    int fd = -1;
    std::uint64_t sent = 0;
    double started = 0.0;
    ~ServeState() {
        if (fd >= 0) ::close(fd);
    }
};

}  // namespace

OriginConfig origin_config_from_json(const nlohmann::json& j) {
    OriginConfig cfg;
    cfg.name = j.at("name").get<std::string>();
    cfg.prefix = j.at("prefix").get<std::string>();
    cfg.root_dir = j.at("root_dir").get<std::string>();
    cfg.director_url = j.value("director_url", std::string());
    cfg.listen_addr = j.value("listen_addr", cfg.listen_addr);
    cfg.location.lat = j.value("lat", 0.0);
    cfg.location.lon = j.value("lon", 0.0);
    cfg.heartbeat_s = j.value("heartbeat_s", cfg.heartbeat_s);
    return cfg;
}

OriginServer::OriginServer(OriginConfig cfg) : cfg_(std::move(cfg)) {
    prefix_ = ObjectPath::parse(cfg_.prefix);
    std::filesystem::create_directories(cfg_.root_dir);
    root_ = std::filesystem::canonical(cfg_.root_dir);
    std::filesystem::create_directories(root_ / kStagingDir);
    emitter_ = std::make_unique<AccountingEmitter>(cfg_.director_url);
    server_.new_task_queue = [] { return new httplib::ThreadPool(32); };
    install_routes();
}

OriginServer::~OriginServer() { stop(); }

std::string OriginServer::base_url() const {
    auto addr = http_util::parse_listen_addr(cfg_.listen_addr);
    const std::string host = addr ? addr->host : "127.0.0.1";
    return "http://" + host + ":" + std::to_string(port_);
}

bool OriginServer::registration_failed() const {
    return registration_ && registration_->failed();
}

void OriginServer::drain_accounting() {
    if (emitter_) emitter_->stop();
}

std::string OriginServer::client_name(const httplib::Request& req) const {
    if (req.has_header("X-Client-Name")) return req.get_header_value("X-Client-Name");
    return req.remote_addr;
}

std::optional<std::filesystem::path> OriginServer::map_object(const std::string& raw_path,
                                                              httplib::Response& res,
                                                              ObjectPath* parsed_out) {
    // raw_path is "/data/..." straight from the request target.
    ObjectPath object;
    try {
        object = ObjectPath::parse(raw_path.substr(std::strlen("/data")));
    } catch (const MalformedPath&) {
        res.status = 404;  // not an object this namespace can ever contain
        return std::nullopt;
    }
    if (parsed_out) *parsed_out = object;
    if (!object.has_prefix(prefix_)) {
        res.status = 403;
        return std::nullopt;
    }
    const std::string rel = object.relative_to(prefix_);
    if (rel.empty() || rel == kStagingDir || rel.rfind(std::string(kStagingDir) + "/", 0) == 0) {
        res.status = 403;  // the staging area is not part of the namespace
        return std::nullopt;
    }
    std::filesystem::path file = root_ / rel;
    // Canonical form cannot contain "..", but a symlink inside root could
    // still point outside: resolve and re-check containment.
    std::error_code ec;
    const auto resolved = std::filesystem::weakly_canonical(file, ec);
    if (ec) {
        res.status = 404;
        return std::nullopt;
    }
    auto mismatch = std::mismatch(root_.begin(), root_.end(), resolved.begin(), resolved.end());
    if (mismatch.first != root_.end()) {
        res.status = 403;
        return std::nullopt;
    }
    return resolved;
}

void OriginServer::install_routes() {
    server_.set_pre_routing_handler([this](const httplib::Request&, httplib::Response& res) {
        res.set_header("X-Service-Name", cfg_.name);
        return httplib::Server::HandlerResponse::Unhandled;
    });

    server_.Get("/data/.*", [this](const httplib::Request& req, httplib::Response& res) {
        ObjectPath object;
        auto file = map_object(http_util::raw_target_path(req.target), res, &object);
        if (!file) return;
        if (req.ranges.size() > 1) {
            res.status = 416;  // single-range only
            return;
        }

        auto state = std::make_shared<ServeState>();
        state->started = http_util::now_epoch_fs();
        state->fd = ::open(file->c_str(), O_RDONLY);
        struct stat st{};
        if (state->fd < 0 || ::fstat(state->fd, &st) != 0 || !S_ISREG(st.st_mode)) {
            res.status = 404;
            return;
        }

        const std::string client = client_name(req);
        const std::string object_text = object.text();
        res.set_content_provider(
            static_cast<size_t>(st.st_size), "application/octet-stream",
            [state](size_t offset, size_t length, httplib::DataSink& sink) {
                char buf[64 * 1024];
                while (length > 0) {
                    const size_t chunk = std::min(length, sizeof buf);
                    const ssize_t n =
                        ::pread(state->fd, buf, chunk, static_cast<off_t>(offset));
                    if (n <= 0) return false;
                    if (!sink.write(buf, static_cast<size_t>(n))) return false;
                    state->sent += static_cast<std::uint64_t>(n);
                    offset += static_cast<size_t>(n);
                    length -= static_cast<size_t>(n);
                }
                return true;
            },
            [this, state, client, object_text](bool success) {
                // HEAD and aborted transfers land here with success == false;
                // only completed byte movement is accounted.
                if (!success || state->sent == 0) return;
                TransferRecord record;
                record.service = cfg_.name;
                record.kind = ServiceKind::origin;
                record.path = object_text;
                record.direction = TransferDirection::serve;
                record.bytes = state->sent;
                record.client = client;
                record.timestamp = http_util::now_epoch_s();
                record.duration_ms = static_cast<std::int64_t>(
                    (http_util::now_epoch_fs() - state->started) * 1000.0);
                emitter_->enqueue(std::move(record));
            });
    });

    server_.Put("/data/.*",
                [this](const httplib::Request& req, httplib::Response& res,
                       const httplib::ContentReader& content_reader) {
        const double started = http_util::now_epoch_fs();
        // A rejected request must still consume its body: leftover bytes
        // would desync the next request on this keep-alive connection.
        auto drain_body = [&] {
            std::string te = req.get_header_value("Transfer-Encoding");
            std::transform(te.begin(), te.end(), te.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (te.find("chunked") != std::string::npos ||
                req.get_header_value_u64("Content-Length") > 0) {
                content_reader([](const char*, size_t) { return true; });
            }
        };
        ObjectPath object;
        auto file = map_object(http_util::raw_target_path(req.target), res, &object);
        if (!file) {
            drain_body();
            return;
        }
        if (!req.has_header("Content-Length")) {
            res.status = 411;  // chunked writeback unsupported
            drain_body();
            return;
        }
        const std::uint64_t expected = req.get_header_value_u64("Content-Length");

        std::error_code ec;
        const auto space = std::filesystem::space(root_, ec);
        if (!ec && space.available < expected) {
            res.status = 507;
            drain_body();
            return;
        }

        const std::string temp_name =
            "put." + std::to_string(::getpid()) + "." + std::to_string(put_seq_.fetch_add(1));
        const std::filesystem::path temp = root_ / kStagingDir / temp_name;
        const int fd = ::open(temp.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
        if (fd < 0) {
            res.status = 500;
            return;
        }

        std::uint64_t received = 0;
        bool write_failed = false;
        bool storage_full = false;
        content_reader([&](const char* data, size_t len) {
            size_t off = 0;
            while (off < len) {
                const ssize_t n = ::write(fd, data + off, len - off);
                if (n < 0) {
                    storage_full = errno == ENOSPC;
                    write_failed = true;
                    return false;
                }
                off += static_cast<size_t>(n);
            }
            received += len;
            return true;
        });

        if (write_failed || received != expected || ::fsync(fd) != 0) {
            ::close(fd);
            ::unlink(temp.c_str());
            res.status = storage_full ? 507 : 400;
            return;
        }
        ::close(fd);

        std::filesystem::create_directories(file->parent_path(), ec);
        if (::rename(temp.c_str(), file->c_str()) != 0) {
            ::unlink(temp.c_str());
            res.status = 500;
            return;
        }

        res.status = 201;
        TransferRecord record;
        record.service = cfg_.name;
        record.kind = ServiceKind::origin;
        record.path = object.text();
        record.direction = TransferDirection::ingest;
        record.bytes = received;
        record.client = client_name(req);
        record.timestamp = http_util::now_epoch_s();
        record.duration_ms =
            static_cast<std::int64_t>((http_util::now_epoch_fs() - started) * 1000.0);
        emitter_->enqueue(std::move(record));
    });
}

bool OriginServer::start() {
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
        record.kind = ServiceKind::origin;
        record.base_url = base_url();
        record.location = cfg_.location;
        record.prefixes.push_back(prefix_);
        registration_ = std::make_unique<RegistrationLoop>(
            cfg_.director_url, std::move(record), cfg_.heartbeat_s,
            [this](const std::string& why) {
                std::fprintf(stderr, "%s: fatal: %s\n", cfg_.name.c_str(), why.c_str());
            });
        registration_->start();
    }
    return true;
}

void OriginServer::stop() {
    if (!running_.exchange(false)) return;
    if (registration_) registration_->stop();
    server_.stop();
    if (serve_thread_.joinable()) serve_thread_.join();
    emitter_->stop();
}

}  // namespace solarfed
