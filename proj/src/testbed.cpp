#include "solarfed/testbed.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <fstream>
#include <functional>
#include <thread>

#include "solarfed/accounting.hpp"
#include "solarfed/client.hpp"
#include "solarfed/director.hpp"
#include "solarfed/http_util.hpp"
#include "solarfed/runner.hpp"
#include "solarfed/synth.hpp"

extern char** environ;

namespace solarfed::testbed {

namespace {

using Clock = std::chrono::steady_clock;

std::string fresh_nonce() {
    static std::atomic<std::uint64_t> counter{0};
    return std::to_string(http_util::now_epoch_s()) + "-" + std::to_string(::getpid()) + "-" +
           std::to_string(counter.fetch_add(1));
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::string read_whole_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Live reads race the director's appends; a torn final line is not an error.
std::vector<TransferRecord> read_log_tolerant(const std::filesystem::path& path) {
    std::vector<TransferRecord> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(transfer_record_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception&) {
            // incomplete trailing line
        }
    }
    return out;
}

bool poll_until(double timeout_s, const std::function<bool()>& pred) {
    const auto deadline = Clock::now() + std::chrono::duration<double>(timeout_s);
    while (Clock::now() < deadline) {
        if (pred()) return true;
        std::this_thread::sleep_for(std::chrono::milliseconds(25));
    }
    return pred();
}

pid_t spawn_service(const std::filesystem::path& binary,
                    const std::vector<std::string>& args,
                    const std::filesystem::path& log_file) {
    std::vector<std::string> argv_store;
    argv_store.push_back(binary.string());
    for (const auto& a : args) argv_store.push_back(a);
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    argv.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, 0, "/dev/null", O_RDONLY, 0);
    posix_spawn_file_actions_addopen(&actions, 1, log_file.c_str(),
                                     O_WRONLY | O_CREAT | O_APPEND, 0644);
    posix_spawn_file_actions_adddup2(&actions, 1, 2);

    pid_t pid = 0;
    const int rc = posix_spawn(&pid, binary.c_str(), &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) {
        throw LaunchError(LaunchError::Code::spawn_failed,
                          "cannot spawn " + binary.string() + ": " + std::strerror(rc));
    }
    return pid;
}

// The port file is written as "<port>\n" once the daemon has bound.
std::optional<int> try_read_port_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::string line;
    if (!std::getline(in, line) || line.empty()) return std::nullopt;
    try {
        return std::stoi(line);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

struct ServiceInfo {
    std::string base_url;
    std::string kind;
    bool stale = false;
};

std::map<std::string, ServiceInfo> list_services(const std::string& director_url) {
    std::map<std::string, ServiceInfo> out;
    httplib::Client client(director_url);
    client.set_connection_timeout(2, 0);
    client.set_read_timeout(5, 0);
    auto res = client.Get("/api/v1/services");
    if (!res || res->status != 200) return out;
    try {
        for (const auto& entry : nlohmann::json::parse(res->body)) {
            out[entry.at("name").get<std::string>()] =
                ServiceInfo{entry.at("base_url").get<std::string>(),
                            entry.at("kind").get<std::string>(),
                            entry.value("stale", false)};
        }
    } catch (const std::exception&) {
        out.clear();
    }
    return out;
}

}  // namespace

TopologySpec topology_from_json(const nlohmann::json& j) {
    TopologySpec spec;
    if (j.contains("director")) {
        const auto& d = j.at("director");
        spec.director.listen_addr = d.value("listen_addr", spec.director.listen_addr);
        spec.director.geo_table = d.value("geo_table", std::string());
        spec.director.staleness_s = d.value("staleness_s", spec.director.staleness_s);
    }
    for (const auto& o : j.value("origins", nlohmann::json::array())) {
        spec.origins.push_back(origin_config_from_json(o));
    }
    for (const auto& c : j.value("caches", nlohmann::json::array())) {
        spec.caches.push_back(cache_config_from_json(c));
    }
    for (const auto& c : j.value("clients", nlohmann::json::array())) {
        ClientSpec client;
        client.name = c.at("name").get<std::string>();
        client.geo.lat = c.at("lat").get<double>();
        client.geo.lon = c.at("lon").get<double>();
        spec.clients.push_back(client);
    }

    std::vector<std::string> names;
    for (const auto& o : spec.origins) names.push_back(o.name);
    for (const auto& c : spec.caches) names.push_back(c.name);
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end()) {
        throw std::invalid_argument("duplicate service name in topology");
    }
    std::vector<std::string> addrs;
    for (const auto& o : spec.origins) addrs.push_back(o.listen_addr);
    for (const auto& c : spec.caches) addrs.push_back(c.listen_addr);
    addrs.push_back(spec.director.listen_addr);
    std::sort(addrs.begin(), addrs.end());
    for (size_t i = 1; i < addrs.size(); ++i) {
        // auto-assign (":0") addresses may repeat; explicit ports must not
        if (addrs[i] == addrs[i - 1] && addrs[i].size() >= 2 &&
            addrs[i].substr(addrs[i].size() - 2) != ":0") {
            throw std::invalid_argument("duplicate listen address " + addrs[i]);
        }
    }
    for (const auto& o : spec.origins) ObjectPath::parse(o.prefix);
    return spec;
}

nlohmann::json topology_to_json(const TopologySpec& spec) {
    nlohmann::json origins = nlohmann::json::array();
    for (const auto& o : spec.origins) {
        origins.push_back({{"name", o.name},
                           {"prefix", o.prefix},
                           {"root_dir", o.root_dir.string()},
                           {"listen_addr", o.listen_addr},
                           {"lat", o.location.lat},
                           {"lon", o.location.lon},
                           {"heartbeat_s", o.heartbeat_s}});
    }
    nlohmann::json caches = nlohmann::json::array();
    for (const auto& c : spec.caches) {
        caches.push_back({{"name", c.name},
                          {"listen_addr", c.listen_addr},
                          {"store_dir", c.store_dir.string()},
                          {"capacity", c.capacity},
                          {"high_watermark", c.high_watermark},
                          {"low_watermark", c.low_watermark},
                          {"lat", c.location.lat},
                          {"lon", c.location.lon},
                          {"heartbeat_s", c.heartbeat_s}});
    }
    nlohmann::json clients = nlohmann::json::array();
    for (const auto& c : spec.clients) {
        clients.push_back({{"name", c.name}, {"lat", c.geo.lat}, {"lon", c.geo.lon}});
    }
    return nlohmann::json{{"director",
                           {{"listen_addr", spec.director.listen_addr},
                            {"geo_table", spec.director.geo_table},
                            {"staleness_s", spec.director.staleness_s}}},
                          {"origins", origins},
                          {"caches", caches},
                          {"clients", clients}};
}

TopologySpec default_topology(const std::filesystem::path& base_dir) {
    TopologySpec spec;
    spec.director.listen_addr = "127.0.0.1:0";

    OriginConfig origin;
    origin.name = "bbso-origin";
    origin.prefix = "/bbso";
    origin.root_dir = base_dir / "origin-root";
    origin.location = {34.2581, -116.9214};  // Big Bear Lake
    origin.heartbeat_s = 5;
    spec.origins.push_back(origin);

    CacheConfig west;
    west.name = "cache-west";
    west.store_dir = base_dir / "cache-west-store";
    west.capacity = std::uint64_t{256} * 1024 * 1024;
    west.location = {32.7157, -117.1611};  // San Diego
    west.heartbeat_s = 5;
    spec.caches.push_back(west);

    CacheConfig east;
    east.name = "cache-east";
    east.store_dir = base_dir / "cache-east-store";
    east.capacity = std::uint64_t{256} * 1024 * 1024;
    east.location = {41.8781, -87.6298};  // Chicago
    east.heartbeat_s = 5;
    spec.caches.push_back(east);

    spec.clients.push_back({"client-west", {32.8, -117.1}});
    spec.clients.push_back({"client-east", {41.9, -87.7}});
    return spec;
}

std::filesystem::path service_bin_dir() {
    if (const char* env = std::getenv("FEDBED_BIN_DIR"); env && *env) return env;
    std::error_code ec;
    auto self = std::filesystem::read_symlink("/proc/self/exe", ec);
    if (ec) return std::filesystem::current_path();
    return self.parent_path();
}

Federation::Federation(Federation&& other) noexcept { *this = std::move(other); }

Federation& Federation::operator=(Federation&& other) noexcept {
    if (this != &other) {
        if (running_) shutdown();
        spec_ = std::move(other.spec_);
        work_dir_ = std::move(other.work_dir_);
        director_url_ = std::move(other.director_url_);
        procs_ = std::move(other.procs_);
        running_ = other.running_;
        other.running_ = false;
        other.procs_.clear();
    }
    return *this;
}

Federation::~Federation() {
    if (running_) shutdown();
}

std::filesystem::path Federation::accounting_log() const {
    return work_dir_ / "director-data" / "transfers.ndjson";
}

Federation Federation::launch(const TopologySpec& spec, const std::filesystem::path& work_dir,
                              double timeout_s) {
    Federation fed;
    fed.spec_ = spec;
    fed.work_dir_ = work_dir;
    const auto bin = service_bin_dir();
    const auto logs = work_dir / "logs";
    const auto configs = work_dir / "configs";
    std::filesystem::create_directories(logs);
    std::filesystem::create_directories(configs);

    auto fail_cleanup = [&fed](LaunchError err) -> LaunchError {
        for (const auto& p : fed.procs_) {
            if (p.pid <= 0) continue;  // already reaped; pid 0 would signal our own group
            ::kill(p.pid, SIGKILL);
            ::waitpid(p.pid, nullptr, 0);
        }
        fed.procs_.clear();
        fed.running_ = false;
        return err;
    };

    // Any child death during launch is a failed launch; a bind failure is
    // reported by the daemons as exit code 3.
    auto check_children = [&fed, &fail_cleanup]() {
        for (auto& p : fed.procs_) {
            int status = 0;
            if (::waitpid(p.pid, &status, WNOHANG) == p.pid) {
                const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
                auto kind = code == 3 ? LaunchError::Code::port_in_use
                                      : LaunchError::Code::registration_failed;
                p.pid = 0;
                throw fail_cleanup(LaunchError(
                    kind, "service " + p.name + " exited during launch (status " +
                              std::to_string(code) + ")"));
            }
        }
    };

    fed.running_ = true;
    try {
        // --- director first; its port seeds every other config ---
        const auto director_cfg = configs / "director.json";
        const auto director_pf = configs / "director.port";
        write_text_file(director_cfg,
                        nlohmann::json{{"listen_addr", spec.director.listen_addr},
                                       {"geo_table_path", spec.director.geo_table},
                                       {"staleness_s", spec.director.staleness_s},
                                       {"data_dir", (work_dir / "director-data").string()}}
                            .dump(2));
        const pid_t dpid = spawn_service(
            bin / "fed-director",
            {"--config", director_cfg.string(), "--port-file", director_pf.string()},
            logs / "director.log");
        fed.procs_.push_back({"director", "director", dpid, ""});

        std::optional<int> director_port;
        poll_until(timeout_s, [&] {
            check_children();
            director_port = try_read_port_file(director_pf);
            return director_port.has_value();
        });
        if (!director_port) {
            throw fail_cleanup(LaunchError(LaunchError::Code::registration_failed,
                                           "director did not come up in time"));
        }
        auto addr = http_util::parse_listen_addr(spec.director.listen_addr);
        fed.director_url_ = "http://" + (addr ? addr->host : std::string("127.0.0.1")) + ":" +
                            std::to_string(*director_port);
        fed.procs_[0].base_url = fed.director_url_;

        // --- origins and caches ---
        for (const auto& origin : spec.origins) {
            auto root = origin.root_dir.is_absolute() ? origin.root_dir
                                                      : work_dir / origin.root_dir;
            const auto cfg_path = configs / ("origin-" + origin.name + ".json");
            write_text_file(cfg_path, nlohmann::json{{"name", origin.name},
                                                     {"prefix", origin.prefix},
                                                     {"root_dir", root.string()},
                                                     {"director_url", fed.director_url_},
                                                     {"listen_addr", origin.listen_addr},
                                                     {"lat", origin.location.lat},
                                                     {"lon", origin.location.lon},
                                                     {"heartbeat_s", origin.heartbeat_s}}
                                          .dump(2));
            const pid_t pid =
                spawn_service(bin / "fed-origin", {"--config", cfg_path.string()},
                              logs / ("origin-" + origin.name + ".log"));
            fed.procs_.push_back({origin.name, "origin", pid, ""});
        }
        for (const auto& cache : spec.caches) {
            auto store = cache.store_dir.is_absolute() ? cache.store_dir
                                                       : work_dir / cache.store_dir;
            const auto cfg_path = configs / ("cache-" + cache.name + ".json");
            write_text_file(cfg_path, nlohmann::json{{"name", cache.name},
                                                     {"store_dir", store.string()},
                                                     {"director_url", fed.director_url_},
                                                     {"listen_addr", cache.listen_addr},
                                                     {"capacity", cache.capacity},
                                                     {"high_watermark", cache.high_watermark},
                                                     {"low_watermark", cache.low_watermark},
                                                     {"lat", cache.location.lat},
                                                     {"lon", cache.location.lon},
                                                     {"heartbeat_s", cache.heartbeat_s}}
                                          .dump(2));
            const pid_t pid =
                spawn_service(bin / "fed-cache", {"--config", cfg_path.string()},
                              logs / ("cache-" + cache.name + ".log"));
            fed.procs_.push_back({cache.name, "cache", pid, ""});
        }

        // --- wait until the director lists every service ---
        const size_t expected = spec.origins.size() + spec.caches.size();
        std::map<std::string, ServiceInfo> services;
        const bool all_up = poll_until(timeout_s, [&] {
            check_children();
            services = list_services(fed.director_url_);
            if (services.size() < expected) return false;
            for (const auto& p : fed.procs_) {
                if (p.kind != "director" && services.find(p.name) == services.end()) {
                    return false;
                }
            }
            return true;
        });
        if (!all_up) {
            std::string missing;
            for (const auto& p : fed.procs_) {
                if (p.kind != "director" && services.find(p.name) == services.end()) {
                    missing += " " + p.name;
                }
            }
            throw fail_cleanup(LaunchError(LaunchError::Code::registration_failed,
                                           "services never registered:" + missing));
        }
        for (auto& p : fed.procs_) {
            if (auto it = services.find(p.name); it != services.end()) {
                p.base_url = it->second.base_url;
            }
        }
    } catch (const LaunchError&) {
        throw;
    } catch (const std::exception& e) {
        throw fail_cleanup(
            LaunchError(LaunchError::Code::spawn_failed, std::string("launch: ") + e.what()));
    }
    return fed;
}

void Federation::shutdown() {
    if (!running_) return;
    // Daemons drain their accounting queues on SIGTERM; give them a moment.
    for (const auto& p : procs_) {
        if (p.pid > 0) ::kill(p.pid, SIGTERM);
    }
    const auto deadline = Clock::now() + std::chrono::seconds(10);
    for (auto& p : procs_) {
        if (p.pid <= 0) continue;
        for (;;) {
            int status = 0;
            const pid_t r = ::waitpid(p.pid, &status, WNOHANG);
            if (r == p.pid || (r < 0 && errno == ECHILD)) {
                // not our child (attached federation): poll for disappearance
                if (r < 0 && ::kill(p.pid, 0) == 0 && Clock::now() < deadline) {
                    std::this_thread::sleep_for(std::chrono::milliseconds(20));
                    continue;
                }
                break;
            }
            if (Clock::now() >= deadline) {
                ::kill(p.pid, SIGKILL);
                ::waitpid(p.pid, nullptr, 0);
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        p.pid = 0;
    }
    procs_.clear();
    running_ = false;
}

void Federation::kill_service(const std::string& name) {
    for (auto& p : procs_) {
        if (p.name != name || p.pid <= 0) continue;
        ::kill(p.pid, SIGKILL);
        ::waitpid(p.pid, nullptr, 0);
        p.pid = 0;
        return;
    }
    throw std::invalid_argument("no such service: " + name);
}

Federation Federation::attach(const nlohmann::json& state) {
    Federation fed;
    fed.spec_ = topology_from_json(state.at("topology"));
    fed.work_dir_ = state.at("work_dir").get<std::string>();
    fed.director_url_ = state.at("director_url").get<std::string>();
    for (const auto& p : state.at("services")) {
        fed.procs_.push_back({p.at("name").get<std::string>(), p.at("kind").get<std::string>(),
                              p.at("pid").get<pid_t>(), p.at("base_url").get<std::string>()});
    }
    fed.running_ = true;
    return fed;
}

nlohmann::json Federation::state() const {
    nlohmann::json services = nlohmann::json::array();
    for (const auto& p : procs_) {
        services.push_back(
            {{"name", p.name}, {"kind", p.kind}, {"pid", p.pid}, {"base_url", p.base_url}});
    }
    return nlohmann::json{{"director_url", director_url_},
                          {"work_dir", work_dir_.string()},
                          {"services", services},
                          {"topology", topology_to_json(spec_)}};
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

namespace {

struct ScenarioCtx {
    Federation& fed;
    std::vector<std::string> evidence;
    std::filesystem::path dir;  // scratch for this scenario run

    void note(const std::string& line) { evidence.push_back(line); }
    void require(bool ok, const std::string& assertion) {
        if (!ok) throw ScenarioFailed(assertion, evidence);
    }

    FederationClient client(size_t client_idx, const std::string& name) const {
        ClientConfig cfg;
        cfg.director_url = fed.director_url();
        cfg.client_name = name;
        if (client_idx < fed.spec().clients.size()) {
            cfg.geo = fed.spec().clients[client_idx].geo;
        }
        return FederationClient(cfg);
    }

    // Deterministic filler payload.
    std::string payload(size_t bytes, std::uint64_t seed) const {
        std::string out(bytes, '\0');
        std::uint64_t h = seed * 0x9E3779B97F4A7C15ull + 1;
        for (size_t i = 0; i < bytes; ++i) {
            h ^= h << 13;
            h ^= h >> 7;
            h ^= h << 17;
            out[i] = static_cast<char>(h & 0xff);
        }
        return out;
    }

    std::string seed_object(const std::string& path_text, const std::string& bytes) {
        const auto file = dir / ("seed-" + std::to_string(evidence.size()) + ".bin");
        write_text_file(file, bytes);
        FederationClient seeder = client(0, "seeder");
        seeder.store(file, ObjectPath::parse(path_text));
        return path_text;
    }

    std::string origin_prefix() {
        require(!fed.spec().origins.empty(), "topology must contain an origin");
        return fed.spec().origins.front().prefix;
    }

    void require_counts(const std::string& what, double timeout_s,
                        const std::function<bool(const std::vector<TransferRecord>&)>& stable) {
        const bool ok = poll_until(timeout_s, [&] {
            return stable(read_log_tolerant(fed.accounting_log()));
        });
        require(ok, "accounting never reached expected state: " + what);
    }
};

std::string hash_of(const std::string& bytes) { return http_util::fnv1a_hex(bytes); }

ScenarioReport scenario_cold_hot(ScenarioCtx& ctx) {
    ctx.require(!ctx.fed.spec().caches.empty(), "topology must contain a cache");
    const std::string nonce = fresh_nonce();
    const std::string object = ctx.origin_prefix() + "/cold-hot-" + nonce + ".bin";
    const std::string bytes = ctx.payload(64 * 1024, 7);
    ctx.seed_object(object, bytes);
    ctx.note("seeded " + object + " (" + std::to_string(bytes.size()) + " bytes, fnv1a " +
             hash_of(bytes) + ")");

    FederationClient client = ctx.client(0, "cold-hot-client");
    const auto dest1 = ctx.dir / "first.bin";
    const auto dest2 = ctx.dir / "second.bin";
    const FetchReport first = client.fetch(ObjectPath::parse(object), dest1);
    ctx.note("first fetch served by " + first.source_used + ", X-Cache " +
             (first.cache_hit ? (*first.cache_hit ? "HIT" : "MISS") : "absent"));
    ctx.require(first.cache_hit.has_value() && !*first.cache_hit,
                "first (cold) fetch must be a cache MISS");

    const FetchReport second = client.fetch(ObjectPath::parse(object), dest2);
    ctx.note("second fetch served by " + second.source_used + ", X-Cache " +
             (second.cache_hit ? (*second.cache_hit ? "HIT" : "MISS") : "absent"));
    ctx.require(second.cache_hit.has_value() && *second.cache_hit,
                "second fetch must be a cache HIT");
    ctx.require(second.source_used == first.source_used,
                "both fetches must be served by the same cache");

    const std::string got1 = read_whole_file(dest1);
    const std::string got2 = read_whole_file(dest2);
    ctx.require(got1 == bytes && got2 == bytes, "fetched bytes must equal the seeded bytes");
    ctx.note("payload hash identical across MISS and HIT: " + hash_of(got1));
    return {"cold-hot", true, ctx.evidence, ""};
}

ScenarioReport scenario_stampede(ScenarioCtx& ctx) {
    ctx.require(!ctx.fed.spec().caches.empty(), "topology must contain a cache");
    const std::string nonce = fresh_nonce();
    const std::string object = ctx.origin_prefix() + "/stampede-" + nonce + ".bin";
    const std::string bytes = ctx.payload(256 * 1024, 11);
    ctx.seed_object(object, bytes);

    constexpr int kClients = 8;
    std::vector<std::thread> threads;
    std::vector<std::string> errors(kClients);
    std::vector<bool> matched(kClients, false);
    std::atomic<int> ready{0};
    std::atomic<bool> go{false};
    for (int i = 0; i < kClients; ++i) {
        threads.emplace_back([&, i] {
            FederationClient client = ctx.client(0, "stampede-" + std::to_string(i));
            ready.fetch_add(1);
            while (!go.load()) std::this_thread::yield();
            try {
                const auto dest = ctx.dir / ("stampede-" + std::to_string(i) + ".bin");
                client.fetch(ObjectPath::parse(object), dest);
                matched[static_cast<size_t>(i)] = read_whole_file(dest) == bytes;
            } catch (const std::exception& e) {
                errors[static_cast<size_t>(i)] = e.what();
            }
        });
    }
    while (ready.load() < kClients) std::this_thread::yield();
    go.store(true);
    for (auto& t : threads) t.join();

    for (int i = 0; i < kClients; ++i) {
        ctx.require(errors[static_cast<size_t>(i)].empty(),
                    "concurrent fetch failed: " + errors[static_cast<size_t>(i)]);
        ctx.require(matched[static_cast<size_t>(i)], "concurrent fetch returned wrong bytes");
    }
    ctx.note(std::to_string(kClients) + " concurrent cold fetches all returned " +
             std::to_string(bytes.size()) + " identical bytes");

    // The origin must have served the object exactly once; the caches must
    // have served it eight times.
    auto count_origin = [&object](const std::vector<TransferRecord>& records) {
        size_t n = 0;
        for (const auto& r : records) {
            if (r.kind == ServiceKind::origin && r.direction == TransferDirection::serve &&
                r.path == object) {
                ++n;
            }
        }
        return n;
    };
    auto count_cache_serves = [&object](const std::vector<TransferRecord>& records) {
        size_t n = 0;
        for (const auto& r : records) {
            if (r.kind == ServiceKind::cache && r.direction == TransferDirection::serve &&
                r.path == object) {
                ++n;
            }
        }
        return n;
    };
    ctx.require_counts("8 cache serves for " + object, 10.0,
                       [&](const std::vector<TransferRecord>& records) {
                           return count_cache_serves(records) == kClients &&
                                  count_origin(records) >= 1;
                       });
    // Give any duplicate origin fetch time to surface, then assert exactness.
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    const auto records = read_log_tolerant(ctx.fed.accounting_log());
    const size_t origin_serves = count_origin(records);
    ctx.note("origin serve records for the object: " + std::to_string(origin_serves));
    ctx.note("cache serve records for the object: " +
             std::to_string(count_cache_serves(records)));
    ctx.require(origin_serves == 1,
                "coalescing must produce exactly one origin fetch, saw " +
                    std::to_string(origin_serves));
    return {"stampede", true, ctx.evidence, ""};
}

ScenarioReport scenario_failover(ScenarioCtx& ctx) {
    ctx.require(ctx.fed.spec().caches.size() >= 2, "topology must contain two caches");
    const std::string nonce = fresh_nonce();
    const std::string object = ctx.origin_prefix() + "/failover-" + nonce + ".bin";
    const std::string bytes = ctx.payload(128 * 1024, 13);
    ctx.seed_object(object, bytes);

    FederationClient client = ctx.client(0, "failover-client");
    const auto plan = client.plan(ObjectPath::parse(object), false);
    ctx.require(plan.size() >= 3, "plan must list both caches and the origin");

    const FetchReport before = client.fetch(ObjectPath::parse(object), ctx.dir / "before.bin");
    ctx.require(before.source_used == plan.front(),
                "healthy federation must serve from the nearest cache");
    ctx.note("before failover: served by " + before.source_used);

    // Find which service owns the first-choice URL and kill it.
    std::string victim;
    const auto base = http_util::split_url(plan.front());
    for (const auto& p : ctx.fed.processes()) {
        if (base && p.base_url == base->base) victim = p.name;
    }
    ctx.require(!victim.empty(), "first plan entry must map to a known cache service");
    ctx.fed.kill_service(victim);
    ctx.note("killed " + victim + " (SIGKILL)");

    const FetchReport after = client.fetch(ObjectPath::parse(object), ctx.dir / "after.bin");
    ctx.note("after failover: served by " + after.source_used);
    ctx.require(after.source_used != before.source_used,
                "failover fetch must use a different source");
    ctx.require(read_whole_file(ctx.dir / "after.bin") == bytes,
                "failover fetch must return identical bytes");
    ctx.note("payload identical across failover: fnv1a " + hash_of(bytes));
    return {"failover", true, ctx.evidence, ""};
}

ScenarioReport scenario_bbso_cycle(ScenarioCtx& ctx) {
    ctx.require(ctx.fed.spec().caches.size() >= 2, "topology must contain two caches");
    ctx.require(ctx.fed.spec().clients.size() >= 2, "topology must define two client geos");
    const std::string nonce = fresh_nonce();
    const std::string prefix = ctx.origin_prefix();

    // The two clients must route to different nearest caches, otherwise the
    // "different cache" comparison is vacuous.
    FederationClient proc_probe = ctx.client(0, "proc-client");
    FederationClient check_probe = ctx.client(1, "check-client");
    const std::string raw_path = prefix + "/raw/synth-" + nonce + ".fits";

    // --- seed a synthetic observation at the origin ---
    synth::SynthConfig synth_cfg;
    synth_cfg.filaments = 3;
    synth_cfg.noise_sigma = 0.02;
    synth_cfg.seed = 42;
    const synth::SynthResult synth_result = synth::synth_solar_image(synth_cfg);
    const auto input_file = ctx.dir / "input.fits";
    fits::write_fits_file(synth_result.image, -64, input_file);
    FederationClient seeder = ctx.client(0, "seeder");
    seeder.store(input_file, ObjectPath::parse(raw_path));
    const std::uint64_t input_size = std::filesystem::file_size(input_file);
    ctx.note("seeded " + raw_path + " (" + std::to_string(input_size) + " bytes)");

    const auto proc_plan = proc_probe.plan(ObjectPath::parse(raw_path), false);
    const auto check_plan = check_probe.plan(ObjectPath::parse(raw_path), false);
    ctx.require(!proc_plan.empty() && !check_plan.empty(), "both clients must resolve the path");
    ctx.require(proc_plan.front() != check_plan.front(),
                "the two clients must route to different nearest caches");
    ctx.note("processing client nearest: " + proc_plan.front());
    ctx.note("checking client nearest: " + check_plan.front());

    // --- fetch through the nearest cache, process, write back ---
    runner::RunConfig run_cfg;
    run_cfg.input = raw_path;
    run_cfg.output = prefix + "/processed/synth-" + nonce;
    run_cfg.director_url = ctx.fed.director_url();
    run_cfg.client_name = "proc-client";
    run_cfg.geo = ctx.fed.spec().clients[0].geo;
    run_cfg.staging_dir = ctx.dir / "proc-staging";
    const runner::RunReport run = runner::run_pipeline(run_cfg);
    ctx.note("pipeline found " + std::to_string(run.filament_count) +
             " filaments, threshold " + std::to_string(run.threshold));
    ctx.require(run.filament_count == 3, "pipeline must recover the 3 implanted filaments");

    const std::vector<std::string> products{run.diffused_product, run.labels_product,
                                            run.catalog_product};
    const std::vector<std::filesystem::path> local_products{
        run_cfg.staging_dir / ("synth-" + nonce + ".diffused.fits"),
        run_cfg.staging_dir / ("synth-" + nonce + ".labels.fits"),
        run_cfg.staging_dir / ("synth-" + nonce + ".catalog.json")};

    // --- fetch the products back through the other client's cache ---
    std::uint64_t product_bytes = 0;
    for (size_t i = 0; i < products.size(); ++i) {
        const auto dest = ctx.dir / ("check-" + std::to_string(i));
        const FetchReport fetched =
            check_probe.fetch(ObjectPath::parse(products[i]), dest);
        const auto served_base = http_util::split_url(fetched.source_used);
        const auto nearest_base = http_util::split_url(check_plan.front());
        ctx.require(served_base && nearest_base && served_base->base == nearest_base->base,
                    "product must come through the checking client's nearest cache");
        const std::string via_fed = read_whole_file(dest);
        const std::string local = read_whole_file(local_products[i]);
        ctx.require(via_fed == local,
                    "product fetched through the federation must equal the local copy: " +
                        products[i]);
        ctx.note(products[i] + ": " + std::to_string(via_fed.size()) +
                 " bytes, fnv1a " + hash_of(via_fed) + ", identical via both paths");
        product_bytes += via_fed.size();
    }

    // --- byte conservation, from the director's accounting log ---
    const std::uint64_t expected_ingest = input_size + product_bytes;
    auto sum_where = [](const std::vector<TransferRecord>& records,
                       const std::function<bool(const TransferRecord&)>& pred) {
        std::uint64_t total = 0;
        for (const auto& r : records) {
            if (pred(r)) total += r.bytes;
        }
        return total;
    };
    ctx.require_counts(
        "cycle transfers recorded", 10.0, [&](const std::vector<TransferRecord>& records) {
            const std::uint64_t proc_served = sum_where(records, [](const TransferRecord& r) {
                return r.direction == TransferDirection::serve && r.client == "proc-client";
            });
            const std::uint64_t check_served = sum_where(records, [](const TransferRecord& r) {
                return r.direction == TransferDirection::serve && r.client == "check-client";
            });
            const std::uint64_t origin_ingest =
                sum_where(records, [&](const TransferRecord& r) {
                    return r.kind == ServiceKind::origin &&
                           r.direction == TransferDirection::ingest &&
                           r.path.find(nonce) != std::string::npos;
                });
            return proc_served == run.input_bytes && check_served == product_bytes &&
                   origin_ingest == expected_ingest;
        });

    const auto records = read_log_tolerant(ctx.fed.accounting_log());
    const std::uint64_t origin_serves = sum_where(records, [&](const TransferRecord& r) {
        return r.kind == ServiceKind::origin && r.direction == TransferDirection::serve &&
               r.path.find(nonce) != std::string::npos;
    });
    const std::uint64_t cache_ingests = sum_where(records, [&](const TransferRecord& r) {
        return r.kind == ServiceKind::cache && r.direction == TransferDirection::ingest &&
               r.path.find(nonce) != std::string::npos;
    });
    ctx.require(origin_serves == cache_ingests,
                "bytes served by the origin must equal bytes ingested by caches");
    ctx.note("conservation: client fetches " +
             std::to_string(run.input_bytes + product_bytes) + " bytes == cache serve records; " +
             "origin ingest " + std::to_string(expected_ingest) + " bytes == seeded+products; " +
             "origin serves " + std::to_string(origin_serves) + " == cache ingests " +
             std::to_string(cache_ingests));
    return {"bbso-cycle", true, ctx.evidence, ""};
}

}  // namespace

std::vector<std::string> scenario_names() {
    return {"bbso-cycle", "cold-hot", "stampede", "failover"};
}

ScenarioReport run_scenario(Federation& fed, const std::string& name) {
    const auto names = scenario_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        throw std::invalid_argument("unknown scenario: " + name);
    }
    ScenarioCtx ctx{fed, {}, fed.work_dir() / ("scenario-" + name + "-" + fresh_nonce())};
    std::filesystem::create_directories(ctx.dir);
    try {
        if (name == "cold-hot") return scenario_cold_hot(ctx);
        if (name == "stampede") return scenario_stampede(ctx);
        if (name == "failover") return scenario_failover(ctx);
        return scenario_bbso_cycle(ctx);
    } catch (const ScenarioFailed& e) {
        return {name, false, e.evidence(), e.what()};
    } catch (const std::exception& e) {
        return {name, false, ctx.evidence, std::string("error: ") + e.what()};
    }
}

}  // namespace solarfed::testbed
