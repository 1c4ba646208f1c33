#pragma once

// Desk-scale federation testbed: launches a director, origins, and caches as
// separate local processes on loopback, waits for full registration, runs
// named end-to-end scenarios, and shuts everything down without orphans.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "solarfed/cache.hpp"
#include "solarfed/geo.hpp"
#include "solarfed/origin.hpp"

#include "json.hpp"

namespace solarfed::testbed {

struct DirectorSpec {
    std::string listen_addr = "127.0.0.1:0";
    std::string geo_table;  // optional CSV path
    std::int64_t staleness_s = 300;
};

struct ClientSpec {
    std::string name;
    GeoPoint geo;
};

struct TopologySpec {
    DirectorSpec director;
    std::vector<OriginConfig> origins;
    std::vector<CacheConfig> caches;
    std::vector<ClientSpec> clients;
};

TopologySpec topology_from_json(const nlohmann::json& j);  // validates; throws
nlohmann::json topology_to_json(const TopologySpec& spec);

// A convenient two-coast default: one origin exporting /bbso, two caches and
// two clients at well-separated geos. Paths are created under base_dir.
TopologySpec default_topology(const std::filesystem::path& base_dir);

class LaunchError : public std::runtime_error {
public:
    enum class Code { port_in_use, registration_failed, spawn_failed };
    LaunchError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

class ScenarioFailed : public std::runtime_error {
public:
    ScenarioFailed(std::string assertion, std::vector<std::string> evidence)
        : std::runtime_error(assertion), evidence_(std::move(evidence)) {}
    const std::vector<std::string>& evidence() const { return evidence_; }

private:
    std::vector<std::string> evidence_;
};

struct ScenarioReport {
    std::string name;
    bool passed = false;
    std::vector<std::string> evidence;
    std::string failure;  // first violated assertion, when !passed
};

// Directory holding the service binaries. Defaults to the directory of the
// running executable; override with FEDBED_BIN_DIR.
std::filesystem::path service_bin_dir();

class Federation {
public:
    // Spawns every service and waits until the director lists them all.
    // work_dir receives configs, data roots, stores, and the state file.
    static Federation launch(const TopologySpec& spec, const std::filesystem::path& work_dir,
                             double timeout_s = 30.0);

    Federation(Federation&&) noexcept;
    Federation& operator=(Federation&&) noexcept;
    ~Federation();  // shuts down if still running

    void shutdown();  // SIGTERM, wait, escalate to SIGKILL; reaps everything
    void detach() { running_ = false; }  // leave processes running on destruction
    void kill_service(const std::string& name);  // immediate SIGKILL + reap

    const TopologySpec& spec() const { return spec_; }
    const std::string& director_url() const { return director_url_; }
    std::filesystem::path accounting_log() const;
    const std::filesystem::path& work_dir() const { return work_dir_; }

    // Process table, for the state file and diagnostics.
    struct ServiceProc {
        std::string name;
        std::string kind;  // director | origin | cache
        pid_t pid = 0;
        std::string base_url;
    };
    const std::vector<ServiceProc>& processes() const { return procs_; }

    // Reattach to processes recorded in a state file (fedbed up/down).
    static Federation attach(const nlohmann::json& state);
    nlohmann::json state() const;

private:
    Federation() = default;

    TopologySpec spec_;
    std::filesystem::path work_dir_;
    std::string director_url_;
    std::vector<ServiceProc> procs_;
    bool running_ = false;
};

// Scenarios: "bbso-cycle", "cold-hot", "stampede", "failover".
ScenarioReport run_scenario(Federation& fed, const std::string& name);
std::vector<std::string> scenario_names();

}  // namespace solarfed::testbed
