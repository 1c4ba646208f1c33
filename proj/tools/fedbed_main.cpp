#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "solarfed/testbed.hpp"

namespace testbed = solarfed::testbed;

namespace {

testbed::TopologySpec load_topology(const std::string& topology_file,
                                    const std::filesystem::path& work_dir) {
    if (topology_file.empty()) return testbed::default_topology(work_dir);
    std::ifstream in(topology_file);
    if (!in) throw std::runtime_error("cannot open topology file " + topology_file);
    std::stringstream buf;
    buf << in.rdbuf();
    return testbed::topology_from_json(nlohmann::json::parse(buf.str()));
}

void print_services(const testbed::Federation& fed) {
    std::cout << "director: " << fed.director_url() << "\n";
    for (const auto& p : fed.processes()) {
        if (p.kind == "director") continue;
        std::cout << "  " << p.kind << " " << p.name << ": " << p.base_url << " (pid "
                  << p.pid << ")\n";
    }
}

int print_report(const testbed::ScenarioReport& report) {
    std::cout << "scenario " << report.name << ": " << (report.passed ? "PASS" : "FAIL")
              << "\n";
    for (const auto& line : report.evidence) std::cout << "  evidence: " << line << "\n";
    if (!report.passed) std::cout << "  failed: " << report.failure << "\n";
    return report.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fedbed: launch a local federation and run end-to-end scenarios"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string topology_file;
    std::string work_dir = "fedbed-work";
    std::string state_file;
    app.add_option("--work-dir", work_dir, "directory for configs, stores, and logs");
    app.add_option("--state", state_file,
                   "state file recording the running federation (default <work-dir>/state.json)");

    auto* up = app.add_subcommand("up", "launch a federation and leave it running");
    up->add_option("--topology", topology_file, "topology JSON (default: built-in two-coast)");

    auto* run = app.add_subcommand("run", "launch, run one scenario, shut down");
    std::string scenario;
    run->add_option("scenario", scenario, "one of: bbso-cycle, cold-hot, stampede, failover")
        ->required();
    run->add_option("--topology", topology_file, "topology JSON (default: built-in two-coast)");

    auto* down = app.add_subcommand("down", "stop the federation recorded in the state file");

    CLI11_PARSE(app, argc, argv);

    const std::filesystem::path work(work_dir);
    const std::filesystem::path state_path =
        state_file.empty() ? work / "state.json" : std::filesystem::path(state_file);

    try {
        if (up->parsed()) {
            std::filesystem::create_directories(work);
            auto fed = testbed::Federation::launch(load_topology(topology_file, work), work);
            std::ofstream out(state_path, std::ios::trunc);
            out << fed.state().dump(2) << "\n";
            print_services(fed);
            std::cout << "state written to " << state_path.string() << "\n";
            fed.detach();
        } else if (run->parsed()) {
            const auto names = testbed::scenario_names();
            if (std::find(names.begin(), names.end(), scenario) == names.end()) {
                std::cerr << "fedbed: unknown scenario " << scenario << "\n";
                return 2;
            }
            std::filesystem::create_directories(work);
            auto fed = testbed::Federation::launch(load_topology(topology_file, work), work);
            const auto report = testbed::run_scenario(fed, scenario);
            fed.shutdown();
            return print_report(report);
        } else if (down->parsed()) {
            std::ifstream in(state_path);
            if (!in) {
                std::cerr << "fedbed: no state file at " << state_path.string() << "\n";
                return 2;
            }
            std::stringstream buf;
            buf << in.rdbuf();
            auto fed = testbed::Federation::attach(nlohmann::json::parse(buf.str()));
            fed.shutdown();
            std::filesystem::remove(state_path);
            std::cout << "federation stopped\n";
        }
    } catch (const testbed::LaunchError& e) {
        std::cerr << "fedbed: launch failed: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "fedbed: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
