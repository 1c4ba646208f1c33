#include <iostream>

#include "CLI11.hpp"
#include "daemon_util.hpp"
#include "solarfed/director.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Federation director: service registry, geo-aware resolution, accounting"};
    std::string config_path;
    std::string port_file;
    app.add_option("--config", config_path, "JSON config file")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--port-file", port_file, "file to write the bound port into");
    CLI11_PARSE(app, argc, argv);

    daemon_util::block_shutdown_signals();
    try {
        const auto cfg =
            solarfed::director_config_from_json(daemon_util::load_json_config(config_path));
        solarfed::DirectorServer server(cfg);
        if (!server.start()) {
            std::cerr << "fed-director: cannot bind " << cfg.listen_addr << "\n";
            return 3;
        }
        if (!port_file.empty()) daemon_util::write_port_file(port_file, server.port());
        std::cerr << "fed-director: serving on " << server.base_url() << "\n";
        const int rc = daemon_util::wait_for_shutdown(nullptr);
        server.stop();
        return rc;
    } catch (const std::exception& e) {
        std::cerr << "fed-director: " << e.what() << "\n";
        return 1;
    }
}
