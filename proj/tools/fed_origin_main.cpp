#include <iostream>

#include "CLI11.hpp"
#include "daemon_util.hpp"
#include "solarfed/origin.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Federation origin: authoritative storage for one namespace prefix"};
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
            solarfed::origin_config_from_json(daemon_util::load_json_config(config_path));
        solarfed::OriginServer server(cfg);
        if (!server.start()) {
            std::cerr << "fed-origin: cannot bind " << cfg.listen_addr << "\n";
            return 3;
        }
        if (!port_file.empty()) daemon_util::write_port_file(port_file, server.port());
        std::cerr << "fed-origin: " << cfg.name << " serving " << cfg.prefix << " on "
                  << server.base_url() << "\n";
        const int rc =
            daemon_util::wait_for_shutdown([&] { return server.registration_failed(); });
        server.stop();
        return rc;
    } catch (const std::exception& e) {
        std::cerr << "fed-origin: " << e.what() << "\n";
        return 1;
    }
}
