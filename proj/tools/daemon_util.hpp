#pragma once

// Shared scaffolding for the long-running federation daemons: config loading,
// the bound-port announcement file, and signal-driven shutdown.

#include <signal.h>
#include <time.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace daemon_util {

inline nlohmann::json load_json_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return nlohmann::json::parse(buf.str());
}

// Atomically publishes the bound port so a supervisor can poll for it.
inline void write_port_file(const std::string& path, int port) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << port << "\n";
    }
    std::filesystem::rename(tmp, path);
}

// Blocks SIGINT/SIGTERM for the whole process (worker threads inherit the
// mask) so shutdown is handled in one place. Call before starting threads.
inline void block_shutdown_signals() {
    ::signal(SIGPIPE, SIG_IGN);
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

// Waits until a shutdown signal arrives or `fatal` reports true.
// Returns 0 for a signal (clean stop) and 1 for a fatal condition.
inline int wait_for_shutdown(const std::function<bool()>& fatal) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    const timespec tick{0, 200 * 1000 * 1000};
    for (;;) {
        if (fatal && fatal()) return 1;
        const int sig = sigtimedwait(&set, nullptr, &tick);
        if (sig == SIGINT || sig == SIGTERM) return 0;
    }
}

}  // namespace daemon_util
