#include "solarfed/registration.hpp"

#include <chrono>

#include "httplib.h"
#include "nlohmann/json.hpp"

namespace solarfed {

RegistrationLoop::RegistrationLoop(std::string director_url, ServiceRecord record,
                                   std::int64_t heartbeat_s,
                                   std::function<void(const std::string&)> on_fatal)
    : director_url_(std::move(director_url)),
      record_(std::move(record)),
      heartbeat_s_(heartbeat_s),
      on_fatal_(std::move(on_fatal)) {}

RegistrationLoop::~RegistrationLoop() { stop(); }

void RegistrationLoop::start() {
    if (director_url_.empty()) return;
    thread_ = std::thread([this] { run(); });
}

void RegistrationLoop::stop() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
}

void RegistrationLoop::run() {
    auto wait_for = [this](std::chrono::milliseconds d) {
        std::unique_lock lock(mu_);
        cv_.wait_for(lock, d, [this] { return stopping_; });
        return stopping_;
    };
    for (;;) {
        httplib::Client client(director_url_);
        client.set_connection_timeout(2, 0);
        client.set_read_timeout(5, 0);
        auto res = client.Post("/api/v1/register", service_record_to_json(record_).dump(),
                               "application/json");
        if (res && res->status == 200) {
            registered_ = true;
            if (wait_for(std::chrono::seconds(heartbeat_s_))) return;
            continue;
        }
        if (res) {
            // Rejected outright: the record itself is wrong, no point retrying.
            failed_ = true;
            if (on_fatal_) on_fatal_("director rejected registration (" +
                                     std::to_string(res->status) + "): " + res->body);
            return;
        }
        if (wait_for(std::chrono::seconds(1))) return;
    }
}

}  // namespace solarfed
