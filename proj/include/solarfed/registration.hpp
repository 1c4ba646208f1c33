#pragma once

// Registration/heartbeat loop shared by origins and caches. Registers with
// the director as soon as it starts, retries on network failure, and then
// refreshes the registration periodically (heartbeats are re-registrations).
// A 4xx/409 from the director is fatal: the service is misconfigured and
// reports it once via on_fatal.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

#include "solarfed/service.hpp"

namespace solarfed {

class RegistrationLoop {
public:
    RegistrationLoop(std::string director_url, ServiceRecord record, std::int64_t heartbeat_s,
                     std::function<void(const std::string&)> on_fatal = nullptr);
    ~RegistrationLoop();

    RegistrationLoop(const RegistrationLoop&) = delete;
    RegistrationLoop& operator=(const RegistrationLoop&) = delete;

    void start();
    void stop();

    bool registered() const { return registered_.load(); }
    bool failed() const { return failed_.load(); }

private:
    void run();

    std::string director_url_;
    ServiceRecord record_;
    std::int64_t heartbeat_s_;
    std::function<void(const std::string&)> on_fatal_;
    std::atomic<bool> registered_{false};
    std::atomic<bool> failed_{false};
    std::mutex mu_;
    std::condition_variable cv_;
    bool stopping_ = false;
    std::thread thread_;
};

}  // namespace solarfed
