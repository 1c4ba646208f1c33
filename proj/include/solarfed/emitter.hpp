#pragma once

// Background accounting emitter. Services enqueue transfer records as they
// complete; a worker thread posts them to the director so request handling
// never blocks on accounting I/O. Failed posts are retried a bounded number
// of times, then dropped with a note on stderr — accounting is best-effort
// and must not wedge data service.

#include <condition_variable>
#include <deque>
#include <mutex>
#include <string>
#include <thread>

#include "solarfed/accounting.hpp"

namespace solarfed {

class AccountingEmitter {
public:
    // `director_url` like "http://127.0.0.1:7000"; empty disables emission.
    explicit AccountingEmitter(std::string director_url);
    ~AccountingEmitter();

    AccountingEmitter(const AccountingEmitter&) = delete;
    AccountingEmitter& operator=(const AccountingEmitter&) = delete;

    void enqueue(TransferRecord record);

    // Blocks until the queue is drained (or attempts are exhausted), then
    // stops the worker. Called by service shutdown paths.
    void stop();

    // Counters for tests and /admin/usage style introspection.
    std::size_t posted() const;
    std::size_t dropped() const;

private:
    void run();
    bool post_one(const TransferRecord& record);

    std::string director_url_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<TransferRecord> queue_;
    bool stopping_ = false;
    std::size_t posted_ = 0;
    std::size_t dropped_ = 0;
    std::thread worker_;
};

}  // namespace solarfed
