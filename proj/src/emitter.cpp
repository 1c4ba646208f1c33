#include "solarfed/emitter.hpp"

#include <chrono>
#include <cstdio>

#include "httplib.h"
#include "nlohmann/json.hpp"

namespace solarfed {

namespace {
constexpr int kMaxAttempts = 3;
}

AccountingEmitter::AccountingEmitter(std::string director_url)
    : director_url_(std::move(director_url)) {
    if (!director_url_.empty()) {
        worker_ = std::thread([this] { run(); });
    }
}

AccountingEmitter::~AccountingEmitter() { stop(); }

void AccountingEmitter::enqueue(TransferRecord record) {
    if (director_url_.empty()) return;
    {
        std::lock_guard lock(mu_);
        if (stopping_) return;
        queue_.push_back(std::move(record));
    }
    cv_.notify_one();
}

void AccountingEmitter::stop() {
    {
        std::lock_guard lock(mu_);
        if (stopping_ && !worker_.joinable()) return;
        stopping_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

std::size_t AccountingEmitter::posted() const {
    std::lock_guard lock(mu_);
    return posted_;
}

std::size_t AccountingEmitter::dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
}

void AccountingEmitter::run() {
    for (;;) {
        TransferRecord record;
        {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
            if (queue_.empty()) return;  // stopping with a drained queue
            record = std::move(queue_.front());
            queue_.pop_front();
        }
        bool sent = false;
        for (int attempt = 0; attempt < kMaxAttempts && !sent; ++attempt) {
            if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50));
            sent = post_one(record);
        }
        std::lock_guard lock(mu_);
        if (sent) {
            ++posted_;
        } else {
            ++dropped_;
            std::fprintf(stderr, "accounting: dropped record for %s after %d attempts\n",
                         record.path.c_str(), kMaxAttempts);
        }
    }
}

bool AccountingEmitter::post_one(const TransferRecord& record) {
    httplib::Client client(director_url_);
    client.set_connection_timeout(2, 0);
    client.set_read_timeout(2, 0);
    auto res = client.Post("/api/v1/accounting", transfer_record_to_json(record).dump(),
                           "application/json");
    return res && (res->status == 204 || res->status == 200);
}

}  // namespace solarfed
