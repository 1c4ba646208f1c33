#include "solarfed/cache_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>

#include "solarfed/http_util.hpp"

namespace solarfed {

namespace {

bool unreserved(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '-' || c == '_' || c == '.' || c == '~';
}

}  // namespace

PinnedFile::~PinnedFile() {
    if (fd_ >= 0) ::close(fd_);
}

CacheStore::CacheStore(std::filesystem::path dir, std::uint64_t capacity, double high_watermark,
                       double low_watermark)
    : dir_(std::move(dir)),
      capacity_(capacity),
      high_watermark_(high_watermark),
      low_watermark_(low_watermark) {
    std::filesystem::create_directories(dir_);
    // The store does not survive restarts: leftover files from a previous
    // process are orphans and would desync the index, so clear them.
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
        std::error_code ec;
        std::filesystem::remove_all(e.path(), ec);
    }
}

std::uint64_t CacheStore::store_limit() const {
    return static_cast<std::uint64_t>(low_watermark_ * static_cast<double>(capacity_));
}

std::string CacheStore::disk_name_for(const std::string& path) const {
    std::string name = "o.";
    for (char c : path) {
        if (unreserved(c)) {
            name.push_back(c);
        } else {
            static const char* digits = "0123456789ABCDEF";
            name.push_back('%');
            name.push_back(digits[static_cast<unsigned char>(c) >> 4]);
            name.push_back(digits[static_cast<unsigned char>(c) & 0xf]);
        }
    }
    // Filesystems cap names at 255 bytes; long paths fall back to a digest.
    if (name.size() > 200) name = "h." + http_util::fnv1a_hex(path);
    return name;
}

std::filesystem::path CacheStore::temp_path() {
    std::lock_guard lock(mu_);
    return dir_ / ("t." + std::to_string(::getpid()) + "." + std::to_string(temp_counter_++));
}

CacheStore::Acquired CacheStore::acquire(const std::string& path) {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(path); it != entries_.end()) {
        it->second.seq = ++seq_counter_;
        return {Acquired::Role::hit, it->second.file, it->second.size, {}};
    }
    if (auto it = flights_.find(path); it != flights_.end()) {
        return {Acquired::Role::follower, nullptr, 0, it->second->future};
    }
    auto flight = std::make_shared<Flight>();
    flight->future = flight->promise.get_future().share();
    flights_[path] = flight;
    return {Acquired::Role::leader, nullptr, 0, flight->future};
}

void CacheStore::finish_download(const std::string& path, const std::filesystem::path& temp,
                                 std::uint64_t size, int status) {
    FetchOutcome outcome;
    outcome.status = status;
    outcome.size = size;

    std::shared_ptr<Flight> flight;
    {
        std::lock_guard lock(mu_);
        auto fit = flights_.find(path);
        if (fit == flights_.end()) return;  // fail_download already ran
        flight = fit->second;
        flights_.erase(fit);

        if (size <= store_limit()) {
            const std::string disk_name = disk_name_for(path);
            const std::filesystem::path final_path = dir_ / disk_name;
            if (::rename(temp.c_str(), final_path.c_str()) == 0) {
                const int fd = ::open(final_path.c_str(), O_RDONLY);
                if (fd >= 0) {
                    outcome.ok = true;
                    outcome.stored = true;
                    outcome.file = std::make_shared<PinnedFile>(fd);
                    // Replacement (shouldn't happen for immutable objects, but
                    // purge+refetch races can): drop the old accounting first.
                    if (auto old = entries_.find(path); old != entries_.end()) {
                        used_ -= old->second.size;
                        entries_.erase(old);
                    }
                    entries_[path] = Entry{size, ++seq_counter_, disk_name, outcome.file};
                    used_ += size;
                    if (static_cast<double>(used_) >
                        high_watermark_ * static_cast<double>(capacity_)) {
                        evict_to_low_watermark_locked();
                    }
                } else {
                    ::unlink(final_path.c_str());
                    outcome.error = "cannot reopen stored object";
                }
            } else {
                outcome.error = "cannot move download into store";
            }
        } else {
            // Pass-through: serve out of the unlinked temp file, index nothing.
            const int fd = ::open(temp.c_str(), O_RDONLY);
            ::unlink(temp.c_str());
            if (fd >= 0) {
                outcome.ok = true;
                outcome.stored = false;
                outcome.file = std::make_shared<PinnedFile>(fd);
            } else {
                outcome.error = "cannot reopen pass-through object";
            }
        }
    }
    flight->promise.set_value(std::move(outcome));
}

void CacheStore::fail_download(const std::string& path, int status, const std::string& error) {
    std::shared_ptr<Flight> flight;
    {
        std::lock_guard lock(mu_);
        auto fit = flights_.find(path);
        if (fit == flights_.end()) return;
        flight = fit->second;
        flights_.erase(fit);
    }
    FetchOutcome outcome;
    outcome.ok = false;
    outcome.status = status;
    outcome.error = error;
    flight->promise.set_value(std::move(outcome));
}

void CacheStore::evict_to_low_watermark_locked() {
    const double low = low_watermark_ * static_cast<double>(capacity_);
    while (static_cast<double>(used_) > low && !entries_.empty()) {
        auto victim = entries_.begin();
        for (auto it = entries_.begin(); it != entries_.end(); ++it) {
            if (it->second.seq < victim->second.seq) victim = it;
        }
        ::unlink((dir_ / victim->second.disk_name).c_str());
        used_ -= victim->second.size;
        entries_.erase(victim);
    }
}

bool CacheStore::purge(const std::string& path) {
    std::lock_guard lock(mu_);
    auto it = entries_.find(path);
    if (it == entries_.end()) return false;
    ::unlink((dir_ / it->second.disk_name).c_str());
    used_ -= it->second.size;
    entries_.erase(it);
    return true;
}

CacheUsage CacheStore::usage() const {
    std::lock_guard lock(mu_);
    return {used_, capacity_, entries_.size()};
}

std::vector<std::string> CacheStore::cached_set() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [path, entry] : entries_) out.push_back(path);
    return out;  // std::map iterates sorted
}

}  // namespace solarfed
