#pragma once

// Disk store behind the pull-through cache: watermark LRU bookkeeping plus
// single-flight coalescing of concurrent misses. No HTTP here — the server
// layer drives it, and the eviction-trace tests drive it directly.
//
// Serving works on pinned open files: eviction and purge unlink the disk
// name immediately, but the bytes stay readable through existing pins until
// the last reader drops (POSIX unlink-while-open), so deletion is deferred
// exactly as long as a serve is active.

#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace solarfed {

// An open read-only file descriptor, closed when the last reference drops.
class PinnedFile {
public:
    explicit PinnedFile(int fd) : fd_(fd) {}
    ~PinnedFile();
    PinnedFile(const PinnedFile&) = delete;
    PinnedFile& operator=(const PinnedFile&) = delete;
    int fd() const { return fd_; }

private:
    int fd_;
};

// Result of a leader's upstream fetch, shared with every coalesced waiter.
struct FetchOutcome {
    bool ok = false;
    int status = 0;  // upstream HTTP status; 0 for network-level failure
    bool stored = false;  // false: transient pass-through, not indexed
    std::uint64_t size = 0;
    std::shared_ptr<PinnedFile> file;  // readable on ok, null otherwise
    std::string error;
};

struct CacheUsage {
    std::uint64_t bytes_used = 0;
    std::uint64_t capacity = 0;
    std::uint64_t object_count = 0;
};

class CacheStore {
public:
    CacheStore(std::filesystem::path dir, std::uint64_t capacity, double high_watermark = 0.90,
               double low_watermark = 0.80);

    // One call resolves a request against the store atomically:
    //   hit      — complete entry; file/size set, recency bumped.
    //   leader   — caller must fetch upstream and call finish_/fail_download.
    //   follower — another request is already fetching; wait on flight.
    struct Acquired {
        enum class Role { hit, leader, follower } role;
        std::shared_ptr<PinnedFile> file;
        std::uint64_t size = 0;
        std::shared_future<FetchOutcome> flight;
    };
    Acquired acquire(const std::string& path);

    // Leader-side completion. finish_download takes ownership of the bytes at
    // `temp` (inside this store's directory): small enough objects are renamed
    // into place and indexed (evicting to the low watermark when the insertion
    // crosses the high watermark); oversized objects are opened, unlinked, and
    // served transiently without ever being indexed.
    void finish_download(const std::string& path, const std::filesystem::path& temp,
                         std::uint64_t size, int status);
    void fail_download(const std::string& path, int status, const std::string& error);

    // Fresh temp file path for a leader's download, inside the store dir.
    std::filesystem::path temp_path();

    bool purge(const std::string& path);  // idempotent; true when an entry was removed
    CacheUsage usage() const;
    std::vector<std::string> cached_set() const;  // sorted; for trace equivalence

    // Objects strictly larger than this are pass-through, never stored.
    std::uint64_t store_limit() const;

private:
    struct Entry {
        std::uint64_t size = 0;
        std::uint64_t seq = 0;  // monotonic recency, not wall clock
        std::string disk_name;
        std::shared_ptr<PinnedFile> file;
    };
    struct Flight {
        std::promise<FetchOutcome> promise;
        std::shared_future<FetchOutcome> future;
    };

    void evict_to_low_watermark_locked();
    std::string disk_name_for(const std::string& path) const;

    std::filesystem::path dir_;
    std::uint64_t capacity_;
    double high_watermark_;
    double low_watermark_;

    mutable std::mutex mu_;
    std::map<std::string, Entry> entries_;
    std::map<std::string, std::shared_ptr<Flight>> flights_;
    std::uint64_t used_ = 0;
    std::uint64_t seq_counter_ = 0;
    std::uint64_t temp_counter_ = 0;
};

}  // namespace solarfed
