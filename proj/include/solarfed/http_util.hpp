#pragma once

// Small helpers shared by the HTTP daemons: raw request-target parsing (the
// object namespace must see percent-encodings before any framework decoding),
// wall-clock timestamps, and a stable filename hash for the cache store.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

namespace solarfed::http_util {

// Seconds since the Unix epoch, as the accounting and registry layers use it.
inline std::int64_t now_epoch_s() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

inline double now_epoch_fs() {
    return std::chrono::duration_cast<std::chrono::duration<double>>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

// Strips query and fragment from a raw request target, returning the raw
// (still percent-encoded) path component.
inline std::string raw_target_path(const std::string& target) {
    const auto cut = target.find_first_of("?#");
    return cut == std::string::npos ? target : target.substr(0, cut);
}

// Returns the raw (undecoded) value of `key` from the query string of a raw
// request target, or nullopt when absent.
inline std::optional<std::string> raw_query_param(const std::string& target,
                                                  const std::string& key) {
    const auto qpos = target.find('?');
    if (qpos == std::string::npos) return std::nullopt;
    std::string query = target.substr(qpos + 1);
    const auto frag = query.find('#');
    if (frag != std::string::npos) query.resize(frag);

    size_t start = 0;
    while (start <= query.size()) {
        auto end = query.find('&', start);
        if (end == std::string::npos) end = query.size();
        const std::string pair = query.substr(start, end - start);
        const auto eq = pair.find('=');
        const std::string k = eq == std::string::npos ? pair : pair.substr(0, eq);
        if (k == key) {
            return eq == std::string::npos ? std::string() : pair.substr(eq + 1);
        }
        if (end == query.size()) break;
        start = end + 1;
    }
    return std::nullopt;
}

// Percent-decodes a query-string value (no '+' handling: values here are
// paths and numbers, not form posts). Invalid escapes pass through verbatim.
inline std::string decode_query_value(const std::string& s) {
    auto hex = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    std::string out;
    out.reserve(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size()) {
            const int hi = hex(s[i + 1]), lo = hex(s[i + 2]);
            if (hi >= 0 && lo >= 0) {
                out.push_back(static_cast<char>(hi * 16 + lo));
                i += 2;
                continue;
            }
        }
        out.push_back(s[i]);
    }
    return out;
}

// Splits "host:port" (defaulting to loopback when only a port is given).
struct ListenAddr {
    std::string host = "127.0.0.1";
    int port = 0;
};

inline std::optional<ListenAddr> parse_listen_addr(const std::string& s) {
    ListenAddr addr;
    std::string port_part = s;
    const auto colon = s.rfind(':');
    if (colon != std::string::npos) {
        addr.host = s.substr(0, colon);
        port_part = s.substr(colon + 1);
        if (addr.host.empty()) addr.host = "127.0.0.1";
    }
    try {
        size_t used = 0;
        const int port = std::stoi(port_part, &used);
        if (used != port_part.size() || port < 0 || port > 65535) return std::nullopt;
        addr.port = port;
    } catch (const std::exception&) {
        return std::nullopt;
    }
    return addr;
}

// Splits an absolute URL into "scheme://host:port" and the path suffix
// ("/" when absent). nullopt when there is no scheme separator.
struct SplitUrl {
    std::string base;
    std::string path;
};

inline std::optional<SplitUrl> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) return std::nullopt;
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return SplitUrl{url, "/"};
    return SplitUrl{url.substr(0, slash), url.substr(slash)};
}

// FNV-1a, used to shorten over-long store filenames deterministically.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string fnv1a_hex(const std::string& s) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a(s);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace solarfed::http_util
