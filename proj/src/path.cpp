#include "solarfed/path.hpp"

#include <cctype>

namespace solarfed {

namespace {

int hex_val(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

// Percent-decoding runs before any structural interpretation. An encoded
// slash would change where segment boundaries fall, so it is rejected.
std::string decode_percent(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        char c = raw[i];
        if (c != '%') {
            out.push_back(c);
            continue;
        }
        if (i + 2 >= raw.size()) throw MalformedPath("truncated percent escape in \"" + raw + "\"");
        int hi = hex_val(raw[i + 1]);
        int lo = hex_val(raw[i + 2]);
        if (hi < 0 || lo < 0) throw MalformedPath("bad percent escape in \"" + raw + "\"");
        char decoded = static_cast<char>(hi * 16 + lo);
        if (decoded == '/') throw MalformedPath("encoded slash (%2F) not allowed in \"" + raw + "\"");
        out.push_back(decoded);
        i += 2;
    }
    return out;
}

bool is_control(unsigned char c) { return c < 0x20 || c == 0x7f; }

}  // namespace

ObjectPath ObjectPath::parse(const std::string& raw) {
    if (raw.empty()) throw MalformedPath("empty path");

    const std::string decoded = decode_percent(raw);
    for (unsigned char c : decoded) {
        if (is_control(c)) throw MalformedPath("control character in path");
    }

    ObjectPath p;
    std::string seg;
    auto flush = [&] {
        if (seg.empty()) return;  // collapses duplicate and trailing slashes
        if (seg == "." || seg == "..")
            throw MalformedPath("forbidden segment \"" + seg + "\" in \"" + raw + "\"");
        p.segments_.push_back(seg);
        seg.clear();
    };
    for (char c : decoded) {
        if (c == '/') {
            flush();
        } else {
            seg.push_back(c);
        }
    }
    flush();

    if (p.segments_.empty()) throw MalformedPath("path has no segments: \"" + raw + "\"");

    for (const auto& s : p.segments_) {
        p.text_ += '/';
        p.text_ += s;
    }
    return p;
}

bool ObjectPath::has_prefix(const ObjectPath& prefix) const {
    if (prefix.segments_.size() > segments_.size()) return false;
    for (size_t i = 0; i < prefix.segments_.size(); ++i) {
        if (segments_[i] != prefix.segments_[i]) return false;
    }
    return true;
}

std::string ObjectPath::relative_to(const ObjectPath& prefix) const {
    std::string out;
    for (size_t i = prefix.segments_.size(); i < segments_.size(); ++i) {
        if (!out.empty()) out += '/';
        out += segments_[i];
    }
    return out;
}

std::optional<NamespacePrefix> match_prefix(const ObjectPath& path,
                                            const std::vector<NamespacePrefix>& prefixes) {
    const NamespacePrefix* best = nullptr;
    for (const auto& pre : prefixes) {
        if (!path.has_prefix(pre)) continue;
        if (!best || pre.segments().size() > best->segments().size()) best = &pre;
    }
    if (!best) return std::nullopt;
    return *best;
}

std::string url_encode_path(const std::string& canonical) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    out.reserve(canonical.size());
    for (unsigned char c : canonical) {
        bool safe = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '.' || c == '_' ||
                    c == '~' || c == '/';
        if (safe) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xf]);
        }
    }
    return out;
}

}  // namespace solarfed
