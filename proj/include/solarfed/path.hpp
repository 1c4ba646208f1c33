#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace solarfed {

// Raised by ObjectPath::parse for anything that cannot become a canonical path.
class MalformedPath : public std::runtime_error {
public:
    explicit MalformedPath(const std::string& what) : std::runtime_error(what) {}
};

// One object in the federation namespace. Canonical text is "/seg1/seg2/...":
// leading slash, no trailing slash, no empty/"."/".." segments. The bare root
// "/" is not a valid object.
class ObjectPath {
public:
    ObjectPath() = default;

    // normalize_path: percent-decodes (rejecting %2F), collapses duplicate
    // slashes, strips the trailing slash. Throws MalformedPath.
    static ObjectPath parse(const std::string& raw);

    const std::string& text() const { return text_; }
    const std::vector<std::string>& segments() const { return segments_; }

    bool has_prefix(const ObjectPath& prefix) const;

    // Remaining segments joined with '/', for mapping under a filesystem root.
    // Empty string when *this == prefix.
    std::string relative_to(const ObjectPath& prefix) const;

    friend bool operator==(const ObjectPath& a, const ObjectPath& b) {
        return a.text_ == b.text_;
    }
    friend bool operator<(const ObjectPath& a, const ObjectPath& b) {
        return a.text_ < b.text_;
    }

private:
    std::vector<std::string> segments_;
    std::string text_;
};

// A namespace subtree exported by one origin. Same canonical shape.
using NamespacePrefix = ObjectPath;

// Longest prefix whose segments lead path's segments; nullopt when none match.
// Distinct prefixes cannot tie at equal length, so the winner is unique.
std::optional<NamespacePrefix> match_prefix(const ObjectPath& path,
                                            const std::vector<NamespacePrefix>& prefixes);

// Canonical text -> URL path form. Keeps unreserved chars and '/', escapes the
// rest as uppercase %XX. Safe both as a URL path suffix and a query value.
std::string url_encode_path(const std::string& canonical);

}  // namespace solarfed
