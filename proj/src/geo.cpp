#include "solarfed/geo.hpp"

#include <arpa/inet.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace solarfed {

namespace {

struct ParsedAddr {
    int family;
    std::array<std::uint8_t, 16> bytes{};
    int max_bits;
};

std::optional<ParsedAddr> parse_ip(const std::string& text) {
    ParsedAddr out{};
    in_addr v4{};
    if (inet_pton(AF_INET, text.c_str(), &v4) == 1) {
        out.family = AF_INET;
        std::memcpy(out.bytes.data(), &v4, 4);
        out.max_bits = 32;
        return out;
    }
    in6_addr v6{};
    if (inet_pton(AF_INET6, text.c_str(), &v6) == 1) {
        out.family = AF_INET6;
        std::memcpy(out.bytes.data(), &v6, 16);
        out.max_bits = 128;
        return out;
    }
    return std::nullopt;
}

bool prefix_match(const std::array<std::uint8_t, 16>& net,
                  const std::array<std::uint8_t, 16>& addr, int bits) {
    int full = bits / 8;
    if (full && std::memcmp(net.data(), addr.data(), static_cast<size_t>(full)) != 0) return false;
    int rem = bits % 8;
    if (!rem) return true;
    std::uint8_t mask = static_cast<std::uint8_t>(0xff << (8 - rem));
    return (net[full] & mask) == (addr[full] & mask);
}

std::optional<double> parse_double(const std::string& s) {
    try {
        size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) return std::nullopt;
        if (!std::isfinite(v)) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

bool geo_point_valid(const GeoPoint& p) {
    return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 &&
           p.lon >= -180.0 && p.lon <= 180.0;
}

std::optional<GeoPoint> parse_geo_pair(const std::string& text) {
    auto comma = text.find(',');
    if (comma == std::string::npos) return std::nullopt;
    auto lat = parse_double(text.substr(0, comma));
    auto lon = parse_double(text.substr(comma + 1));
    if (!lat || !lon) return std::nullopt;
    GeoPoint p{*lat, *lon};
    if (!geo_point_valid(p)) return std::nullopt;
    return p;
}

GeoTable GeoTable::load_csv(std::istream& in) {
    GeoTable table;
    std::string line;
    size_t lineno = 0;

    if (!std::getline(in, line)) throw GeoTableParse(1, "missing header row");
    ++lineno;
    if (strip_cr(line) != "cidr,lat,lon")
        throw GeoTableParse(lineno, "header must be exactly \"cidr,lat,lon\"");

    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty()) continue;

        std::vector<std::string> cols;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                cols.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        cols.push_back(cur);
        if (cols.size() != 3) throw GeoTableParse(lineno, "expected 3 columns");

        auto slash = cols[0].find('/');
        if (slash == std::string::npos) throw GeoTableParse(lineno, "cidr missing '/'");
        auto addr = parse_ip(cols[0].substr(0, slash));
        if (!addr) throw GeoTableParse(lineno, "bad address in cidr \"" + cols[0] + "\"");
        int bits = -1;
        try {
            size_t used = 0;
            bits = std::stoi(cols[0].substr(slash + 1), &used);
            if (used != cols[0].size() - slash - 1) bits = -1;
        } catch (const std::exception&) {
            bits = -1;
        }
        if (bits < 0 || bits > addr->max_bits)
            throw GeoTableParse(lineno, "bad prefix length in \"" + cols[0] + "\"");

        auto lat = parse_double(cols[1]);
        auto lon = parse_double(cols[2]);
        if (!lat || !lon) throw GeoTableParse(lineno, "bad coordinate");
        GeoPoint pt{*lat, *lon};
        if (!geo_point_valid(pt)) throw GeoTableParse(lineno, "lat/lon out of range");

        Row row;
        row.cidr = cols[0];
        row.family = addr->family;
        row.addr = addr->bytes;
        row.prefix_len = bits;
        row.point = pt;
        table.rows_.push_back(std::move(row));
    }
    return table;
}

GeoTable GeoTable::load_csv_text(const std::string& text) {
    std::istringstream in(text);
    return load_csv(in);
}

GeoTable GeoTable::load_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GeoTableParse(0, "cannot open \"" + path + "\"");
    return load_csv(in);
}

std::optional<GeoPoint> GeoTable::lookup(const std::string& ip) const {
    auto addr = parse_ip(ip);
    if (!addr) return std::nullopt;
    const Row* best = nullptr;
    for (const auto& row : rows_) {
        if (row.family != addr->family) continue;
        if (!prefix_match(row.addr, addr->bytes, row.prefix_len)) continue;
        if (!best || row.prefix_len > best->prefix_len) best = &row;
    }
    if (!best) return std::nullopt;
    return best->point;
}

std::optional<GeoPoint> lookup_client(const GeoTable& table, const std::string& ip,
                                      std::optional<GeoPoint> override_point) {
    if (override_point) return override_point;
    return table.lookup(ip);
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
    constexpr double deg = M_PI / 180.0;
    const double lat1 = a.lat * deg;
    const double lat2 = b.lat * deg;
    // |delta| keeps the evaluation identical under argument swap
    const double dlat = std::fabs(b.lat - a.lat) * deg;
    const double dlon = std::fabs(b.lon - a.lon) * deg;

    const double sh = std::sin(dlat / 2.0);
    const double sl = std::sin(dlon / 2.0);
    double h = sh * sh + std::cos(lat1) * std::cos(lat2) * sl * sl;
    if (h > 1.0) h = 1.0;
    if (h < 0.0) h = 0.0;
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

}  // namespace solarfed
