#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace solarfed {

class GeoTableParse : public std::runtime_error {
public:
    GeoTableParse(size_t line, const std::string& what)
        : std::runtime_error("geo table line " + std::to_string(line) + ": " + what),
          line_(line) {}
    size_t line() const { return line_; }

private:
    size_t line_;
};

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;
};

bool geo_point_valid(const GeoPoint& p);

// "lat,lon" as carried in the X-Client-Geo header. nullopt on malformed or
// out-of-range text.
std::optional<GeoPoint> parse_geo_pair(const std::string& text);

// CIDR -> coordinates table loaded from CSV (columns exactly cidr,lat,lon).
// Lookup is longest-prefix match within the same address family; first row
// wins among equal-length matches. Immutable after load.
class GeoTable {
public:
    struct Row {
        std::string cidr;
        int family;  // AF_INET or AF_INET6
        std::array<std::uint8_t, 16> addr{};
        int prefix_len;
        GeoPoint point;
    };

    static GeoTable load_csv(std::istream& in);
    static GeoTable load_csv_text(const std::string& text);
    static GeoTable load_csv_file(const std::string& path);

    std::optional<GeoPoint> lookup(const std::string& ip) const;
    size_t size() const { return rows_.size(); }
    const std::vector<Row>& rows() const { return rows_; }

private:
    std::vector<Row> rows_;
};

std::optional<GeoPoint> lookup_client(const GeoTable& table, const std::string& ip,
                                      std::optional<GeoPoint> override_point);

inline constexpr double kEarthRadiusKm = 6371.0;

// Great-circle distance on a sphere of radius 6371 km. Symmetric bit-for-bit:
// the evaluation only ever squares the differences.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

}  // namespace solarfed
