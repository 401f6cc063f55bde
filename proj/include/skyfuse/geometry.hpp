#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "skyfuse/core.hpp"

namespace skyfuse {

constexpr double kEarthRadiusM = 6371000.0;
constexpr double kFtToM = 0.3048;
constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Wrap to [0, 360).
inline double wrap360(double deg) {
    double d = std::fmod(deg, 360.0);
    if (d < 0) d += 360.0;
    return d;
}

// Wrap to [-180, 180).
inline double wrap180(double deg) {
    double d = wrap360(deg + 180.0);
    return d - 180.0;
}

struct GeoPosition {
    double lat_deg = 0;
    double lon_deg = 0;
    double alt_m = 0;
};

struct SystemPose {
    GeoPosition position;
    double orientation_deg = 0;  // boresight azimuth at pan = 0, clockwise from north
};

struct CameraModel {
    double hfov_deg = 0;
    double vfov_deg = 0;
    int width_px = 0;
    int height_px = 0;
};

enum class DriBin { Close, Medium, Distant };

inline std::string to_string(DriBin b) {
    switch (b) {
        case DriBin::Close: return "close";
        case DriBin::Medium: return "medium";
        case DriBin::Distant: return "distant";
    }
    throw InvariantError("unknown DriBin value");
}

inline DriBin parse_dri_bin(std::string_view s) {
    if (s == "close") return DriBin::Close;
    if (s == "medium") return DriBin::Medium;
    if (s == "distant") return DriBin::Distant;
    throw SchemaError("unknown dri bin: " + std::string(s));
}

// Pixel subtense needed to identify respectively recognize a target.
struct DriConfig {
    double identify_px = 15.0;
    double recognize_px = 5.0;
};

struct RelativeGeometry {
    double azimuth_deg = 0;    // [0, 360), clockwise from north
    double elevation_deg = 0;  // [-90, 90]
    double horizontal_m = 0;
    double sloping_m = 0;
};

// Local east/north offsets on the equirectangular approximation. Good to a
// few metres at the ranges involved here (tens of km), which is far below
// the sensor resolution it feeds.
inline std::array<double, 2> enu_offset_m(const GeoPosition& system, const GeoPosition& target) {
    const double north = deg2rad(target.lat_deg - system.lat_deg) * kEarthRadiusM;
    const double east =
        deg2rad(target.lon_deg - system.lon_deg) * kEarthRadiusM * std::cos(deg2rad(system.lat_deg));
    return {east, north};
}

inline GeoPosition geo_from_enu(const GeoPosition& system, double east_m, double north_m,
                                double up_m) {
    GeoPosition g;
    g.lat_deg = system.lat_deg + rad2deg(north_m / kEarthRadiusM);
    g.lon_deg = system.lon_deg + rad2deg(east_m / (kEarthRadiusM * std::cos(deg2rad(system.lat_deg))));
    g.alt_m = system.alt_m + up_m;
    return g;
}

inline RelativeGeometry relative_geometry_enu(double east_m, double north_m, double up_m) {
    const double horizontal = std::hypot(east_m, north_m);
    if (horizontal == 0.0 && up_m == 0.0)
        throw std::invalid_argument("relative_geometry: coincident points have no direction");
    RelativeGeometry r;
    r.horizontal_m = horizontal;
    r.sloping_m = std::hypot(horizontal, up_m);
    r.azimuth_deg = wrap360(rad2deg(std::atan2(east_m, north_m)));
    r.elevation_deg = rad2deg(std::atan2(up_m, horizontal));
    return r;
}

inline RelativeGeometry relative_geometry(const GeoPosition& system, const GeoPosition& target) {
    const auto en = enu_offset_m(system, target);
    return relative_geometry_enu(en[0], en[1], target.alt_m - system.alt_m);
}

// True when the target direction falls inside the camera's field of view for
// the given boresight (orientation + pan, tilt). Boundary directions count
// as inside. Returns the angular offsets from the boresight when inside.
inline std::optional<AngleOffset> fov_contains(const SystemPose& pose, double pan_deg,
                                               double tilt_deg, const CameraModel& cam,
                                               double target_az_deg, double target_el_deg) {
    const double daz = wrap180(target_az_deg - (pose.orientation_deg + pan_deg));
    const double del = target_el_deg - tilt_deg;
    if (std::abs(daz) <= cam.hfov_deg / 2.0 && std::abs(del) <= cam.vfov_deg / 2.0)
        return AngleOffset{daz, del};
    return std::nullopt;
}

// Width of a target in pixels under a pinhole model.
inline double pixel_width(double target_width_m, double distance_m, const CameraModel& cam) {
    if (distance_m <= 0) throw std::invalid_argument("pixel_width: distance must be positive");
    return target_width_m * cam.width_px / (2.0 * distance_m * std::tan(deg2rad(cam.hfov_deg / 2.0)));
}

inline DriBin dri_bin(double width_px, const DriConfig& cfg = {}) {
    if (width_px >= cfg.identify_px) return DriBin::Close;
    if (width_px >= cfg.recognize_px) return DriBin::Medium;
    return DriBin::Distant;
}

// Detection range scaling with radar cross section: range falls with the
// fourth root of the RCS ratio.
inline double radar_range(double reference_range_m, double rcs_ratio) {
    if (reference_range_m <= 0 || rcs_ratio <= 0)
        throw std::invalid_argument("radar_range: arguments must be positive");
    return reference_range_m * std::pow(rcs_ratio, 0.25);
}

// ---------------------------------------------------------------------------
// NMEA 0183 (GGA / RMC subset)

enum class NmeaStatus { Ok, NoFix, Rejected };

struct NmeaResult {
    NmeaStatus status = NmeaStatus::Rejected;
    GeoPosition position;      // valid when status == Ok
    std::string sentence_type; // "GGA" or "RMC" when recognized
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    size_t start = 0;
    while (true) {
        size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || p != end) return std::nullopt;
    return v;
}

// ddmm.mmmm (or dddmm.mmmm for longitude) to signed decimal degrees.
inline std::optional<double> parse_nmea_angle(std::string_view value, std::string_view hemi) {
    auto v = parse_double(value);
    if (!v || hemi.size() != 1) return std::nullopt;
    const double deg = std::floor(*v / 100.0);
    const double minutes = *v - deg * 100.0;
    if (minutes >= 60.0) return std::nullopt;
    double out = deg + minutes / 60.0;
    const char h = hemi[0];
    if (h == 'S' || h == 'W') out = -out;
    else if (h != 'N' && h != 'E') return std::nullopt;
    return out;
}

}  // namespace detail

// Parses one GGA or RMC sentence. Sentences that fail the checksum or do not
// have the expected shape are Rejected; syntactically fine sentences whose
// receiver reports no fix are NoFix. RMC carries no altitude; it is left 0.
inline NmeaResult parse_nmea(std::string_view line) {
    NmeaResult res;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
    if (line.size() < 9 || line[0] != '$') return res;
    const size_t star = line.rfind('*');
    if (star == std::string_view::npos || star + 3 != line.size()) return res;

    unsigned checksum = 0;
    for (size_t i = 1; i < star; ++i) checksum ^= static_cast<unsigned char>(line[i]);
    unsigned stated = 0;
    {
        auto hex = line.substr(star + 1, 2);
        auto [p, ec] = std::from_chars(hex.data(), hex.data() + 2, stated, 16);
        if (ec != std::errc{} || p != hex.data() + 2) return res;
    }
    if (checksum != stated) return res;

    const auto fields = detail::split_fields(line.substr(1, star - 1), ',');
    if (fields.empty() || fields[0].size() < 5) return res;
    const std::string_view type = fields[0].substr(fields[0].size() - 3);

    if (type == "GGA") {
        res.sentence_type = "GGA";
        if (fields.size() < 10) return res;
        auto quality = detail::parse_double(fields[6]);
        if (!quality) return res;
        auto lat = detail::parse_nmea_angle(fields[2], fields[3]);
        auto lon = detail::parse_nmea_angle(fields[4], fields[5]);
        auto alt = detail::parse_double(fields[9]);
        if (*quality == 0.0) {
            res.status = NmeaStatus::NoFix;
            return res;
        }
        if (!lat || !lon || !alt) return res;
        res.status = NmeaStatus::Ok;
        res.position = {*lat, *lon, *alt};
        return res;
    }
    if (type == "RMC") {
        res.sentence_type = "RMC";
        if (fields.size() < 7) return res;
        if (fields[2] == "V") {
            res.status = NmeaStatus::NoFix;
            return res;
        }
        if (fields[2] != "A") return res;
        auto lat = detail::parse_nmea_angle(fields[3], fields[4]);
        auto lon = detail::parse_nmea_angle(fields[5], fields[6]);
        if (!lat || !lon) return res;
        res.status = NmeaStatus::Ok;
        res.position = {*lat, *lon, 0.0};
        return res;
    }
    return res;
}

}  // namespace skyfuse
