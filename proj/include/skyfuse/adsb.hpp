#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "skyfuse/core.hpp"
#include "skyfuse/geometry.hpp"

namespace skyfuse {

// One 112-bit extended squitter with its receive time.
struct RawFrame {
    std::array<std::uint8_t, 14> bytes{};
    std::int64_t t_us = 0;
};

namespace adsb {

constexpr std::uint32_t kCrcGenerator = 0xFFF409;  // plus the implicit x^24 term

inline int frame_bit(const RawFrame& f, int i) { return (f.bytes[i / 8] >> (7 - i % 8)) & 1; }

inline std::uint32_t bit_field(const RawFrame& f, int start, int len) {
    std::uint32_t v = 0;
    for (int i = 0; i < len; ++i) v = (v << 1) | std::uint32_t(frame_bit(f, start + i));
    return v;
}

// Remainder of the whole frame against the Mode S generator; zero for an
// undamaged frame because the transmitter stores the parity in the last 24
// bits.
inline std::uint32_t crc_remainder(const RawFrame& f) {
    std::array<std::uint8_t, 112> bits;
    for (int i = 0; i < 112; ++i) bits[i] = std::uint8_t(frame_bit(f, i));
    for (int i = 0; i < 88; ++i) {
        if (!bits[i]) continue;
        bits[i] = 0;
        for (int j = 0; j < 24; ++j) bits[i + 1 + j] ^= (kCrcGenerator >> (23 - j)) & 1;
    }
    std::uint32_t rem = 0;
    for (int i = 88; i < 112; ++i) rem = (rem << 1) | bits[i];
    return rem;
}

inline bool crc_ok(const RawFrame& f) { return crc_remainder(f) == 0; }

inline int downlink_format(const RawFrame& f) { return int(bit_field(f, 0, 5)); }
inline std::uint32_t icao_address(const RawFrame& f) { return bit_field(f, 8, 24); }
inline int type_code(const RawFrame& f) { return int(bit_field(f, 32, 5)); }

constexpr std::string_view kCallsignAlphabet =
    "#ABCDEFGHIJKLMNOPQRSTUVWXYZ##### ###############0123456789######";

enum class VehicleCategory {
    None,
    Light,
    Medium,
    Heavy,
    HighVortex,
    VeryHeavy,
    HighPerformanceHighSpeed,
    Rotorcraft,
    UAV,
};

inline std::string to_string(VehicleCategory c) {
    switch (c) {
        case VehicleCategory::None: return "None";
        case VehicleCategory::Light: return "Light";
        case VehicleCategory::Medium: return "Medium";
        case VehicleCategory::Heavy: return "Heavy";
        case VehicleCategory::HighVortex: return "HighVortex";
        case VehicleCategory::VeryHeavy: return "VeryHeavy";
        case VehicleCategory::HighPerformanceHighSpeed: return "HighPerformanceHighSpeed";
        case VehicleCategory::Rotorcraft: return "Rotorcraft";
        case VehicleCategory::UAV: return "UAV";
    }
    throw InvariantError("unknown VehicleCategory value");
}

inline VehicleCategory parse_vehicle_category(std::string_view s) {
    for (auto c : {VehicleCategory::None, VehicleCategory::Light, VehicleCategory::Medium,
                   VehicleCategory::Heavy, VehicleCategory::HighVortex, VehicleCategory::VeryHeavy,
                   VehicleCategory::HighPerformanceHighSpeed, VehicleCategory::Rotorcraft,
                   VehicleCategory::UAV})
        if (s == to_string(c)) return c;
    throw SchemaError("unknown vehicle category: " + std::string(s));
}

// Emitter category from (type code, 3-bit category value). Set A (TC 4) is
// the fixed-wing weight ladder plus rotorcraft; set B (TC 3) holds UAV.
// Codes outside the supported vocabulary collapse to None.
inline VehicleCategory emitter_category(int tc, int cat) {
    if (tc == 4) {
        switch (cat) {
            case 1: return VehicleCategory::Light;
            case 2: return VehicleCategory::Medium;
            case 3: return VehicleCategory::Heavy;
            case 4: return VehicleCategory::HighVortex;
            case 5: return VehicleCategory::VeryHeavy;
            case 6: return VehicleCategory::HighPerformanceHighSpeed;
            case 7: return VehicleCategory::Rotorcraft;
            default: return VehicleCategory::None;
        }
    }
    if (tc == 3 && cat == 6) return VehicleCategory::UAV;
    return VehicleCategory::None;
}

// Target class and confidence implied by the emitter category. Aircraft with
// no category still overwhelmingly turn out to be airplanes, hence the
// lower-confidence Airplane default; there are no in-between confidences.
inline std::pair<TargetClass, double> category_to_class(VehicleCategory c) {
    switch (c) {
        case VehicleCategory::Rotorcraft: return {TargetClass::Helicopter, 1.0};
        case VehicleCategory::UAV: return {TargetClass::Drone, 1.0};
        case VehicleCategory::None: return {TargetClass::Airplane, 0.75};
        default: return {TargetClass::Airplane, 1.0};
    }
}

struct IdentMessage {
    std::string callsign;  // 8 chars, '#' for out-of-alphabet codes
    VehicleCategory category = VehicleCategory::None;
};

// TC 1..4 aircraft identification.
inline IdentMessage decode_identification(const RawFrame& f) {
    IdentMessage m;
    m.category = emitter_category(type_code(f), int(bit_field(f, 37, 3)));
    for (int i = 0; i < 8; ++i)
        m.callsign += kCallsignAlphabet[bit_field(f, 40 + 6 * i, 6)];
    return m;
}

struct CprFrame {
    bool odd = false;
    std::uint32_t lat_cpr = 0;  // 17 bits
    std::uint32_t lon_cpr = 0;  // 17 bits
    std::optional<int> alt_ft;
    std::int64_t t_us = 0;
};

// TC 9..18 airborne position. Only the 25 ft (Q = 1) altitude encoding is
// produced by the fleet we care about; other codes leave altitude unset.
inline CprFrame decode_airborne_position(const RawFrame& f) {
    CprFrame c;
    c.t_us = f.t_us;
    c.odd = bit_field(f, 53, 1) != 0;
    c.lat_cpr = bit_field(f, 54, 17);
    c.lon_cpr = bit_field(f, 71, 17);
    const std::uint32_t alt_field = bit_field(f, 40, 12);
    if (alt_field != 0 && ((alt_field >> 4) & 1)) {
        const std::uint32_t n = ((alt_field >> 5) << 4) | (alt_field & 0xF);
        c.alt_ft = int(25 * n) - 1000;
    }
    return c;
}

// Longitude zone count at a latitude (standard NL table in closed form).
inline int nl_lookup(double lat_deg) {
    const double lat = std::abs(lat_deg);
    if (lat == 0.0) return 59;
    if (lat > 87.0) return 1;
    if (lat == 87.0) return 2;
    constexpr int nz = 15;
    const double a = 1.0 - std::cos(kPi / (2.0 * nz));
    const double b = std::cos(deg2rad(lat));
    return int(std::floor(2.0 * kPi / std::acos(1.0 - a / (b * b))));
}

// Global (even + odd) airborne position decode. The newest of the two
// frames decides which grid the final position is read from. Returns
// nothing when the frames straddle a longitude zone boundary.
inline std::optional<GeoPosition> cpr_decode_airborne(const CprFrame& even, const CprFrame& odd) {
    if (even.odd || !odd.odd)
        throw std::invalid_argument("cpr_decode_airborne: need one even and one odd frame");
    constexpr double scale = 131072.0;  // 2^17
    const double lat_e = even.lat_cpr / scale;
    const double lat_o = odd.lat_cpr / scale;
    const double dlat_e = 360.0 / 60.0;
    const double dlat_o = 360.0 / 59.0;

    const double j = std::floor(59.0 * lat_e - 60.0 * lat_o + 0.5);
    auto zone_mod = [](double v, double m) {
        const double r = std::fmod(v, m);
        return r < 0 ? r + m : r;
    };
    double rlat_e = dlat_e * (zone_mod(j, 60.0) + lat_e);
    double rlat_o = dlat_o * (zone_mod(j, 59.0) + lat_o);
    if (rlat_e >= 270.0) rlat_e -= 360.0;
    if (rlat_o >= 270.0) rlat_o -= 360.0;
    if (nl_lookup(rlat_e) != nl_lookup(rlat_o)) return std::nullopt;

    const bool newest_odd = odd.t_us >= even.t_us;
    const double lat = newest_odd ? rlat_o : rlat_e;
    if (lat < -90.0 || lat > 90.0) return std::nullopt;

    const int nl = nl_lookup(lat);
    const double lon_e = even.lon_cpr / scale;
    const double lon_o = odd.lon_cpr / scale;
    const double m = std::floor(lon_e * (nl - 1) - lon_o * nl + 0.5);
    const int ni = std::max(nl - (newest_odd ? 1 : 0), 1);
    const double dlon = 360.0 / ni;
    double lon = dlon * (zone_mod(m, double(ni)) + (newest_odd ? lon_o : lon_e));
    if (lon >= 180.0) lon -= 360.0;

    GeoPosition g;
    g.lat_deg = lat;
    g.lon_deg = lon;
    const auto& newest = newest_odd ? odd : even;
    if (newest.alt_ft) g.alt_m = *newest.alt_ft * kFtToM;
    return g;
}

struct VelocityMessage {
    int subtype = 0;
    // Decoded for the ground-speed subtypes (1, 2).
    std::optional<double> ground_speed_kt;
    std::optional<double> track_deg;
    std::optional<int> vertical_rate_fpm;
    // Airspeed subtypes (3, 4) are carried through raw, undecoded.
    std::uint32_t raw_payload = 0;
};

// TC 19 airborne velocity.
inline VelocityMessage decode_velocity(const RawFrame& f) {
    VelocityMessage v;
    v.subtype = int(bit_field(f, 37, 3));
    v.raw_payload = bit_field(f, 45, 22);
    if (v.subtype == 1 || v.subtype == 2) {
        const int scale = v.subtype == 2 ? 4 : 1;  // supersonic subtype
        const bool west = bit_field(f, 45, 1) != 0;
        const int vew = int(bit_field(f, 46, 10));
        const bool south = bit_field(f, 56, 1) != 0;
        const int vns = int(bit_field(f, 57, 10));
        if (vew != 0 && vns != 0) {
            const double ve = (vew - 1) * scale * (west ? -1.0 : 1.0);
            const double vn = (vns - 1) * scale * (south ? -1.0 : 1.0);
            v.ground_speed_kt = std::hypot(ve, vn);
            v.track_deg = wrap360(rad2deg(std::atan2(ve, vn)));
        }
        const bool down = bit_field(f, 68, 1) != 0;
        const int vr = int(bit_field(f, 69, 9));
        if (vr != 0) v.vertical_rate_fpm = (vr - 1) * 64 * (down ? -1 : 1);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Encoding (used by the scenario player and the round-trip tests)

inline void set_bits(RawFrame& f, int start, int len, std::uint32_t value) {
    for (int i = 0; i < len; ++i) {
        const int bit = (value >> (len - 1 - i)) & 1;
        const int pos = start + i;
        if (bit)
            f.bytes[pos / 8] |= std::uint8_t(0x80 >> (pos % 8));
        else
            f.bytes[pos / 8] &= std::uint8_t(~(0x80 >> (pos % 8)));
    }
}

inline void seal_crc(RawFrame& f) {
    set_bits(f, 88, 24, 0);
    const std::uint32_t parity = crc_remainder(f);
    set_bits(f, 88, 24, parity);
}

inline RawFrame make_df17(std::uint32_t icao) {
    RawFrame f;
    set_bits(f, 0, 5, 17);  // DF
    set_bits(f, 5, 3, 5);   // CA
    set_bits(f, 8, 24, icao);
    return f;
}

inline std::pair<int, int> category_code(VehicleCategory c) {
    switch (c) {
        case VehicleCategory::Light: return {4, 1};
        case VehicleCategory::Medium: return {4, 2};
        case VehicleCategory::Heavy: return {4, 3};
        case VehicleCategory::HighVortex: return {4, 4};
        case VehicleCategory::VeryHeavy: return {4, 5};
        case VehicleCategory::HighPerformanceHighSpeed: return {4, 6};
        case VehicleCategory::Rotorcraft: return {4, 7};
        case VehicleCategory::UAV: return {3, 6};
        case VehicleCategory::None: return {4, 0};
    }
    throw InvariantError("unknown VehicleCategory value");
}

inline RawFrame encode_identification(std::uint32_t icao, std::string_view callsign,
                                      VehicleCategory category, std::int64_t t_us = 0) {
    RawFrame f = make_df17(icao);
    f.t_us = t_us;
    const auto [tc, cat] = category_code(category);
    set_bits(f, 32, 5, std::uint32_t(tc));
    set_bits(f, 37, 3, std::uint32_t(cat));
    for (int i = 0; i < 8; ++i) {
        char c = i < int(callsign.size()) ? callsign[i] : ' ';
        const auto pos = kCallsignAlphabet.find(c);
        set_bits(f, 40 + 6 * i, 6, pos == std::string_view::npos ? 32u : std::uint32_t(pos));
    }
    seal_crc(f);
    return f;
}

inline std::uint32_t cpr_encode(double value_deg, double zone_deg) {
    const double frac = std::fmod(value_deg, zone_deg) / zone_deg;
    const double pos = frac < 0 ? frac + 1.0 : frac;
    return std::uint32_t(std::llround(pos * 131072.0)) & 0x1FFFF;
}

inline RawFrame encode_airborne_position(std::uint32_t icao, double lat_deg, double lon_deg,
                                         int alt_ft, bool odd, std::int64_t t_us = 0) {
    RawFrame f = make_df17(icao);
    f.t_us = t_us;
    set_bits(f, 32, 5, 11);  // TC: airborne position, barometric altitude
    set_bits(f, 37, 3, 0);   // surveillance status + single antenna

    std::uint32_t alt_field = 0;
    const int n = (alt_ft + 1000) / 25;
    if (n > 0 && n < 2048) alt_field = (std::uint32_t(n) >> 4 << 5) | 0x10 | (std::uint32_t(n) & 0xF);
    set_bits(f, 40, 12, alt_field);

    set_bits(f, 52, 1, 0);  // time sync flag
    set_bits(f, 53, 1, odd ? 1 : 0);
    const double dlat = odd ? 360.0 / 59.0 : 360.0 / 60.0;
    set_bits(f, 54, 17, cpr_encode(lat_deg, dlat));
    const int nl = std::max(nl_lookup(lat_deg) - (odd ? 1 : 0), 1);
    set_bits(f, 71, 17, cpr_encode(lon_deg, 360.0 / nl));
    seal_crc(f);
    return f;
}

// "t_us,hex" or bare hex; 28 hex digits per frame.
inline RawFrame parse_hex_frame(std::string_view line) {
    RawFrame f;
    const size_t comma = line.find(',');
    std::string_view hex = line;
    if (comma != std::string_view::npos) {
        const auto ts = line.substr(0, comma);
        std::int64_t t = 0;
        bool ok = !ts.empty();
        for (char c : ts) {
            if (c < '0' || c > '9') {
                ok = false;
                break;
            }
            t = t * 10 + (c - '0');
        }
        if (!ok) throw SchemaError("bad frame timestamp: " + std::string(line));
        f.t_us = t;
        hex = line.substr(comma + 1);
    }
    while (!hex.empty() && (hex.back() == '\r' || hex.back() == '\n' || hex.back() == ' '))
        hex.remove_suffix(1);
    if (hex.size() != 28) throw SchemaError("frame must be 28 hex digits: " + std::string(line));
    auto nibble = [&](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        throw SchemaError("bad hex digit in frame: " + std::string(line));
    };
    for (int i = 0; i < 14; ++i)
        f.bytes[i] = std::uint8_t(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
    return f;
}

inline std::string frame_to_hex(const RawFrame& f) {
    static const char* digits = "0123456789ABCDEF";
    std::string s;
    s.reserve(28);
    for (auto b : f.bytes) {
        s += digits[b >> 4];
        s += digits[b & 0xF];
    }
    return s;
}

// ---------------------------------------------------------------------------
// Aircraft bookkeeping

struct AircraftTrackEntry {
    std::uint32_t icao = 0;
    std::string callsign;
    std::optional<GeoPosition> position;
    std::optional<int> alt_ft;
    // Geometry relative to the receiver, valid when position is set.
    double distance_m = 0;  // sloping
    double horizontal_m = 0;
    double azimuth_deg = 0;
    double elevation_deg = 0;
    std::int64_t last_seen_us = 0;
    VehicleCategory category = VehicleCategory::None;
    bool category_known = false;
    TargetClass cls = TargetClass::Airplane;
    double confidence = 0.75;
    std::optional<double> ground_speed_kt;
    std::optional<double> track_deg;
    std::optional<int> vertical_rate_fpm;
};

struct TrackerStats {
    std::int64_t frames = 0;
    std::int64_t crc_failures = 0;
    std::int64_t non_df17 = 0;
    std::int64_t position_fixes = 0;
    std::int64_t zone_mismatches = 0;
};

struct AdsbTrackerConfig {
    double expiry_s = 60.0;        // drop aircraft not heard for this long
    size_t history_cap = 500;      // per aircraft
    double pair_window_s = 10.0;   // max even/odd age difference for a fix
};

// Current picture plus per-aircraft position history, keyed by ICAO address.
class AdsbTracker {
  public:
    explicit AdsbTracker(const GeoPosition& receiver, AdsbTrackerConfig cfg = {})
        : receiver_(receiver), cfg_(cfg) {}

    // Feeds one frame; quietly counts and skips anything that is not a
    // CRC-clean DF17.
    void ingest(const RawFrame& f) {
        stats_.frames += 1;
        if (!crc_ok(f)) {
            stats_.crc_failures += 1;
            return;
        }
        if (downlink_format(f) != 17) {
            stats_.non_df17 += 1;
            return;
        }
        const std::uint32_t icao = icao_address(f);
        auto [slot_it, inserted] = current_.try_emplace(icao);
        AircraftTrackEntry& e = slot_it->second;
        if (inserted) e.icao = icao;  // defaults already say (Airplane, 0.75)
        e.last_seen_us = std::max(e.last_seen_us, f.t_us);

        const int tc = type_code(f);
        if (tc >= 1 && tc <= 4) {
            const auto id = decode_identification(f);
            e.callsign = id.callsign;
            e.category = id.category;
            e.category_known = true;
            std::tie(e.cls, e.confidence) = category_to_class(id.category);
        } else if (tc >= 9 && tc <= 18) {
            const CprFrame c = decode_airborne_position(f);
            auto& slot = c.odd ? last_odd_[icao] : last_even_[icao];
            slot = c;
            const auto& other = c.odd ? last_even_ : last_odd_;
            const auto it = other.find(icao);
            if (it != other.end() &&
                std::abs(c.t_us - it->second.t_us) <= std::int64_t(cfg_.pair_window_s * 1e6)) {
                const CprFrame& even = c.odd ? it->second : c;
                const CprFrame& odd = c.odd ? c : it->second;
                if (const auto pos = cpr_decode_airborne(even, odd)) {
                    stats_.position_fixes += 1;
                    e.position = pos;
                    e.alt_ft = c.alt_ft;
                    const auto rel = relative_geometry(receiver_, *pos);
                    e.distance_m = rel.sloping_m;
                    e.horizontal_m = rel.horizontal_m;
                    e.azimuth_deg = rel.azimuth_deg;
                    e.elevation_deg = rel.elevation_deg;
                    auto& hist = history_[icao];
                    hist.push_back({f.t_us, *pos});
                    if (hist.size() > cfg_.history_cap) hist.pop_front();
                } else {
                    stats_.zone_mismatches += 1;
                }
            }
        } else if (tc == 19) {
            const auto v = decode_velocity(f);
            if (v.ground_speed_kt) e.ground_speed_kt = v.ground_speed_kt;
            if (v.track_deg) e.track_deg = v.track_deg;
            if (v.vertical_rate_fpm) e.vertical_rate_fpm = v.vertical_rate_fpm;
        }
    }

    // Drops aircraft whose last frame is older than the expiry window.
    void expire(std::int64_t now_us) {
        const auto horizon = now_us - std::int64_t(cfg_.expiry_s * 1e6);
        for (auto it = current_.begin(); it != current_.end();) {
            if (it->second.last_seen_us < horizon) {
                last_even_.erase(it->first);
                last_odd_.erase(it->first);
                it = current_.erase(it);
            } else {
                ++it;
            }
        }
    }

    // Current picture ordered by ICAO address.
    std::vector<AircraftTrackEntry> snapshot() const {
        std::vector<AircraftTrackEntry> out;
        out.reserve(current_.size());
        for (const auto& [icao, e] : current_) out.push_back(e);
        return out;
    }

    struct HistoryPoint {
        std::int64_t t_us;
        GeoPosition position;
    };

    const std::deque<HistoryPoint>& history(std::uint32_t icao) const {
        static const std::deque<HistoryPoint> empty;
        const auto it = history_.find(icao);
        return it == history_.end() ? empty : it->second;
    }

    const TrackerStats& stats() const { return stats_; }
    const GeoPosition& receiver() const { return receiver_; }

  private:
    GeoPosition receiver_;
    AdsbTrackerConfig cfg_;
    TrackerStats stats_;
    std::map<std::uint32_t, AircraftTrackEntry> current_;
    std::map<std::uint32_t, CprFrame> last_even_, last_odd_;
    std::map<std::uint32_t, std::deque<HistoryPoint>> history_;
};

}  // namespace adsb
}  // namespace skyfuse
