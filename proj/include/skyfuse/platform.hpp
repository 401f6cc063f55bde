#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "skyfuse/core.hpp"
#include "skyfuse/geometry.hpp"

namespace skyfuse {

enum class ControlSource { IRandV, IRcam, Vcam, Fcam, Search, Idle };

inline std::string to_string(ControlSource s) {
    switch (s) {
        case ControlSource::IRandV: return "IRandV";
        case ControlSource::IRcam: return "IRcam";
        case ControlSource::Vcam: return "Vcam";
        case ControlSource::Fcam: return "Fcam";
        case ControlSource::Search: return "Search";
        case ControlSource::Idle: return "Idle";
    }
    throw InvariantError("unknown ControlSource value");
}

inline ControlSource parse_control_source(std::string_view s) {
    for (auto c : {ControlSource::IRandV, ControlSource::IRcam, ControlSource::Vcam,
                   ControlSource::Fcam, ControlSource::Search, ControlSource::Idle})
        if (s == to_string(c)) return c;
    throw SchemaError("unknown control source: " + std::string(s));
}

// Angular offset of a bbox centre from the camera boresight under the linear
// pixel-angle map; +az right, +el up (image rows grow downward).
inline AngleOffset bbox_to_offset(const BBox& box, const CameraModel& cam) {
    if (cam.width_px <= 0 || cam.height_px <= 0)
        throw std::invalid_argument("bbox_to_offset: camera without pixel size");
    const double cx = box.x + box.w / 2.0;
    const double cy = box.y + box.h / 2.0;
    return {(cx - cam.width_px / 2.0) * cam.hfov_deg / cam.width_px,
            (cam.height_px / 2.0 - cy) * cam.vfov_deg / cam.height_px};
}

struct PlatformLimits {
    double pan_min_deg = -45.0;
    double pan_max_deg = 45.0;
    double tilt_min_deg = 0.0;
    double tilt_max_deg = 45.0;
    double max_slew_dps = 90.0;
};

enum class SearchPattern { A, B };

inline std::string to_string(SearchPattern p) {
    return p == SearchPattern::A ? "A" : "B";
}

inline SearchPattern parse_search_pattern(std::string_view s) {
    if (s == "A") return SearchPattern::A;
    if (s == "B") return SearchPattern::B;
    throw SchemaError("unknown search pattern: " + std::string(s));
}

struct ControlConfig {
    bool enable_ir_and_v = true;
    bool enable_ir = true;
    bool enable_v = true;
    bool enable_fcam = true;
    bool enable_search = true;
    SearchPattern search_pattern = SearchPattern::A;
    double search_sweep_rate_dps = 15.0;
    double search_elevation_a_deg = 10.0;
    double search_elevation_b_low_deg = 5.0;
    double search_elevation_b_high_deg = 15.0;
    std::int64_t command_period_ms = 200;  // 5 Hz servo command rate
    PlatformLimits limits;
};

// What each steering source offers this poll.
struct SteeringInputs {
    std::optional<AngleOffset> ir;
    std::optional<AngleOffset> vcam;
    std::optional<AngleOffset> fcam;
};

// Fixed priority: both primary cameras agreeing beats either alone, any
// primary camera beats the wide-angle spotter, and with nothing in sight we
// search (unless search is disabled, in which case the platform holds).
inline ControlSource select_source(const SteeringInputs& in, const ControlConfig& cfg) {
    if (cfg.enable_ir_and_v && in.ir && in.vcam) return ControlSource::IRandV;
    if (cfg.enable_ir && in.ir) return ControlSource::IRcam;
    if (cfg.enable_v && in.vcam) return ControlSource::Vcam;
    if (cfg.enable_fcam && in.fcam) return ControlSource::Fcam;
    if (cfg.enable_search) return ControlSource::Search;
    return ControlSource::Idle;
}

// RC-servo encoding: 1500 us pulse is centred, 10 us per degree, and the
// controller counts quarter-microseconds.
inline double servo_pulse_us(double angle_deg) { return 1500.0 + 10.0 * angle_deg; }
inline std::uint16_t servo_count(double angle_deg) {
    return std::uint16_t(std::lround(4.0 * servo_pulse_us(angle_deg)));
}

struct ServoCommand {
    std::int64_t t = 0;
    double pan_deg = 0;
    double tilt_deg = 0;
    ControlSource source = ControlSource::Idle;
    std::uint16_t pan_count = 0;
    std::uint16_t tilt_count = 0;
};

// Owns the pan/tilt state. tick() is called at the poll rate but emits at
// most one command per command_period_ms; motion toward the commanded target
// respects the slew limit, and search sweeps at its own slower rate.
class PlatformController {
  public:
    explicit PlatformController(ControlConfig cfg = {}) : cfg_(cfg) {
        pan_ = std::clamp(0.0, cfg_.limits.pan_min_deg, cfg_.limits.pan_max_deg);
        tilt_ = std::clamp(0.0, cfg_.limits.tilt_min_deg, cfg_.limits.tilt_max_deg);
    }

    std::optional<ServoCommand> tick(std::int64_t t_ms, ControlSource source,
                                     std::optional<AngleOffset> offset) {
        if (has_commanded_ && t_ms - last_cmd_ms_ < cfg_.command_period_ms) return std::nullopt;
        if (source == ControlSource::Idle) return std::nullopt;

        const double dt =
            (has_commanded_ ? double(t_ms - last_cmd_ms_) : double(cfg_.command_period_ms)) / 1000.0;
        const auto& lim = cfg_.limits;

        double target_pan = pan_, target_tilt = tilt_;
        double pan_rate = lim.max_slew_dps;
        if (source == ControlSource::Search) {
            pan_rate = cfg_.search_sweep_rate_dps;
            target_pan = search_dir_ > 0 ? lim.pan_max_deg : lim.pan_min_deg;
            target_tilt = cfg_.search_pattern == SearchPattern::A
                              ? cfg_.search_elevation_a_deg
                              : (search_leg_high_ ? cfg_.search_elevation_b_high_deg
                                                  : cfg_.search_elevation_b_low_deg);
        } else if (offset) {
            target_pan = std::clamp(pan_ + offset->az_deg, lim.pan_min_deg, lim.pan_max_deg);
            target_tilt = std::clamp(tilt_ + offset->el_deg, lim.tilt_min_deg, lim.tilt_max_deg);
        }

        pan_ += std::clamp(target_pan - pan_, -pan_rate * dt, pan_rate * dt);
        tilt_ += std::clamp(target_tilt - tilt_, -lim.max_slew_dps * dt, lim.max_slew_dps * dt);
        pan_ = std::clamp(pan_, lim.pan_min_deg, lim.pan_max_deg);
        tilt_ = std::clamp(tilt_, lim.tilt_min_deg, lim.tilt_max_deg);

        if (source == ControlSource::Search) {
            const double end = search_dir_ > 0 ? lim.pan_max_deg : lim.pan_min_deg;
            if (std::abs(pan_ - end) < 1e-9) {
                search_dir_ = -search_dir_;
                search_leg_high_ = !search_leg_high_;  // only pattern B reads this
            }
        }

        last_cmd_ms_ = t_ms;
        has_commanded_ = true;
        return ServoCommand{t_ms,           pan_,
                            tilt_,          source,
                            servo_count(pan_), servo_count(tilt_)};
    }

    double pan_deg() const { return pan_; }
    double tilt_deg() const { return tilt_; }
    const ControlConfig& config() const { return cfg_; }

  private:
    ControlConfig cfg_;
    double pan_ = 0;
    double tilt_ = 0;
    std::int64_t last_cmd_ms_ = 0;
    bool has_commanded_ = false;
    int search_dir_ = 1;
    bool search_leg_high_ = false;
};

}  // namespace skyfuse
