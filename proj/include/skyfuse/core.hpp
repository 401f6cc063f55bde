#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace skyfuse {

// Thrown when external input (config, scenario, log line, CSV row) does not
// match the documented schema. The CLI maps this to exit code 2.
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a runtime self-check fails (a quantity left its documented
// range, a queue contract was violated, ...). The CLI maps this to exit 3.
struct InvariantError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TargetClass {
    Airplane,
    Bird,
    Drone,
    Helicopter,
    Background,  // audio only: nothing audible
    NoData,      // ADS-B only: no usable emitter category
};

enum class SensorId {
    IRcam,
    Vcam,
    Audio,
    ADSB,
    Fcam,  // steering camera; feeds the platform, never the fusion matrix
};

inline std::string to_string(TargetClass c) {
    switch (c) {
        case TargetClass::Airplane: return "Airplane";
        case TargetClass::Bird: return "Bird";
        case TargetClass::Drone: return "Drone";
        case TargetClass::Helicopter: return "Helicopter";
        case TargetClass::Background: return "Background";
        case TargetClass::NoData: return "NoData";
    }
    throw InvariantError("unknown TargetClass value");
}

inline std::string to_string(SensorId s) {
    switch (s) {
        case SensorId::IRcam: return "IRcam";
        case SensorId::Vcam: return "Vcam";
        case SensorId::Audio: return "Audio";
        case SensorId::ADSB: return "ADSB";
        case SensorId::Fcam: return "Fcam";
    }
    throw InvariantError("unknown SensorId value");
}

inline TargetClass parse_target_class(std::string_view s) {
    if (s == "Airplane") return TargetClass::Airplane;
    if (s == "Bird") return TargetClass::Bird;
    if (s == "Drone") return TargetClass::Drone;
    if (s == "Helicopter") return TargetClass::Helicopter;
    if (s == "Background") return TargetClass::Background;
    if (s == "NoData") return TargetClass::NoData;
    throw SchemaError("unknown target class: " + std::string(s));
}

inline SensorId parse_sensor_id(std::string_view s) {
    if (s == "IRcam") return SensorId::IRcam;
    if (s == "Vcam") return SensorId::Vcam;
    if (s == "Audio") return SensorId::Audio;
    if (s == "ADSB") return SensorId::ADSB;
    if (s == "Fcam") return SensorId::Fcam;
    throw SchemaError("unknown sensor id: " + std::string(s));
}

// Which classes a sensor is allowed to report. The cameras classify visible
// objects, audio can only tell the rotor/engine sounds it was trained on
// apart from background, and ADS-B infers the class from the emitter
// category field (NoData when the category is unusable).
inline bool sensor_may_emit(SensorId sensor, TargetClass cls) {
    switch (sensor) {
        case SensorId::IRcam:
        case SensorId::Vcam:
            return cls == TargetClass::Airplane || cls == TargetClass::Bird ||
                   cls == TargetClass::Drone || cls == TargetClass::Helicopter;
        case SensorId::Audio:
            return cls == TargetClass::Drone || cls == TargetClass::Helicopter ||
                   cls == TargetClass::Background;
        case SensorId::ADSB:
            return cls == TargetClass::Airplane || cls == TargetClass::Drone ||
                   cls == TargetClass::Helicopter || cls == TargetClass::NoData;
        case SensorId::Fcam:
            return false;
    }
    return false;
}

// Column index in the fused class space (Airplane, Bird, Drone, Helicopter).
// Background/NoData carry no class evidence and map to no column.
inline std::optional<int> fused_column(TargetClass cls) {
    switch (cls) {
        case TargetClass::Airplane: return 0;
        case TargetClass::Bird: return 1;
        case TargetClass::Drone: return 2;
        case TargetClass::Helicopter: return 3;
        default: return std::nullopt;
    }
}

constexpr int kNumFusedClasses = 4;

inline TargetClass fused_class_at(int column) {
    switch (column) {
        case 0: return TargetClass::Airplane;
        case 1: return TargetClass::Bird;
        case 2: return TargetClass::Drone;
        case 3: return TargetClass::Helicopter;
    }
    throw InvariantError("fused class column out of range");
}

// Axis-aligned pixel box, origin at top-left of the image.
struct BBox {
    double x = 0;
    double y = 0;
    double w = 0;
    double h = 0;
};

inline double iou(const BBox& a, const BBox& b) {
    if (a.w <= 0 || a.h <= 0 || b.w <= 0 || b.h <= 0)
        throw std::invalid_argument("iou: boxes must have positive extent");
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return inter / uni;
}

// Angular offset from the current boresight, +az right, +el up.
struct AngleOffset {
    double az_deg = 0;
    double el_deg = 0;
};

// One report from one sensor. Timestamps are integer milliseconds on the
// run's monotonic virtual clock. The bbox is present for camera reports only.
struct Detection {
    SensorId sensor = SensorId::IRcam;
    TargetClass cls = TargetClass::Background;
    double confidence = 0;
    std::optional<BBox> bbox;
    std::int64_t t = 0;
};

inline void validate(const Detection& d) {
    if (!sensor_may_emit(d.sensor, d.cls))
        throw SchemaError("sensor " + to_string(d.sensor) + " may not report class " +
                          to_string(d.cls));
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
        throw SchemaError("detection confidence outside [0,1]");
    if (d.bbox && (d.bbox->w <= 0 || d.bbox->h <= 0))
        throw SchemaError("detection bbox must have positive extent");
}

inline nlohmann::json to_json(const BBox& b) {
    return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}};
}

inline BBox bbox_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("bbox must be an object");
    BBox b;
    try {
        b.x = j.at("x").get<double>();
        b.y = j.at("y").get<double>();
        b.w = j.at("w").get<double>();
        b.h = j.at("h").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad bbox: ") + e.what());
    }
    return b;
}

inline nlohmann::json to_json(const Detection& d) {
    nlohmann::json j{{"sensor", to_string(d.sensor)},
                     {"class", to_string(d.cls)},
                     {"confidence", d.confidence},
                     {"t", d.t}};
    if (d.bbox) j["bbox"] = to_json(*d.bbox);
    return j;
}

inline Detection detection_from_json(const nlohmann::json& j) {
    Detection d;
    try {
        d.sensor = parse_sensor_id(j.at("sensor").get<std::string>());
        d.cls = parse_target_class(j.at("class").get<std::string>());
        d.confidence = j.at("confidence").get<double>();
        d.t = j.at("t").get<std::int64_t>();
        if (j.contains("bbox")) d.bbox = bbox_from_json(j.at("bbox"));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad detection: ") + e.what());
    }
    validate(d);
    return d;
}

}  // namespace skyfuse
