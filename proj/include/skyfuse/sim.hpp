#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "skyfuse/adsb.hpp"
#include "skyfuse/core.hpp"
#include "skyfuse/geometry.hpp"
#include "skyfuse/image.hpp"
#include "skyfuse/platform.hpp"
#include "skyfuse/rng.hpp"

namespace skyfuse {

// Audio label space, in confusion-matrix row/column order.
constexpr std::array<TargetClass, 3> kAudioClasses = {TargetClass::Drone, TargetClass::Helicopter,
                                                      TargetClass::Background};

inline int audio_index(TargetClass c) {
    for (int i = 0; i < 3; ++i)
        if (kAudioClasses[i] == c) return i;
    throw SchemaError("class outside the audio label set: " + to_string(c));
}

struct Waypoint {
    double t_s = 0;
    std::array<double, 3> enu_m{};  // east, north, up relative to the system
};

struct AdsbEquipment {
    std::uint32_t icao = 0;
    std::string callsign;
    adsb::VehicleCategory category = adsb::VehicleCategory::None;
};

struct TargetSpec {
    std::string name;
    TargetClass cls = TargetClass::Drone;  // visual truth; one of the four fused classes
    double size_m = 0.4;
    TargetClass sound = TargetClass::Background;  // Background = silent
    std::optional<AdsbEquipment> adsb;
    std::vector<Waypoint> trajectory;
};

struct TargetState {
    std::array<double, 3> enu_m{};
    std::array<double, 3> vel_mps{};
};

// Piecewise-linear interpolation along the waypoint list. A single waypoint
// pins the target in place for the whole run; otherwise the target exists
// only between its first and last waypoint times.
inline std::optional<TargetState> target_state(const TargetSpec& spec, double t_s) {
    const auto& wp = spec.trajectory;
    if (wp.empty()) throw SchemaError("target without trajectory: " + spec.name);
    if (wp.size() == 1) return TargetState{wp[0].enu_m, {0, 0, 0}};
    if (t_s < wp.front().t_s || t_s > wp.back().t_s) return std::nullopt;
    size_t i = 0;
    while (i + 2 < wp.size() && t_s >= wp[i + 1].t_s) ++i;
    const auto& a = wp[i];
    const auto& b = wp[i + 1];
    const double span = b.t_s - a.t_s;
    const double u = (t_s - a.t_s) / span;
    TargetState st;
    for (int k = 0; k < 3; ++k) {
        st.enu_m[k] = a.enu_m[k] + u * (b.enu_m[k] - a.enu_m[k]);
        st.vel_mps[k] = (b.enu_m[k] - a.enu_m[k]) / span;
    }
    return st;
}

template <size_t N>
using ConfusionMatrix = std::array<std::array<double, N>, N>;

template <size_t N>
struct ConfidenceModel {
    ConfusionMatrix<N> mean;
    ConfusionMatrix<N> stddev;
};

struct VisionSensorModel {
    double rate_hz = 10.0;
    std::array<double, 3> detect_prob = {0.95, 0.8, 0.35};  // by DRI bin
    ConfusionMatrix<4> confusion{};                         // row: true class
    ConfidenceModel<4> confidence{};
    double bbox_center_jitter_px = 0.5;
    double bbox_size_jitter_px = 0.3;
};

struct AudioSensorModel {
    double rate_hz = 20.0;
    double max_range_m = 40.0;
    ConfusionMatrix<3> confusion{};
    ConfidenceModel<3> confidence{};
};

struct FcamSensorModel {
    double rate_hz = 30.0;
    double max_range_m = 50.0;  // beyond this the dot is below the pixel floor
    double disc_brightness = 0.95;
};

struct AdsbSensorModel {
    double rate_hz = 1.0;
    double ident_period_s = 5.0;
};

struct Scenario {
    int schema_version = 1;
    std::uint64_t seed = 0;
    double duration_s = 0;
    SystemPose system;
    PlatformLimits limits;
    CameraModel ir{24.0, 19.0, 320, 256};
    CameraModel vcam{24.0, 19.0, 640, 512};
    CameraModel fcam{180.0, 90.0, 1024, 768};
    std::vector<TargetSpec> targets;
    VisionSensorModel ir_model;
    VisionSensorModel vcam_model;
    AudioSensorModel audio_model;
    FcamSensorModel fcam_model;
    AdsbSensorModel adsb_model;
};

namespace detail {

template <size_t N>
inline void check_row_stochastic(const ConfusionMatrix<N>& m, const std::string& what) {
    for (const auto& row : m) {
        double sum = 0;
        for (double v : row) {
            if (v < 0) throw SchemaError(what + ": negative confusion entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw SchemaError(what + ": confusion rows must sum to 1");
    }
}

template <size_t N>
inline ConfusionMatrix<N> diagonal_confusion(double correct) {
    if (correct < 0 || correct > 1)
        throw SchemaError("confusion_correct must be in [0,1]");
    ConfusionMatrix<N> m{};
    const double off = (1.0 - correct) / double(N - 1);
    for (size_t i = 0; i < N; ++i)
        for (size_t j = 0; j < N; ++j) m[i][j] = i == j ? correct : off;
    return m;
}

template <size_t N>
inline ConfidenceModel<N> two_level_confidence(std::array<double, 2> correct,
                                               std::array<double, 2> incorrect) {
    ConfidenceModel<N> c;
    for (size_t i = 0; i < N; ++i) {
        for (size_t j = 0; j < N; ++j) {
            c.mean[i][j] = i == j ? correct[0] : incorrect[0];
            c.stddev[i][j] = i == j ? correct[1] : incorrect[1];
        }
    }
    return c;
}

template <size_t N>
inline ConfusionMatrix<N> matrix_from_json(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array() || j.size() != N) throw SchemaError(what + ": expected " +
                                                          std::to_string(N) + " rows");
    ConfusionMatrix<N> m{};
    for (size_t i = 0; i < N; ++i) {
        if (!j[i].is_array() || j[i].size() != N)
            throw SchemaError(what + ": expected " + std::to_string(N) + " columns");
        for (size_t j2 = 0; j2 < N; ++j2) m[i][j2] = j[i][j2].get<double>();
    }
    return m;
}

template <size_t N>
inline nlohmann::json matrix_to_json(const ConfusionMatrix<N>& m) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& row : m) {
        nlohmann::json r = nlohmann::json::array();
        for (double v : row) r.push_back(v);
        j.push_back(r);
    }
    return j;
}

template <size_t N>
inline void sensor_distributions_from_json(const nlohmann::json& j, ConfusionMatrix<N>& confusion,
                                           ConfidenceModel<N>& confidence,
                                           const std::string& what) {
    if (j.contains("confusion"))
        confusion = matrix_from_json<N>(j.at("confusion"), what + ".confusion");
    else if (j.contains("confusion_correct"))
        confusion = diagonal_confusion<N>(j.at("confusion_correct").get<double>());
    check_row_stochastic(confusion, what);

    if (j.contains("confidence_mean") || j.contains("confidence_std")) {
        confidence.mean = matrix_from_json<N>(j.at("confidence_mean"), what + ".confidence_mean");
        confidence.stddev = matrix_from_json<N>(j.at("confidence_std"), what + ".confidence_std");
    } else {
        std::array<double, 2> correct = {0.85, 0.08};
        std::array<double, 2> incorrect = {0.55, 0.10};
        if (j.contains("confidence_correct")) {
            const auto& c = j.at("confidence_correct");
            correct = {c.at(0).get<double>(), c.at(1).get<double>()};
        }
        if (j.contains("confidence_incorrect")) {
            const auto& c = j.at("confidence_incorrect");
            incorrect = {c.at(0).get<double>(), c.at(1).get<double>()};
        }
        confidence = two_level_confidence<N>(correct, incorrect);
    }
}

inline CameraModel camera_from_json(const nlohmann::json& j, const std::string& what) {
    CameraModel cam;
    try {
        cam.hfov_deg = j.at("hfov_deg").get<double>();
        cam.vfov_deg = j.at("vfov_deg").get<double>();
        cam.width_px = j.at("width_px").get<int>();
        cam.height_px = j.at("height_px").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(what + ": " + e.what());
    }
    if (cam.hfov_deg <= 0 || cam.vfov_deg <= 0 || cam.width_px <= 0 || cam.height_px <= 0)
        throw SchemaError(what + ": camera parameters must be positive");
    return cam;
}

inline nlohmann::json camera_to_json(const CameraModel& cam) {
    return {{"hfov_deg", cam.hfov_deg},
            {"vfov_deg", cam.vfov_deg},
            {"width_px", cam.width_px},
            {"height_px", cam.height_px}};
}

// Stateless per-pixel noise so the fisheye backdrop is a function of the
// seed alone. Same mixing as RngStream.
inline double hash_unit(std::uint64_t key, std::uint64_t idx) {
    std::uint64_t z = key + (idx + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    return double(z >> 11) * 0x1.0p-53;
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
    Scenario sc;
    try {
        sc.schema_version = j.at("schema_version").get<int>();
        if (sc.schema_version != 1)
            throw SchemaError("unsupported scenario schema_version " +
                              std::to_string(sc.schema_version));
        sc.seed = j.at("seed").get<std::uint64_t>();
        sc.duration_s = j.at("duration_s").get<double>();
        if (sc.duration_s <= 0) throw SchemaError("duration_s must be positive");

        const auto& sys = j.at("system");
        const auto& pos = sys.at("position");
        sc.system.position = {pos.at("lat_deg").get<double>(), pos.at("lon_deg").get<double>(),
                              pos.at("alt_m").get<double>()};
        sc.system.orientation_deg = sys.value("orientation_deg", 0.0);
        if (sys.contains("limits")) {
            const auto& lim = sys.at("limits");
            sc.limits.pan_min_deg = lim.value("pan_min_deg", sc.limits.pan_min_deg);
            sc.limits.pan_max_deg = lim.value("pan_max_deg", sc.limits.pan_max_deg);
            sc.limits.tilt_min_deg = lim.value("tilt_min_deg", sc.limits.tilt_min_deg);
            sc.limits.tilt_max_deg = lim.value("tilt_max_deg", sc.limits.tilt_max_deg);
            sc.limits.max_slew_dps = lim.value("max_slew_dps", sc.limits.max_slew_dps);
        }

        if (j.contains("cameras")) {
            const auto& cams = j.at("cameras");
            if (cams.contains("ir")) sc.ir = detail::camera_from_json(cams.at("ir"), "cameras.ir");
            if (cams.contains("vcam"))
                sc.vcam = detail::camera_from_json(cams.at("vcam"), "cameras.vcam");
            if (cams.contains("fcam"))
                sc.fcam = detail::camera_from_json(cams.at("fcam"), "cameras.fcam");
        }

        for (const auto& tj : j.at("targets")) {
            TargetSpec t;
            t.name = tj.at("name").get<std::string>();
            t.cls = parse_target_class(tj.at("class").get<std::string>());
            if (!fused_column(t.cls))
                throw SchemaError("target class must be visible matter: " + t.name);
            t.size_m = tj.at("size_m").get<double>();
            if (t.size_m <= 0) throw SchemaError("target size must be positive: " + t.name);
            if (tj.contains("sound")) {
                t.sound = parse_target_class(tj.at("sound").get<std::string>());
                audio_index(t.sound);  // validates the label space
            }
            if (tj.contains("adsb") && !tj.at("adsb").is_null()) {
                const auto& aj = tj.at("adsb");
                AdsbEquipment eq;
                eq.icao = std::uint32_t(std::stoul(aj.at("icao").get<std::string>(), nullptr, 16));
                eq.callsign = aj.value("callsign", std::string{});
                if (aj.contains("category"))
                    eq.category = adsb::parse_vehicle_category(aj.at("category").get<std::string>());
                t.adsb = eq;
            }
            for (const auto& wj : tj.at("trajectory")) {
                Waypoint w;
                w.t_s = wj.at("t_s").get<double>();
                const auto& e = wj.at("enu_m");
                w.enu_m = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()};
                t.trajectory.push_back(w);
            }
            if (t.trajectory.empty()) throw SchemaError("target without waypoints: " + t.name);
            for (size_t i = 1; i < t.trajectory.size(); ++i)
                if (t.trajectory[i].t_s <= t.trajectory[i - 1].t_s)
                    throw SchemaError("waypoint times must increase: " + t.name);
            sc.targets.push_back(std::move(t));
        }

        sc.ir_model.confusion = detail::diagonal_confusion<4>(0.9);
        sc.vcam_model.confusion = detail::diagonal_confusion<4>(0.9);
        sc.audio_model.confusion = detail::diagonal_confusion<3>(0.92);
        sc.ir_model.confidence = detail::two_level_confidence<4>({0.85, 0.08}, {0.55, 0.10});
        sc.vcam_model.confidence = detail::two_level_confidence<4>({0.85, 0.08}, {0.55, 0.10});
        sc.audio_model.confidence = detail::two_level_confidence<3>({0.85, 0.08}, {0.55, 0.10});

        if (j.contains("sensors")) {
            const auto& sj = j.at("sensors");
            for (const std::string key : {"ir", "vcam"}) {
                if (!sj.contains(key)) continue;
                VisionSensorModel& m = key == "ir" ? sc.ir_model : sc.vcam_model;
                const auto& v = sj.at(key);
                m.rate_hz = v.value("rate_hz", m.rate_hz);
                if (v.contains("detect_prob")) {
                    const auto& dp = v.at("detect_prob");
                    m.detect_prob = {dp.at("close").get<double>(), dp.at("medium").get<double>(),
                                     dp.at("distant").get<double>()};
                }
                for (double p : m.detect_prob)
                    if (p < 0 || p > 1) throw SchemaError(key + ": detect_prob outside [0,1]");
                detail::sensor_distributions_from_json<4>(v, m.confusion, m.confidence,
                                                          "sensors." + key);
                m.bbox_center_jitter_px = v.value("bbox_center_jitter_px", m.bbox_center_jitter_px);
                m.bbox_size_jitter_px = v.value("bbox_size_jitter_px", m.bbox_size_jitter_px);
            }
            if (sj.contains("audio")) {
                const auto& v = sj.at("audio");
                sc.audio_model.rate_hz = v.value("rate_hz", sc.audio_model.rate_hz);
                sc.audio_model.max_range_m = v.value("max_range_m", sc.audio_model.max_range_m);
                detail::sensor_distributions_from_json<3>(v, sc.audio_model.confusion,
                                                          sc.audio_model.confidence,
                                                          "sensors.audio");
            }
            if (sj.contains("fcam")) {
                const auto& v = sj.at("fcam");
                sc.fcam_model.rate_hz = v.value("rate_hz", sc.fcam_model.rate_hz);
                sc.fcam_model.max_range_m = v.value("max_range_m", sc.fcam_model.max_range_m);
                sc.fcam_model.disc_brightness =
                    v.value("disc_brightness", sc.fcam_model.disc_brightness);
            }
            if (sj.contains("adsb")) {
                const auto& v = sj.at("adsb");
                sc.adsb_model.rate_hz = v.value("rate_hz", sc.adsb_model.rate_hz);
                sc.adsb_model.ident_period_s = v.value("ident_period_s", sc.adsb_model.ident_period_s);
            }
        }

        for (double r : {sc.ir_model.rate_hz, sc.vcam_model.rate_hz, sc.audio_model.rate_hz,
                         sc.fcam_model.rate_hz, sc.adsb_model.rate_hz})
            if (r <= 0) throw SchemaError("sensor rates must be positive");
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad scenario: ") + e.what());
    }
    return sc;
}

inline nlohmann::json scenario_to_json(const Scenario& sc) {
    nlohmann::json targets = nlohmann::json::array();
    for (const auto& t : sc.targets) {
        nlohmann::json tj{{"name", t.name},
                          {"class", to_string(t.cls)},
                          {"size_m", t.size_m},
                          {"sound", to_string(t.sound)}};
        if (t.adsb) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "%06X", t.adsb->icao);
            tj["adsb"] = {{"icao", std::string(buf)},
                          {"callsign", t.adsb->callsign},
                          {"category", adsb::to_string(t.adsb->category)}};
        }
        nlohmann::json traj = nlohmann::json::array();
        for (const auto& w : t.trajectory)
            traj.push_back({{"t_s", w.t_s}, {"enu_m", {w.enu_m[0], w.enu_m[1], w.enu_m[2]}}});
        tj["trajectory"] = traj;
        targets.push_back(tj);
    }

    auto vision_json = [](const VisionSensorModel& m) {
        return nlohmann::json{
            {"rate_hz", m.rate_hz},
            {"detect_prob",
             {{"close", m.detect_prob[0]}, {"medium", m.detect_prob[1]}, {"distant", m.detect_prob[2]}}},
            {"confusion", detail::matrix_to_json(m.confusion)},
            {"confidence_mean", detail::matrix_to_json(m.confidence.mean)},
            {"confidence_std", detail::matrix_to_json(m.confidence.stddev)},
            {"bbox_center_jitter_px", m.bbox_center_jitter_px},
            {"bbox_size_jitter_px", m.bbox_size_jitter_px}};
    };

    return nlohmann::json{
        {"schema_version", sc.schema_version},
        {"seed", sc.seed},
        {"duration_s", sc.duration_s},
        {"system",
         {{"position",
           {{"lat_deg", sc.system.position.lat_deg},
            {"lon_deg", sc.system.position.lon_deg},
            {"alt_m", sc.system.position.alt_m}}},
          {"orientation_deg", sc.system.orientation_deg},
          {"limits",
           {{"pan_min_deg", sc.limits.pan_min_deg},
            {"pan_max_deg", sc.limits.pan_max_deg},
            {"tilt_min_deg", sc.limits.tilt_min_deg},
            {"tilt_max_deg", sc.limits.tilt_max_deg},
            {"max_slew_dps", sc.limits.max_slew_dps}}}}},
        {"cameras",
         {{"ir", detail::camera_to_json(sc.ir)},
          {"vcam", detail::camera_to_json(sc.vcam)},
          {"fcam", detail::camera_to_json(sc.fcam)}}},
        {"targets", targets},
        {"sensors",
         {{"ir", vision_json(sc.ir_model)},
          {"vcam", vision_json(sc.vcam_model)},
          {"audio",
           {{"rate_hz", sc.audio_model.rate_hz},
            {"max_range_m", sc.audio_model.max_range_m},
            {"confusion", detail::matrix_to_json(sc.audio_model.confusion)},
            {"confidence_mean", detail::matrix_to_json(sc.audio_model.confidence.mean)},
            {"confidence_std", detail::matrix_to_json(sc.audio_model.confidence.stddev)}}},
          {"fcam",
           {{"rate_hz", sc.fcam_model.rate_hz},
            {"max_range_m", sc.fcam_model.max_range_m},
            {"disc_brightness", sc.fcam_model.disc_brightness}}},
          {"adsb",
           {{"rate_hz", sc.adsb_model.rate_hz},
            {"ident_period_s", sc.adsb_model.ident_period_s}}}}}};
}

inline Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open scenario: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("scenario is not valid JSON: " + std::string(e.what()));
    }
    return scenario_from_json(j);
}

// ---------------------------------------------------------------------------
// Deterministic scenario playback

// What a camera could in principle see this instant (geometry only, before
// the detection lottery). Also the source of evaluation ground truth.
struct VisionTruth {
    size_t target_idx = 0;
    TargetClass cls = TargetClass::Drone;
    AngleOffset offset;
    double distance_m = 0;
    double width_px = 0;
    DriBin bin = DriBin::Distant;
    BBox bbox;
};

class ScenarioEngine {
  public:
    explicit ScenarioEngine(Scenario sc, std::uint64_t seed)
        : sc_(std::move(sc)),
          root_(seed),
          rng_ir_(root_.split("ir")),
          rng_vcam_(root_.split("vcam")),
          rng_audio_(root_.split("audio")),
          bg_key_(RngStream(seed).split("fcam-backdrop").next_u64()) {}

    const Scenario& scenario() const { return sc_; }

    std::optional<TargetState> state_of(size_t idx, double t_s) const {
        return target_state(sc_.targets[idx], t_s);
    }

    std::vector<VisionTruth> vision_truth(SensorId cam_id, std::int64_t t_ms, double pan_deg,
                                          double tilt_deg) const {
        const CameraModel& cam = cam_id == SensorId::IRcam ? sc_.ir : sc_.vcam;
        std::vector<VisionTruth> out;
        for (size_t i = 0; i < sc_.targets.size(); ++i) {
            const auto st = state_of(i, t_ms / 1000.0);
            if (!st) continue;
            const auto rel = relative_geometry_enu(st->enu_m[0], st->enu_m[1], st->enu_m[2]);
            const auto off = fov_contains(sc_.system, pan_deg, tilt_deg, cam, rel.azimuth_deg,
                                          rel.elevation_deg);
            if (!off) continue;
            VisionTruth v;
            v.target_idx = i;
            v.cls = sc_.targets[i].cls;
            v.offset = *off;
            v.distance_m = rel.sloping_m;
            v.width_px = pixel_width(sc_.targets[i].size_m, rel.sloping_m, cam);
            v.bin = dri_bin(v.width_px);
            const double cx = cam.width_px / 2.0 + off->az_deg / cam.hfov_deg * cam.width_px;
            const double cy = cam.height_px / 2.0 - off->el_deg / cam.vfov_deg * cam.height_px;
            v.bbox = {cx - v.width_px / 2.0, cy - v.width_px / 2.0, v.width_px, v.width_px};
            out.push_back(v);
        }
        return out;
    }

    // One detection lottery draw for a primary camera tick. At most the
    // strongest (highest-confidence) candidate is reported.
    std::optional<Detection> emit_vision(SensorId cam_id, std::int64_t t_ms, double pan_deg,
                                         double tilt_deg) {
        const VisionSensorModel& model =
            cam_id == SensorId::IRcam ? sc_.ir_model : sc_.vcam_model;
        RngStream& rng = cam_id == SensorId::IRcam ? rng_ir_ : rng_vcam_;

        std::optional<Detection> strongest;
        for (const auto& truth : vision_truth(cam_id, t_ms, pan_deg, tilt_deg)) {
            if (!rng.bernoulli(model.detect_prob[size_t(truth.bin)])) continue;
            const int true_idx = *fused_column(truth.cls);
            const int rep_idx = int(rng.categorical(model.confusion[true_idx]));
            const double conf = rng.truncated_normal(model.confidence.mean[true_idx][rep_idx],
                                                     model.confidence.stddev[true_idx][rep_idx],
                                                     0.0, 1.0);
            BBox box = truth.bbox;
            box.x += rng.normal(0.0, model.bbox_center_jitter_px);
            box.y += rng.normal(0.0, model.bbox_center_jitter_px);
            box.w = std::max(1.0, box.w + rng.normal(0.0, model.bbox_size_jitter_px));
            box.h = std::max(1.0, box.h + rng.normal(0.0, model.bbox_size_jitter_px));
            if (!strongest || conf > strongest->confidence)
                strongest = Detection{cam_id, fused_class_at(rep_idx), conf, box, t_ms};
        }
        return strongest;
    }

    // The microphone always reports something: the confusion row of the
    // nearest audible target in range, or of Background when there is none.
    Detection emit_audio(std::int64_t t_ms) {
        int true_idx = audio_index(TargetClass::Background);
        double best_dist = sc_.audio_model.max_range_m;
        for (size_t i = 0; i < sc_.targets.size(); ++i) {
            if (sc_.targets[i].sound == TargetClass::Background) continue;
            const auto st = state_of(i, t_ms / 1000.0);
            if (!st) continue;
            const double d =
                std::sqrt(st->enu_m[0] * st->enu_m[0] + st->enu_m[1] * st->enu_m[1] +
                          st->enu_m[2] * st->enu_m[2]);
            if (d <= best_dist) {
                best_dist = d;
                true_idx = audio_index(sc_.targets[i].sound);
            }
        }
        const int rep_idx = int(rng_audio_.categorical(sc_.audio_model.confusion[true_idx]));
        const double conf = rng_audio_.truncated_normal(
            sc_.audio_model.confidence.mean[true_idx][rep_idx],
            sc_.audio_model.confidence.stddev[true_idx][rep_idx], 0.0, 1.0);
        return Detection{SensorId::Audio, kAudioClasses[rep_idx], conf, std::nullopt, t_ms};
    }

    // Transponder traffic due at this tick: a position frame per equipped
    // airborne target every second (even/odd alternating), plus an
    // identification frame every ident_period_s.
    std::vector<RawFrame> emit_adsb(std::int64_t t_ms) {
        std::vector<RawFrame> frames;
        const std::int64_t sec = t_ms / 1000;
        for (const auto& target : sc_.targets) {
            if (!target.adsb) continue;
            const auto st = target_state(target, t_ms / 1000.0);
            if (!st) continue;
            const GeoPosition geo =
                geo_from_enu(sc_.system.position, st->enu_m[0], st->enu_m[1], st->enu_m[2]);
            const int alt_ft = int(std::llround(geo.alt_m / kFtToM));
            const std::int64_t t_us = t_ms * 1000;
            if (sec % std::int64_t(sc_.adsb_model.ident_period_s) == 0)
                frames.push_back(adsb::encode_identification(target.adsb->icao,
                                                             target.adsb->callsign,
                                                             target.adsb->category, t_us));
            frames.push_back(adsb::encode_airborne_position(target.adsb->icao, geo.lat_deg,
                                                            geo.lon_deg, alt_ft, sec % 2 == 1,
                                                            t_us));
        }
        return frames;
    }

    // Wide-angle sky view: a static seeded backdrop and one bright disc per
    // target in range. Pure function of (seed, t); the camera is fixed to
    // the body, so the backdrop never moves.
    GrayImage render_fisheye(std::int64_t t_ms) {
        const CameraModel& cam = sc_.fcam;
        if (!backdrop_) {
            GrayImage bg(cam.width_px, cam.height_px);
            for (size_t p = 0; p < bg.px.size(); ++p)
                bg.px[p] = 0.10 + 0.25 * detail::hash_unit(bg_key_, p);
            backdrop_ = std::move(bg);
        }
        GrayImage frame = *backdrop_;
        for (size_t i = 0; i < sc_.targets.size(); ++i) {
            const auto st = state_of(i, t_ms / 1000.0);
            if (!st) continue;
            const auto rel = relative_geometry_enu(st->enu_m[0], st->enu_m[1], st->enu_m[2]);
            if (rel.sloping_m > sc_.fcam_model.max_range_m) continue;
            const double off_az = wrap180(rel.azimuth_deg - sc_.system.orientation_deg);
            if (std::abs(off_az) > cam.hfov_deg / 2.0 ||
                std::abs(rel.elevation_deg) > cam.vfov_deg / 2.0)
                continue;
            const double px = cam.width_px / 2.0 + off_az / cam.hfov_deg * cam.width_px;
            const double py =
                cam.height_px / 2.0 - rel.elevation_deg / cam.vfov_deg * cam.height_px;
            const double ang_diam =
                2.0 * rad2deg(std::atan(sc_.targets[i].size_m / (2.0 * rel.sloping_m)));
            const double radius = std::max(0.6, 0.5 * ang_diam * cam.width_px / cam.hfov_deg);
            const int x0 = std::max(0, int(std::floor(px - radius)));
            const int x1 = std::min(cam.width_px - 1, int(std::ceil(px + radius)));
            const int y0 = std::max(0, int(std::floor(py - radius)));
            const int y1 = std::min(cam.height_px - 1, int(std::ceil(py + radius)));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    if ((x - px) * (x - px) + (y - py) * (y - py) <= radius * radius)
                        frame.at(x, y) = sc_.fcam_model.disc_brightness;
        }
        return frame;
    }

  private:
    Scenario sc_;
    RngStream root_;
    RngStream rng_ir_, rng_vcam_, rng_audio_;
    std::uint64_t bg_key_;
    std::optional<GrayImage> backdrop_;
};

}  // namespace skyfuse
