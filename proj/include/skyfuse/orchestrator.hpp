#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "skyfuse/adsb.hpp"
#include "skyfuse/audio.hpp"
#include "skyfuse/core.hpp"
#include "skyfuse/eval.hpp"
#include "skyfuse/events.hpp"
#include "skyfuse/fusion.hpp"
#include "skyfuse/platform.hpp"
#include "skyfuse/sim.hpp"
#include "skyfuse/tracking.hpp"
#include "skyfuse/vision.hpp"

namespace skyfuse {

// ---------------------------------------------------------------------------
// Logging, controlled by the SKYFUSE_LOG environment variable

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
    static const LogLevel lvl = [] {
        const char* env = std::getenv("SKYFUSE_LOG");
        if (!env) return LogLevel::Quiet;
        const std::string s(env);
        if (s == "debug") return LogLevel::Debug;
        if (s == "info") return LogLevel::Info;
        return LogLevel::Quiet;
    }();
    return lvl;
}

inline void log_line(LogLevel lvl, const std::string& msg) {
    if (int(lvl) <= int(log_level())) std::cerr << "[skyfuse] " << msg << '\n';
}

// ---------------------------------------------------------------------------
// Bounded single-producer single-consumer queue. The deterministic scheduler
// below interleaves workers on one thread, so a plain ring buffer suffices;
// the drop-oldest policy is what keeps a stalled consumer from ever blocking
// a producer.

template <typename T>
class SpscQueue {
  public:
    explicit SpscQueue(size_t capacity = 64) : cap_(capacity) {
        if (capacity == 0) throw std::invalid_argument("SpscQueue: zero capacity");
    }

    void push(T v) {
        if (buf_.size() == cap_) {
            buf_.pop_front();
            ++dropped_;
        }
        buf_.push_back(std::move(v));
    }

    std::optional<T> pop() {
        if (buf_.empty()) return std::nullopt;
        T v = std::move(buf_.front());
        buf_.pop_front();
        return v;
    }

    bool empty() const { return buf_.empty(); }
    size_t size() const { return buf_.size(); }
    size_t capacity() const { return cap_; }
    std::uint64_t dropped() const { return dropped_; }

  private:
    size_t cap_;
    std::deque<T> buf_;
    std::uint64_t dropped_ = 0;
};

// ---------------------------------------------------------------------------
// Rates and run configuration

struct RateTable {
    double poll_hz = 10.0;          // main loop polls the worker queues
    double servo_hz = 5.0;          // pointing commands (ControlConfig enforces it)
    double adsb_display_hz = 0.5;   // aircraft list refresh
};

inline void validate(const RateTable& r) {
    if (r.poll_hz <= 0 || r.servo_hz <= 0 || r.adsb_display_hz <= 0)
        throw SchemaError("all rates must be positive");
}

// Tick instants for a worker: floor(i * 1000 / rate) ms while inside the run.
inline std::vector<std::int64_t> fire_times_ms(double rate_hz, double duration_s) {
    if (rate_hz <= 0 || duration_s <= 0)
        throw std::invalid_argument("fire_times_ms: rate and duration must be positive");
    const auto end = std::int64_t(std::llround(duration_s * 1000.0));
    std::vector<std::int64_t> out;
    for (std::int64_t i = 0;; ++i) {
        const auto t = std::int64_t(std::floor(double(i) * 1000.0 / rate_hz));
        if (t >= end) break;
        out.push_back(t);
    }
    return out;
}

struct ReconfigEntry {
    std::int64_t t_ms = 0;
    FusionConfig fusion;
};

struct RunConfig {
    std::string scenario_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;  // overrides the scenario's seed
    bool realtime = false;
    FusionConfig fusion;
    ControlConfig control;
    TrackerConfig tracker;
    GmmConfig gmm;
    RateTable rates;
    std::vector<ReconfigEntry> reconfigure;    // applied at poll boundaries
    std::vector<SensorId> idle_sensors;        // commanded idle for the whole run
};

inline FusionConfig fusion_config_from_json(const nlohmann::json& j, FusionConfig base = {}) {
    try {
        base.min_sensors = j.value("min_sensors", base.min_sensors);
        base.window_rows = j.value("window_rows", base.window_rows);
        for (SensorId s : kFusionSensors) {
            const int row = *fusion_row(s);
            const std::string key = to_string(s);
            if (j.contains("weights") && j.at("weights").contains(key))
                base.weights[row] = j.at("weights").at(key).get<double>();
            if (j.contains("include") && j.at("include").contains(key))
                base.include[row] = j.at("include").at(key).get<bool>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad fusion config: ") + e.what());
    }
    validate(base);
    return base;
}

inline ControlConfig control_config_from_json(const nlohmann::json& j, ControlConfig base = {}) {
    try {
        base.enable_ir_and_v = j.value("enable_ir_and_v", base.enable_ir_and_v);
        base.enable_ir = j.value("enable_ir", base.enable_ir);
        base.enable_v = j.value("enable_v", base.enable_v);
        base.enable_fcam = j.value("enable_fcam", base.enable_fcam);
        base.enable_search = j.value("enable_search", base.enable_search);
        if (j.contains("search_pattern"))
            base.search_pattern = parse_search_pattern(j.at("search_pattern").get<std::string>());
        base.search_sweep_rate_dps = j.value("search_sweep_rate_dps", base.search_sweep_rate_dps);
        base.search_elevation_a_deg =
            j.value("search_elevation_a_deg", base.search_elevation_a_deg);
        base.search_elevation_b_low_deg =
            j.value("search_elevation_b_low_deg", base.search_elevation_b_low_deg);
        base.search_elevation_b_high_deg =
            j.value("search_elevation_b_high_deg", base.search_elevation_b_high_deg);
        base.command_period_ms = j.value("command_period_ms", base.command_period_ms);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad control config: ") + e.what());
    }
    if (base.command_period_ms <= 0) throw SchemaError("command_period_ms must be positive");
    return base;
}

inline TrackerConfig tracker_config_from_json(const nlohmann::json& j, TrackerConfig base = {}) {
    try {
        base.non_assignment_cost = j.value("non_assignment_cost", base.non_assignment_cost);
        base.delete_after_invisible = j.value("delete_after_invisible", base.delete_after_invisible);
        base.confirm_after_visible = j.value("confirm_after_visible", base.confirm_after_visible);
        base.min_visibility_ratio = j.value("min_visibility_ratio", base.min_visibility_ratio);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad tracker config: ") + e.what());
    }
    return base;
}

inline GmmConfig gmm_config_from_json(const nlohmann::json& j, GmmConfig base = {}) {
    try {
        base.num_modes = j.value("num_modes", base.num_modes);
        base.learning_rate = j.value("learning_rate", base.learning_rate);
        base.background_threshold = j.value("background_threshold", base.background_threshold);
        base.training_frames = j.value("training_frames", base.training_frames);
        base.match_distance = j.value("match_distance", base.match_distance);
        base.initial_variance = j.value("initial_variance", base.initial_variance);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad foreground config: ") + e.what());
    }
    return base;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    try {
        cfg.scenario_path = j.value("scenario", std::string{});
        cfg.out_dir = j.value("out_dir", cfg.out_dir);
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.realtime = j.value("realtime", false);
        if (j.contains("fusion")) cfg.fusion = fusion_config_from_json(j.at("fusion"));
        if (j.contains("control")) cfg.control = control_config_from_json(j.at("control"));
        if (j.contains("tracker")) cfg.tracker = tracker_config_from_json(j.at("tracker"));
        if (j.contains("gmm")) cfg.gmm = gmm_config_from_json(j.at("gmm"));
        if (j.contains("reconfigure")) {
            for (const auto& rj : j.at("reconfigure")) {
                ReconfigEntry e;
                e.t_ms = rj.at("t_ms").get<std::int64_t>();
                e.fusion = fusion_config_from_json(rj.value("fusion", nlohmann::json::object()),
                                                   cfg.fusion);
                cfg.reconfigure.push_back(e);
            }
            std::sort(cfg.reconfigure.begin(), cfg.reconfigure.end(),
                      [](const ReconfigEntry& a, const ReconfigEntry& b) { return a.t_ms < b.t_ms; });
        }
        if (j.contains("idle_sensors"))
            for (const auto& sj : j.at("idle_sensors"))
                cfg.idle_sensors.push_back(parse_sensor_id(sj.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad run config: ") + e.what());
    }
    return cfg;
}

inline RunConfig load_run_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open run config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("run config is not valid JSON: " + std::string(e.what()));
    }
    return run_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Workers. Each owns its sensor state; commands arrive on one queue,
// results leave on another, and nothing else is shared with the main loop.

struct PoseMsg {
    std::int64_t t = 0;
    double pan_deg = 0;
    double tilt_deg = 0;
    bool run = true;
};

struct VisionMsg {
    std::int64_t t = 0;
    double pan_deg = 0;
    double tilt_deg = 0;
    std::vector<VisionTruth> truth;
    std::optional<Detection> det;
};

struct FcamMsg {
    std::int64_t t = 0;
    bool has_track = false;
    int track_id = -1;
    double cx = 0, cy = 0, vx = 0, vy = 0;
    AngleOffset offset;  // relative to the body boresight, not the turret
    bool confirmed = false;
};

struct AudioMsg {
    std::int64_t t = 0;
    Detection det;
};

struct AdsbMsg {
    std::int64_t t = 0;
    std::vector<adsb::AircraftTrackEntry> entries;
    adsb::TrackerStats stats;
};

class VisionWorker {
  public:
    VisionWorker(SensorId id, ScenarioEngine& eng) : id_(id), eng_(&eng) {}

    SpscQueue<PoseMsg>& commands() { return cmd_; }
    SpscQueue<VisionMsg>& output() { return out_; }

    void tick(std::int64_t t_ms) {
        while (auto c = cmd_.pop()) pose_ = *c;
        if (!pose_.run) return;
        VisionMsg msg;
        msg.t = t_ms;
        msg.pan_deg = pose_.pan_deg;
        msg.tilt_deg = pose_.tilt_deg;
        msg.truth = eng_->vision_truth(id_, t_ms, pose_.pan_deg, pose_.tilt_deg);
        msg.det = eng_->emit_vision(id_, t_ms, pose_.pan_deg, pose_.tilt_deg);
        out_.push(std::move(msg));
    }

  private:
    SensorId id_;
    ScenarioEngine* eng_;
    PoseMsg pose_;
    SpscQueue<PoseMsg> cmd_{16};
    SpscQueue<VisionMsg> out_{16};
};

// Wide-angle pipeline: render, keep the sky half, foreground-model it,
// clean the mask, track the blobs, report the best track as a pointing cue.
class FcamWorker {
  public:
    FcamWorker(ScenarioEngine& eng, const GmmConfig& gmm_cfg, const TrackerConfig& tracker_cfg)
        : eng_(&eng), gmm_cfg_(gmm_cfg), tracker_(tracker_cfg) {}

    SpscQueue<PoseMsg>& commands() { return cmd_; }
    SpscQueue<FcamMsg>& output() { return out_; }

    void tick(std::int64_t t_ms) {
        while (auto c = cmd_.pop()) run_ = c->run;
        if (!run_) return;
        const GrayImage frame = eng_->render_fisheye(t_ms);
        const GrayImage sky = crop(frame, top_half(frame));
        if (!gmm_) gmm_.emplace(sky.width, sky.height, gmm_cfg_);
        const BinaryImage mask = gmm_->apply(sky);
        const BinaryImage opened = morph_open(mask);
        std::vector<std::array<double, 2>> centroids;
        for (const auto& blob : blob_analysis(opened)) centroids.push_back({blob.cx, blob.cy});
        tracker_.step(centroids, t_ms);

        FcamMsg msg;
        msg.t = t_ms;
        if (const Track* best = tracker_.best()) {
            msg.has_track = true;
            msg.track_id = best->id;
            msg.cx = best->x();
            msg.cy = best->y();
            msg.vx = best->vx();
            msg.vy = best->vy();
            // The sky crop keeps the top rows, so cropped coordinates are
            // full-frame coordinates and the full camera model applies.
            msg.offset = bbox_to_offset({best->x() - 0.5, best->y() - 0.5, 1.0, 1.0},
                                        eng_->scenario().fcam);
            msg.confirmed = true;
        }
        out_.push(std::move(msg));
    }

  private:
    ScenarioEngine* eng_;
    GmmConfig gmm_cfg_;
    std::optional<GmmModel> gmm_;
    MultiObjectTracker tracker_;
    bool run_ = true;
    SpscQueue<PoseMsg> cmd_{16};
    SpscQueue<FcamMsg> out_{16};
};

class AudioWorker {
  public:
    explicit AudioWorker(ScenarioEngine& eng) : eng_(&eng) {}

    SpscQueue<PoseMsg>& commands() { return cmd_; }
    SpscQueue<AudioMsg>& output() { return out_; }

    void tick(std::int64_t t_ms) {
        while (auto c = cmd_.pop()) run_ = c->run;
        if (!run_) return;
        out_.push(AudioMsg{t_ms, eng_->emit_audio(t_ms)});
    }

  private:
    ScenarioEngine* eng_;
    bool run_ = true;
    SpscQueue<PoseMsg> cmd_{16};
    SpscQueue<AudioMsg> out_{16};
};

class AdsbWorker {
  public:
    AdsbWorker(ScenarioEngine& eng, const GeoPosition& receiver)
        : eng_(&eng), tracker_(receiver) {}

    SpscQueue<PoseMsg>& commands() { return cmd_; }
    SpscQueue<AdsbMsg>& output() { return out_; }

    void tick(std::int64_t t_ms) {
        while (auto c = cmd_.pop()) run_ = c->run;
        if (!run_) return;
        for (const RawFrame& f : eng_->emit_adsb(t_ms)) tracker_.ingest(f);
        tracker_.expire(t_ms * 1000);
        out_.push(AdsbMsg{t_ms, tracker_.snapshot(), tracker_.stats()});
    }

  private:
    ScenarioEngine* eng_;
    adsb::AdsbTracker tracker_;
    bool run_ = true;
    SpscQueue<PoseMsg> cmd_{16};
    SpscQueue<AdsbMsg> out_{16};
};

// ---------------------------------------------------------------------------
// The virtual-clock run loop

struct SimArtifacts {
    std::filesystem::path events;
    std::filesystem::path metrics;
    std::filesystem::path summary;
    std::filesystem::path gt_ir;
    std::filesystem::path gt_vcam;
    std::filesystem::path pred_ir;
    std::filesystem::path pred_vcam;
};

namespace detail {

// Scheduler entries: worker ticks fire before the poll that reads them, the
// poll before the display refresh, all at the same instant.
enum class TickKind : int { Ir = 0, Vcam = 1, Fcam = 2, Audio = 3, Adsb = 4, Poll = 5, Display = 6 };

inline std::string frame_id(const char* prefix, std::int64_t t_ms) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%06lld", prefix, static_cast<long long>(t_ms));
    return buf;
}

inline void write_gt_rows(std::ostream& os, const std::string& frame,
                          const std::vector<VisionTruth>& truth) {
    for (const auto& tv : truth)
        os << frame << ',' << to_string(tv.cls) << ',' << tv.bbox.x << ',' << tv.bbox.y << ','
           << tv.bbox.w << ',' << tv.bbox.h << ',' << to_string(tv.bin) << '\n';
}

inline void write_pred_row(std::ostream& os, const std::string& frame, const Detection& det) {
    if (!det.bbox) return;
    os << frame << ',' << to_string(det.cls) << ',' << det.confidence << ',' << det.bbox->x << ','
       << det.bbox->y << ',' << det.bbox->w << ',' << det.bbox->h << '\n';
}

}  // namespace detail

inline SimArtifacts run_simulate(const RunConfig& cfg) {
    if (cfg.scenario_path.empty()) throw SchemaError("run config lacks a scenario path");
    validate(cfg.fusion);
    validate(cfg.rates);
    Scenario sc = load_scenario_file(cfg.scenario_path);
    const std::uint64_t seed = cfg.seed.value_or(sc.seed);

    const std::filesystem::path out_dir(cfg.out_dir);
    std::filesystem::create_directories(out_dir);
    SimArtifacts art{out_dir / "events.jsonl", out_dir / "metrics.csv",
                     out_dir / "summary.json", out_dir / "gt_ir.csv",
                     out_dir / "gt_vcam.csv",  out_dir / "pred_ir.csv",
                     out_dir / "pred_vcam.csv"};

    ScenarioEngine eng(sc, seed);
    VisionWorker ir(SensorId::IRcam, eng);
    VisionWorker vcam(SensorId::Vcam, eng);
    FcamWorker fcam(eng, cfg.gmm, cfg.tracker);
    AudioWorker audio(eng);
    AdsbWorker adsb_worker(eng, sc.system.position);

    FusionEngine fusion(cfg.fusion);
    ControlConfig control = cfg.control;
    control.limits = sc.limits;
    PlatformController controller(control);

    const auto idled = [&](SensorId s) {
        return std::find(cfg.idle_sensors.begin(), cfg.idle_sensors.end(), s) !=
               cfg.idle_sensors.end();
    };
    double pan = controller.pan_deg();
    double tilt = controller.tilt_deg();
    ir.commands().push({0, pan, tilt, !idled(SensorId::IRcam)});
    vcam.commands().push({0, pan, tilt, !idled(SensorId::Vcam)});
    fcam.commands().push({0, 0, 0, !idled(SensorId::Fcam)});
    audio.commands().push({0, 0, 0, !idled(SensorId::Audio)});
    adsb_worker.commands().push({0, 0, 0, !idled(SensorId::ADSB)});

    // Schedule
    using detail::TickKind;
    std::vector<std::pair<std::int64_t, TickKind>> schedule;
    const auto add = [&](double rate_hz, TickKind kind) {
        for (std::int64_t t : fire_times_ms(rate_hz, sc.duration_s)) schedule.emplace_back(t, kind);
    };
    add(sc.ir_model.rate_hz, TickKind::Ir);
    add(sc.vcam_model.rate_hz, TickKind::Vcam);
    add(sc.fcam_model.rate_hz, TickKind::Fcam);
    add(sc.audio_model.rate_hz, TickKind::Audio);
    add(sc.adsb_model.rate_hz, TickKind::Adsb);
    add(cfg.rates.poll_hz, TickKind::Poll);
    add(cfg.rates.adsb_display_hz, TickKind::Display);
    std::sort(schedule.begin(), schedule.end());
    const auto poll_period_ms = std::int64_t(std::llround(1000.0 / cfg.rates.poll_hz));

    // Outputs
    std::ofstream events_out(art.events);
    std::ofstream gt_ir_out(art.gt_ir), gt_v_out(art.gt_vcam);
    std::ofstream pred_ir_out(art.pred_ir), pred_v_out(art.pred_vcam);
    if (!events_out || !gt_ir_out || !gt_v_out || !pred_ir_out || !pred_v_out)
        throw SchemaError("cannot write into output directory " + cfg.out_dir);
    gt_ir_out << "frame,class,x,y,w,h,bin\n";
    gt_v_out << "frame,class,x,y,w,h,bin\n";
    pred_ir_out << "frame,class,confidence,x,y,w,h\n";
    pred_v_out << "frame,class,confidence,x,y,w,h\n";

    // Loop state
    std::optional<Detection> fresh_ir, fresh_v, fresh_audio;
    std::optional<FcamMsg> last_fcam;
    std::optional<AdsbMsg> last_adsb;
    std::map<SensorId, std::map<TargetClass, std::int64_t>> sensor_counts;
    std::map<TargetClass, std::int64_t> fusion_counts;
    std::int64_t polls = 0, suppressed_ticks = 0, servo_commands = 0, false_ticks = 0;
    std::map<TargetClass, std::int64_t> false_counts;
    size_t next_reconfig = 0;

    const auto wall_start = std::chrono::steady_clock::now();
    for (const auto& [t, kind] : schedule) {
        if (cfg.realtime)
            std::this_thread::sleep_until(wall_start + std::chrono::milliseconds(t));
        switch (kind) {
            case TickKind::Ir:
                ir.tick(t);
                break;
            case TickKind::Vcam:
                vcam.tick(t);
                break;
            case TickKind::Fcam:
                fcam.tick(t);
                break;
            case TickKind::Audio:
                audio.tick(t);
                break;
            case TickKind::Adsb:
                adsb_worker.tick(t);
                break;
            case TickKind::Display: {
                if (!last_adsb) break;
                for (const auto& entry : last_adsb->entries) {
                    const bool displayable = entry.position && entry.horizontal_m <= 30000.0;
                    write_event(events_out, adsb_event(t, entry, displayable));
                }
                break;
            }
            case TickKind::Poll: {
                ++polls;
                // Drain the worker queues; log what arrived.
                while (auto m = ir.output().pop()) {
                    detail::write_gt_rows(gt_ir_out, detail::frame_id("ir", m->t), m->truth);
                    if (m->det) {
                        write_event(events_out, detection_event(*m->det));
                        detail::write_pred_row(pred_ir_out, detail::frame_id("ir", m->t), *m->det);
                        ++sensor_counts[SensorId::IRcam][m->det->cls];
                        if (m->det->t > t - poll_period_ms) fresh_ir = m->det;
                    }
                }
                while (auto m = vcam.output().pop()) {
                    detail::write_gt_rows(gt_v_out, detail::frame_id("vcam", m->t), m->truth);
                    if (m->det) {
                        write_event(events_out, detection_event(*m->det));
                        detail::write_pred_row(pred_v_out, detail::frame_id("vcam", m->t), *m->det);
                        ++sensor_counts[SensorId::Vcam][m->det->cls];
                        if (m->det->t > t - poll_period_ms) fresh_v = m->det;
                    }
                }
                while (auto m = fcam.output().pop()) {
                    if (m->has_track)
                        write_event(events_out,
                                    fcam_track_event(m->t, m->track_id, m->cx, m->cy, m->vx,
                                                     m->vy, m->offset, m->confirmed));
                    last_fcam = *m;
                }
                while (auto m = audio.output().pop()) {
                    write_event(events_out, detection_event(m->det));
                    ++sensor_counts[SensorId::Audio][m->det.cls];
                    if (m->det.t > t - poll_period_ms) fresh_audio = m->det;
                }
                while (auto m = adsb_worker.output().pop()) last_adsb = *m;

                // The aircraft list persists between updates; fusion takes the
                // nearest transponder target inside the primary field of view.
                std::optional<Detection> adsb_report;
                if (last_adsb) {
                    const adsb::AircraftTrackEntry* pick = nullptr;
                    for (const auto& entry : last_adsb->entries) {
                        if (!entry.position) continue;
                        if (!fov_contains(sc.system, pan, tilt, sc.ir, entry.azimuth_deg,
                                          entry.elevation_deg))
                            continue;
                        if (!pick || entry.distance_m < pick->distance_m) pick = &entry;
                    }
                    if (pick) {
                        adsb_report =
                            Detection{SensorId::ADSB, pick->cls, pick->confidence, std::nullopt, t};
                        write_event(events_out, detection_event(*adsb_report));
                        ++sensor_counts[SensorId::ADSB][pick->cls];
                    }
                }

                // Fusion, with any scheduled reconfiguration first.
                while (next_reconfig < cfg.reconfigure.size() &&
                       cfg.reconfigure[next_reconfig].t_ms <= t) {
                    fusion.reconfigure(cfg.reconfigure[next_reconfig].fusion);
                    ++next_reconfig;
                }
                PollReports reports;
                if (fresh_ir) reports[*fusion_row(SensorId::IRcam)] = *fresh_ir;
                if (fresh_v) reports[*fusion_row(SensorId::Vcam)] = *fresh_v;
                if (fresh_audio) reports[*fusion_row(SensorId::Audio)] = *fresh_audio;
                if (adsb_report) reports[*fusion_row(SensorId::ADSB)] = *adsb_report;
                const FusionOutput fused = fusion.step(reports, t);
                write_event(events_out, fusion_event(fused));
                if (fused.cls)
                    ++fusion_counts[*fused.cls];
                else
                    ++suppressed_ticks;

                // Ground-truth bookkeeping at the poll instant.
                const auto truth_ir = eng.vision_truth(SensorId::IRcam, t, pan, tilt);
                const auto truth_v = eng.vision_truth(SensorId::Vcam, t, pan, tilt);
                std::vector<TruthTargetRecord> records;
                for (size_t i = 0; i < sc.targets.size(); ++i) {
                    const auto st = eng.state_of(i, t / 1000.0);
                    if (!st) continue;
                    const auto rel =
                        relative_geometry_enu(st->enu_m[0], st->enu_m[1], st->enu_m[2]);
                    TruthTargetRecord rec;
                    rec.name = sc.targets[i].name;
                    rec.cls = sc.targets[i].cls;
                    rec.distance_m = rel.sloping_m;
                    rec.azimuth_deg = rel.azimuth_deg;
                    rec.elevation_deg = rel.elevation_deg;
                    for (const auto& tv : truth_ir)
                        if (tv.target_idx == i) rec.ir_visible = true;
                    for (const auto& tv : truth_v)
                        if (tv.target_idx == i) rec.vcam_visible = true;
                    records.push_back(rec);
                }
                write_event(events_out, truth_event(t, records));
                if (fused.cls) {
                    bool grounded = false;
                    for (const auto& rec : records)
                        if (rec.cls == *fused.cls && (rec.ir_visible || rec.vcam_visible))
                            grounded = true;
                    if (!grounded) {
                        ++false_ticks;
                        ++false_counts[*fused.cls];
                    }
                }

                // Steering and pointing.
                SteeringInputs steer;
                if (fresh_ir && fresh_ir->bbox) steer.ir = bbox_to_offset(*fresh_ir->bbox, sc.ir);
                if (fresh_v && fresh_v->bbox) steer.vcam = bbox_to_offset(*fresh_v->bbox, sc.vcam);
                if (last_fcam && last_fcam->has_track && last_fcam->t > t - poll_period_ms)
                    steer.fcam = AngleOffset{wrap180(last_fcam->offset.az_deg - pan),
                                             last_fcam->offset.el_deg - tilt};
                const ControlSource source = select_source(steer, control);
                std::optional<AngleOffset> offset;
                switch (source) {
                    case ControlSource::IRandV:
                        offset = AngleOffset{(steer.ir->az_deg + steer.vcam->az_deg) / 2.0,
                                             (steer.ir->el_deg + steer.vcam->el_deg) / 2.0};
                        break;
                    case ControlSource::IRcam:
                        offset = steer.ir;
                        break;
                    case ControlSource::Vcam:
                        offset = steer.vcam;
                        break;
                    case ControlSource::Fcam:
                        offset = steer.fcam;
                        break;
                    default:
                        break;
                }
                if (const auto cmd = controller.tick(t, source, offset)) {
                    ++servo_commands;
                    write_event(events_out, servo_event(*cmd));
                    pan = cmd->pan_deg;
                    tilt = cmd->tilt_deg;
                    ir.commands().push({t, pan, tilt, !idled(SensorId::IRcam)});
                    vcam.commands().push({t, pan, tilt, !idled(SensorId::Vcam)});
                }
                fresh_ir.reset();
                fresh_v.reset();
                fresh_audio.reset();
                break;
            }
        }
    }

    // Reports
    const std::array<TargetClass, 6> all_classes = {TargetClass::Airplane, TargetClass::Bird,
                                                    TargetClass::Drone,    TargetClass::Helicopter,
                                                    TargetClass::Background, TargetClass::NoData};
    std::ofstream metrics_out(art.metrics);
    metrics_out << "source,class,count\n";
    for (SensorId s : kFusionSensors)
        for (TargetClass c : all_classes)
            if (sensor_may_emit(s, c))
                metrics_out << to_string(s) << ',' << to_string(c) << ','
                            << sensor_counts[s][c] << '\n';
    for (int col = 0; col < kNumFusedClasses; ++col)
        metrics_out << "fusion," << to_string(fused_class_at(col)) << ','
                    << fusion_counts[fused_class_at(col)] << '\n';
    metrics_out << "fusion,none," << suppressed_ticks << '\n';

    nlohmann::json summary{
        {"scenario", cfg.scenario_path},
        {"seed", seed},
        {"duration_s", sc.duration_s},
        {"polls", polls},
        {"servo_commands", servo_commands},
        {"suppressed_ticks", suppressed_ticks},
        {"false_output_ticks", false_ticks},
        {"queue_drops", ir.output().dropped() + vcam.output().dropped() +
                            fcam.output().dropped() + audio.output().dropped() +
                            adsb_worker.output().dropped()}};
    nlohmann::json per_class = nlohmann::json::object();
    for (int col = 0; col < kNumFusedClasses; ++col)
        per_class[to_string(fused_class_at(col))] = fusion_counts[fused_class_at(col)];
    summary["fusion_per_class"] = per_class;
    nlohmann::json false_per_class = nlohmann::json::object();
    for (const auto& [cls, n] : false_counts) false_per_class[to_string(cls)] = n;
    summary["false_per_class"] = false_per_class;
    nlohmann::json sensor_json = nlohmann::json::object();
    for (SensorId s : kFusionSensors) {
        std::int64_t total = 0;
        nlohmann::json by_class = nlohmann::json::object();
        for (TargetClass c : all_classes)
            if (sensor_may_emit(s, c)) {
                by_class[to_string(c)] = sensor_counts[s][c];
                total += sensor_counts[s][c];
            }
        sensor_json[to_string(s)] = {{"reports", total}, {"per_class", by_class}};
    }
    summary["sensor_reports"] = sensor_json;
    if (last_adsb) {
        summary["adsb"] = {{"frames", last_adsb->stats.frames},
                           {"crc_failures", last_adsb->stats.crc_failures},
                           {"non_df17", last_adsb->stats.non_df17},
                           {"position_fixes", last_adsb->stats.position_fixes},
                           {"zone_mismatches", last_adsb->stats.zone_mismatches},
                           {"aircraft", last_adsb->entries.size()}};
    }
    std::ofstream summary_out(art.summary);
    summary_out << summary.dump(2) << '\n';
    log_line(LogLevel::Info, "simulate: " + std::to_string(polls) + " polls, " +
                                 std::to_string(servo_commands) + " servo commands");
    return art;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArtifacts {
    std::filesystem::path metrics_json;
    std::filesystem::path metrics_csv;
    std::filesystem::path sweep_csv;
    std::vector<std::filesystem::path> curves;
};

namespace detail {

inline std::string lower(std::string s) {
    for (char& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline nlohmann::json scope_metrics(const std::vector<EvalFrame>& frames, double iou_thr,
                                    double conf_thr, std::ostream& csv,
                                    const std::string& scope) {
    const ClassCounts counts = match_dataset(frames, iou_thr, conf_thr);
    nlohmann::json per_class = nlohmann::json::object();
    std::vector<double> aps;
    for (const auto& [cls, c] : counts) {
        const Prf m = prf(c);
        const ApResult ap = pr_curve_and_ap(frames, cls, iou_thr);
        per_class[to_string(cls)] = {{"tp", c.tp},
                                     {"fp", c.fp},
                                     {"fn", c.fn},
                                     {"precision", m.precision},
                                     {"recall", m.recall},
                                     {"f1", m.f1},
                                     {"ap", ap.ap},
                                     {"gt", ap.total_gt}};
        csv << scope << ',' << to_string(cls) << ',' << c.tp << ',' << c.fp << ',' << c.fn << ','
            << m.precision << ',' << m.recall << ',' << m.f1 << ',' << ap.ap << '\n';
        if (ap.total_gt > 0) aps.push_back(ap.ap);
    }
    nlohmann::json out{{"per_class", per_class}};
    if (!aps.empty()) out["map"] = map_over_classes(aps);
    return out;
}

}  // namespace detail

inline EvaluateArtifacts run_evaluate(const std::string& gt_path, const std::string& pred_path,
                                      const std::string& out_dir, double iou_thr = 0.5,
                                      double conf_thr = 0.0) {
    std::ifstream gt_in(gt_path);
    if (!gt_in) throw SchemaError("cannot open ground truth: " + gt_path);
    std::ifstream pred_in(pred_path);
    if (!pred_in) throw SchemaError("cannot open predictions: " + pred_path);
    const auto gt = load_ground_truth_csv(gt_in);
    const auto pred = load_predictions_csv(pred_in);
    const auto frames = build_eval_frames(gt, pred);

    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    EvaluateArtifacts art{dir / "metrics.json", dir / "metrics.csv", dir / "sweep.csv", {}};

    std::ofstream csv(art.metrics_csv);
    csv << "scope,class,tp,fp,fn,precision,recall,f1,ap\n";
    nlohmann::json j{{"iou_thr", iou_thr}, {"conf_thr", conf_thr}};
    j["overall"] = detail::scope_metrics(frames, iou_thr, conf_thr, csv, "overall");
    nlohmann::json bins = nlohmann::json::object();
    for (DriBin bin : {DriBin::Close, DriBin::Medium, DriBin::Distant}) {
        const auto sliced = filter_bin(frames, bin);
        bins[to_string(bin)] = detail::scope_metrics(sliced, iou_thr, conf_thr, csv,
                                                     to_string(bin));
    }
    j["bins"] = bins;

    std::ofstream sweep_out(art.sweep_csv);
    sweep_out << sweep_csv(threshold_sweep(frames));

    std::map<TargetClass, bool> has_gt;
    for (const auto& f : frames)
        for (const auto& g : f.gt) has_gt[g.cls] = true;
    for (const auto& [cls, present] : has_gt) {
        if (!present) continue;
        const ApResult ap = pr_curve_and_ap(frames, cls, iou_thr);
        const std::string stem = "pr_" + detail::lower(to_string(cls));
        std::ofstream curve_csv(dir / (stem + ".csv"));
        curve_csv << pr_curve_csv(ap.curve);
        std::ofstream curve_svg(dir / (stem + ".svg"));
        curve_svg << pr_curve_svg(ap.curve, to_string(cls) + " precision/recall");
        art.curves.push_back(dir / (stem + ".csv"));
        art.curves.push_back(dir / (stem + ".svg"));
    }

    std::ofstream json_out(art.metrics_json);
    json_out << j.dump(2) << '\n';
    return art;
}

// ---------------------------------------------------------------------------
// decode-adsb

struct DecodeAdsbStats {
    std::int64_t lines = 0;
    std::int64_t parsed = 0;
    std::int64_t skipped = 0;
};

inline DecodeAdsbStats run_decode_adsb(const std::string& frames_path,
                                       const GeoPosition& receiver, std::ostream& os) {
    std::ifstream in(frames_path);
    if (!in) throw SchemaError("cannot open frame file: " + frames_path);
    adsb::AdsbTracker tracker(receiver);
    DecodeAdsbStats stats;
    std::string line;
    std::int64_t last_t_us = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r" || line[0] == '#') continue;
        ++stats.lines;
        try {
            const RawFrame f = adsb::parse_hex_frame(line);
            tracker.ingest(f);
            last_t_us = std::max(last_t_us, f.t_us);
            ++stats.parsed;
        } catch (const SchemaError& e) {
            ++stats.skipped;
            log_line(LogLevel::Debug, std::string("skipped frame line: ") + e.what());
        }
    }
    if (stats.lines > 0 && stats.parsed == 0)
        throw SchemaError("no parseable frames in " + frames_path);

    for (const auto& entry : tracker.snapshot()) {
        const bool displayable = entry.position && entry.horizontal_m <= 30000.0;
        write_event(os, adsb_event(last_t_us / 1000, entry, displayable));
    }
    const auto& ts = tracker.stats();
    write_event(os, nlohmann::json{{"type", "adsb_stats"},
                                   {"t", last_t_us / 1000},
                                   {"lines", stats.lines},
                                   {"parsed", stats.parsed},
                                   {"skipped", stats.skipped},
                                   {"frames", ts.frames},
                                   {"crc_failures", ts.crc_failures},
                                   {"non_df17", ts.non_df17},
                                   {"position_fixes", ts.position_fixes},
                                   {"zone_mismatches", ts.zone_mismatches}});
    return stats;
}

// ---------------------------------------------------------------------------
// fuse-replay

inline std::vector<FusionOutput> run_fuse_replay(const std::string& events_path,
                                                 const FusionConfig& cfg,
                                                 const std::vector<ReconfigPoint>& schedule,
                                                 std::int64_t poll_period_ms, std::ostream& os) {
    std::ifstream in(events_path);
    if (!in) throw SchemaError("cannot open event log: " + events_path);
    const auto events = load_events(in);
    const auto timeline = polls_from_events(events, poll_period_ms);
    const auto outputs = fusion_replay(timeline, cfg, schedule);
    for (const auto& out : outputs) write_event(os, fusion_event(out));
    return outputs;
}

// ---------------------------------------------------------------------------
// report

inline std::int64_t infer_poll_period_ms(const std::vector<nlohmann::json>& events) {
    std::vector<std::int64_t> ts;
    for (const auto& e : events)
        if (e.at("type") == "fusion") ts.push_back(e.at("t").get<std::int64_t>());
    std::sort(ts.begin(), ts.end());
    std::int64_t period = 0;
    for (size_t i = 1; i < ts.size(); ++i) {
        const std::int64_t d = ts[i] - ts[i - 1];
        if (d > 0 && (period == 0 || d < period)) period = d;
    }
    return period > 0 ? period : 100;
}

inline nlohmann::json run_report(const std::string& events_path) {
    std::ifstream in(events_path);
    if (!in) throw SchemaError("cannot open event log: " + events_path);
    const auto events = load_events(in);
    const std::int64_t period = infer_poll_period_ms(events);

    std::map<std::int64_t, std::optional<TargetClass>> system_out;
    std::map<std::int64_t, std::map<SensorId, TargetClass>> sensor_out;
    for (const auto& entry : polls_from_events(events, period)) {
        for (int row = 0; row < int(kFusionSensors.size()); ++row)
            if (entry.reports[row])
                sensor_out[entry.t][kFusionSensors[row]] = entry.reports[row]->cls;
    }
    for (const auto& e : events) {
        if (e.at("type") != "fusion") continue;
        const auto t = e.at("t").get<std::int64_t>();
        if (e.at("class").is_null())
            system_out[t] = std::nullopt;
        else
            system_out[t] = parse_target_class(e.at("class").get<std::string>());
    }

    // Truth ticks in time order: a drone continuously inside a primary field
    // of view forms one detection opportunity; which classes were visible
    // grounds the false-output analysis.
    struct TruthTick {
        std::int64_t t;
        bool drone_visible;
        std::vector<TargetClass> visible;
    };
    std::vector<TruthTick> truth;
    for (const auto& e : events) {
        if (e.at("type") != "truth") continue;
        TruthTick tick{e.at("t").get<std::int64_t>(), false, {}};
        for (const auto& tj : e.at("targets")) {
            if (!(tj.at("ir_visible").get<bool>() || tj.at("vcam_visible").get<bool>())) continue;
            const TargetClass cls = parse_target_class(tj.at("class").get<std::string>());
            tick.visible.push_back(cls);
            if (cls == TargetClass::Drone) tick.drone_visible = true;
        }
        truth.push_back(tick);
    }
    std::sort(truth.begin(), truth.end(),
              [](const TruthTick& a, const TruthTick& b) { return a.t < b.t; });

    std::vector<Opportunity> opportunities;
    for (size_t i = 0; i < truth.size(); ++i) {
        if (!truth[i].drone_visible) continue;
        Opportunity op;
        op.start_ms = truth[i].t;
        while (i < truth.size() && truth[i].drone_visible) {
            OpportunityTick tick;
            const auto st = sensor_out.find(truth[i].t);
            if (st != sensor_out.end()) tick.sensor_outputs = st->second;
            const auto sy = system_out.find(truth[i].t);
            if (sy != system_out.end()) tick.system_output = sy->second;
            op.ticks.push_back(std::move(tick));
            op.end_ms = truth[i].t;
            ++i;
        }
        opportunities.push_back(std::move(op));
    }
    const OpportunityReport rep = opportunity_analysis(opportunities);

    std::int64_t false_ticks = 0;
    std::map<TargetClass, std::int64_t> false_per_class;
    for (const auto& tick : truth) {
        const auto sy = system_out.find(tick.t);
        if (sy == system_out.end() || !sy->second) continue;
        if (std::find(tick.visible.begin(), tick.visible.end(), *sy->second) ==
            tick.visible.end()) {
            ++false_ticks;
            ++false_per_class[*sy->second];
        }
    }

    nlohmann::json j{{"poll_period_ms", period},
                     {"fusion_ticks", system_out.size()},
                     {"opportunities", rep.opportunity_count},
                     {"false_output_ticks", false_ticks}};
    nlohmann::json frac = nlohmann::json::object(), cnt = nlohmann::json::object();
    for (const auto& [source, f] : rep.success_fraction) frac[source] = f;
    for (const auto& [source, n] : rep.success_count) cnt[source] = n;
    j["success_fraction"] = frac;
    j["success_count"] = cnt;
    nlohmann::json fpc = nlohmann::json::object();
    for (const auto& [cls, n] : false_per_class) fpc[to_string(cls)] = n;
    j["false_per_class"] = fpc;
    return j;
}

// ---------------------------------------------------------------------------
// mfcc-dump

inline void run_mfcc_dump(const std::string& wav_path, bool clips, std::ostream& os) {
    const WavData wav = load_wav(wav_path);
    MfccConfig cfg;
    cfg.sample_rate = wav.sample_rate;
    if (clips) {
        os << "clip,start_s";
        for (int c = 1; c <= cfg.num_coeffs; ++c) os << ",c" << c;
        os << '\n';
        const auto sliced = slice_clips(wav.samples, wav.sample_rate);
        for (size_t i = 0; i < sliced.size(); ++i) {
            const auto feat = NearestCentroidClassifier::feature(mfcc(sliced[i], cfg));
            os << i << ',' << i * 0.5;
            for (double v : feat) os << ',' << v;
            os << '\n';
        }
    } else {
        os << "frame";
        for (int c = 1; c <= cfg.num_coeffs; ++c) os << ",c" << c;
        os << '\n';
        const auto rows = mfcc(wav.samples, cfg);
        for (size_t i = 0; i < rows.size(); ++i) {
            os << i;
            for (double v : rows[i]) os << ',' << v;
            os << '\n';
        }
    }
}

}  // namespace skyfuse
