#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "skyfuse/core.hpp"

namespace skyfuse {

// Row order of the fusion matrix. The steering camera has no row: it points
// the platform but casts no class vote.
constexpr std::array<SensorId, 4> kFusionSensors = {SensorId::IRcam, SensorId::Vcam,
                                                    SensorId::Audio, SensorId::ADSB};

inline std::optional<int> fusion_row(SensorId s) {
    for (int i = 0; i < 4; ++i)
        if (kFusionSensors[i] == s) return i;
    return std::nullopt;
}

struct FusionConfig {
    std::array<bool, 4> include = {true, true, true, true};   // by fusion row
    std::array<double, 4> weights = {1.0, 1.0, 1.0, 1.0};     // by fusion row
    int min_sensors = 1;   // sensors that must see something in the same poll
    int window_rows = 10;  // polls of smoothing
};

inline void validate(const FusionConfig& cfg) {
    if (cfg.min_sensors < 1 || cfg.min_sensors > 4)
        throw SchemaError("fusion min_sensors must be in 1..4");
    if (cfg.window_rows < 1) throw SchemaError("fusion window_rows must be positive");
    for (double w : cfg.weights)
        if (w < 0) throw SchemaError("fusion weights must be non-negative");
}

// sensor rows x fused class columns (Airplane, Bird, Drone, Helicopter)
using ResultMatrix = std::array<std::array<double, kNumFusedClasses>, 4>;

// One poll's reports, indexed by fusion row; empty slots are silent sensors.
using PollReports = std::array<std::optional<Detection>, 4>;

// Builds the per-poll score matrix: each included sensor with a class-bearing
// report contributes weight x confidence in its class column. Audio
// "Background" and ADS-B "NoData" rows stay zero: they say "nothing there",
// not "something of some class". Excluded sensors stay zero too.
inline ResultMatrix ingest(const PollReports& reports, const FusionConfig& cfg) {
    ResultMatrix m{};
    for (int r = 0; r < 4; ++r) {
        if (!cfg.include[r] || !reports[r]) continue;
        const Detection& d = *reports[r];
        if (fusion_row(d.sensor) != r)
            throw InvariantError("fusion report filed under the wrong sensor row");
        validate(d);
        if (const auto col = fused_column(d.cls))
            m[r][*col] = cfg.weights[r] * d.confidence;
    }
    return m;
}

// Count of included sensors whose current report claims an actual object.
inline int sensors_detecting(const PollReports& reports, const FusionConfig& cfg) {
    int n = 0;
    for (int r = 0; r < 4; ++r)
        if (cfg.include[r] && reports[r] && fused_column(reports[r]->cls)) n += 1;
    return n;
}

struct FusionOutput {
    std::int64_t t = 0;
    std::optional<TargetClass> cls;  // empty when suppressed
    double confidence = 0;
    int sensors_detecting = 0;
};

// Decision-level fusion with time smoothing: per poll the matrix collapses
// to per-class column sums, the last window_rows of those are summed, and
// the best class wins. Output is suppressed when fewer than min_sensors see
// anything right now, however strong the window looks.
class FusionEngine {
  public:
    explicit FusionEngine(FusionConfig cfg = {}) : cfg_(cfg) { validate(cfg_); }

    FusionOutput step(const PollReports& reports, std::int64_t t) {
        const ResultMatrix m = ingest(reports, cfg_);
        const int detecting = sensors_detecting(reports, cfg_);

        std::array<double, kNumFusedClasses> poll_sum{};
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < kNumFusedClasses; ++c) poll_sum[c] += m[r][c];
        window_.push_back(poll_sum);
        while (window_.size() > size_t(cfg_.window_rows)) window_.pop_front();

        std::array<double, kNumFusedClasses> window_sum{};
        for (const auto& row : window_)
            for (int c = 0; c < kNumFusedClasses; ++c) window_sum[c] += row[c];

        FusionOutput out;
        out.t = t;
        out.sensors_detecting = detecting;

        // Tie order: the classes we are here for win over incidental ones.
        constexpr std::array<int, 4> priority = {2, 3, 0, 1};  // Drone, Heli, Airplane, Bird
        int best = priority[0];
        for (int c : priority)
            if (window_sum[c] > window_sum[best]) best = c;

        int included = 0;
        for (bool inc : cfg_.include) included += inc;

        if (detecting < cfg_.min_sensors || window_sum[best] <= 0.0 || included == 0)
            return out;

        out.cls = fused_class_at(best);
        out.confidence =
            std::min(1.0, std::max(0.0, window_sum[best] / (cfg_.window_rows * included)));
        if (!(out.confidence >= 0.0 && out.confidence <= 1.0))
            throw InvariantError("fusion confidence left [0,1]");
        return out;
    }

    void reconfigure(const FusionConfig& cfg) {
        validate(cfg);
        cfg_ = cfg;
        while (window_.size() > size_t(cfg_.window_rows)) window_.pop_front();
    }

    const FusionConfig& config() const { return cfg_; }
    size_t window_fill() const { return window_.size(); }

  private:
    FusionConfig cfg_;
    std::deque<std::array<double, kNumFusedClasses>> window_;
};

struct TimelineEntry {
    std::int64_t t = 0;
    PollReports reports;
};

struct ReconfigPoint {
    std::int64_t t = 0;
    FusionConfig config;
};

// Replays a recorded poll timeline through a fresh engine. Ticks must come
// in strictly increasing time order. Optional reconfiguration points take
// effect at the first tick at or after their timestamp.
inline std::vector<FusionOutput> fusion_replay(const std::vector<TimelineEntry>& timeline,
                                               const FusionConfig& cfg,
                                               const std::vector<ReconfigPoint>& schedule = {}) {
    for (size_t i = 0; i + 1 < schedule.size(); ++i)
        if (schedule[i].t >= schedule[i + 1].t)
            throw SchemaError("fusion reconfiguration schedule must be time-ordered");
    FusionEngine engine(cfg);
    std::vector<FusionOutput> out;
    out.reserve(timeline.size());
    size_t next_cfg = 0;
    std::int64_t prev_t = 0;
    bool first = true;
    for (const auto& tick : timeline) {
        if (!first && tick.t <= prev_t)
            throw SchemaError("fusion replay input must be sorted by time");
        first = false;
        prev_t = tick.t;
        while (next_cfg < schedule.size() && schedule[next_cfg].t <= tick.t) {
            engine.reconfigure(schedule[next_cfg].config);
            next_cfg += 1;
        }
        out.push_back(engine.step(tick.reports, tick.t));
    }
    return out;
}

}  // namespace skyfuse
