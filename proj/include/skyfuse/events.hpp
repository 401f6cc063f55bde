#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "skyfuse/adsb.hpp"
#include "skyfuse/core.hpp"
#include "skyfuse/fusion.hpp"
#include "skyfuse/platform.hpp"

namespace skyfuse {

// Run logs are JSON Lines: one self-describing object per line, discriminated
// by "type". Everything the replay and report tools need must round-trip
// through here.

inline nlohmann::json detection_event(const Detection& d) {
    nlohmann::json j = to_json(d);
    j["type"] = "detection";
    return j;
}

inline nlohmann::json fusion_event(const FusionOutput& out) {
    nlohmann::json j{{"type", "fusion"},
                     {"t", out.t},
                     {"confidence", out.confidence},
                     {"sensors_detecting", out.sensors_detecting}};
    if (out.cls)
        j["class"] = to_string(*out.cls);
    else
        j["class"] = nullptr;
    return j;
}

inline nlohmann::json servo_event(const ServoCommand& cmd) {
    return {{"type", "servo"},
            {"t", cmd.t},
            {"pan_deg", cmd.pan_deg},
            {"tilt_deg", cmd.tilt_deg},
            {"source", to_string(cmd.source)},
            {"pan_count", cmd.pan_count},
            {"tilt_count", cmd.tilt_count}};
}

inline nlohmann::json fcam_track_event(std::int64_t t, int track_id, double cx, double cy,
                                       double vx, double vy, const AngleOffset& offset,
                                       bool confirmed) {
    return {{"type", "fcam_track"},
            {"t", t},
            {"track_id", track_id},
            {"cx", cx},
            {"cy", cy},
            {"vx", vx},
            {"vy", vy},
            {"offset", {{"az_deg", offset.az_deg}, {"el_deg", offset.el_deg}}},
            {"confirmed", confirmed}};
}

inline nlohmann::json adsb_event(std::int64_t t, const adsb::AircraftTrackEntry& e,
                                 bool displayable) {
    char icao[8];
    std::snprintf(icao, sizeof icao, "%06X", e.icao);
    nlohmann::json j{{"type", "adsb"},
                     {"t", t},
                     {"icao", std::string(icao)},
                     {"callsign", e.callsign},
                     {"category", adsb::to_string(e.category)},
                     {"class", to_string(e.cls)},
                     {"confidence", e.confidence},
                     {"displayable", displayable}};
    if (e.position) {
        j["distance_m"] = e.distance_m;
        j["azimuth_deg"] = e.azimuth_deg;
        j["elevation_deg"] = e.elevation_deg;
    }
    if (e.alt_ft) j["alt_ft"] = *e.alt_ft;
    return j;
}

struct TruthTargetRecord {
    std::string name;
    TargetClass cls = TargetClass::Drone;
    double distance_m = 0;
    double azimuth_deg = 0;
    double elevation_deg = 0;
    bool ir_visible = false;
    bool vcam_visible = false;
};

inline nlohmann::json truth_event(std::int64_t t, const std::vector<TruthTargetRecord>& targets) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& tr : targets)
        arr.push_back({{"name", tr.name},
                       {"class", to_string(tr.cls)},
                       {"distance_m", tr.distance_m},
                       {"azimuth_deg", tr.azimuth_deg},
                       {"elevation_deg", tr.elevation_deg},
                       {"ir_visible", tr.ir_visible},
                       {"vcam_visible", tr.vcam_visible}});
    return {{"type", "truth"}, {"t", t}, {"targets", arr}};
}

inline void write_event(std::ostream& os, const nlohmann::json& j) { os << j.dump() << '\n'; }

inline std::vector<nlohmann::json> load_events(std::istream& in) {
    std::vector<nlohmann::json> events;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        try {
            events.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("event log line " + std::to_string(lineno) +
                              " is not valid JSON: " + e.what());
        }
        if (!events.back().contains("type") || !events.back().contains("t"))
            throw SchemaError("event log line " + std::to_string(lineno) +
                              " lacks type or t");
    }
    return events;
}

inline std::vector<Detection> detections_from_events(const std::vector<nlohmann::json>& events) {
    std::vector<Detection> out;
    for (const auto& e : events)
        if (e.at("type") == "detection") out.push_back(detection_from_json(e));
    return out;
}

// Reconstruct the poll-by-poll fusion input from a detection log: at each
// poll instant every sensor contributes its newest report from the window
// (poll - period, poll]. Poll instants are taken from the logged fusion
// events when present, so a replay lines up tick for tick with the original
// run; otherwise a fresh schedule is synthesized at the given period.
inline std::vector<TimelineEntry> polls_from_events(const std::vector<nlohmann::json>& events,
                                                    std::int64_t poll_period_ms = 100) {
    if (poll_period_ms <= 0) throw SchemaError("poll period must be positive");
    std::vector<Detection> dets = detections_from_events(events);
    std::sort(dets.begin(), dets.end(),
              [](const Detection& a, const Detection& b) { return a.t < b.t; });

    std::vector<std::int64_t> poll_times;
    for (const auto& e : events)
        if (e.at("type") == "fusion") poll_times.push_back(e.at("t").get<std::int64_t>());
    std::sort(poll_times.begin(), poll_times.end());
    poll_times.erase(std::unique(poll_times.begin(), poll_times.end()), poll_times.end());
    if (poll_times.empty()) {
        const std::int64_t last = dets.empty() ? 0 : dets.back().t;
        for (std::int64_t t = 0; t <= last; t += poll_period_ms) poll_times.push_back(t);
    }

    std::vector<TimelineEntry> timeline;
    for (std::int64_t poll_t : poll_times) {
        TimelineEntry entry;
        entry.t = poll_t;
        for (const auto& d : dets) {
            if (d.t > poll_t) break;
            if (d.t <= poll_t - poll_period_ms) continue;
            const auto row = fusion_row(d.sensor);
            if (row) entry.reports[*row] = d;
        }
        timeline.push_back(entry);
    }
    return timeline;
}

}  // namespace skyfuse
