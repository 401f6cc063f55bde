#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "skyfuse/orchestrator.hpp"

using namespace skyfuse;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// A two-second scenario small enough for repeated full runs: one drone with
// a transponder, flying through the primary field of view.
fs::path write_small_scenario(const fs::path& dir) {
    const json j{
        {"schema_version", 1},
        {"seed", 21},
        {"duration_s", 2.0},
        {"system",
         {{"position", {{"lat_deg", 56.0}, {"lon_deg", 12.0}, {"alt_m", 25.0}}}}},
        {"cameras",
         {{"fcam",
           {{"hfov_deg", 180.0}, {"vfov_deg", 90.0}, {"width_px", 256}, {"height_px", 128}}}}},
        {"sensors", {{"fcam", {{"rate_hz", 5.0}}}}},
        {"targets",
         {{{"name", "quad"},
           {"class", "Drone"},
           {"size_m", 0.4},
           {"sound", "Drone"},
           {"adsb", {{"icao", "ABC123"}, {"callsign", "UAV1"}, {"category", "UAV"}}},
           {"trajectory",
            {{{"t_s", 0.0}, {"enu_m", {0.0, 30.0, 2.0}}},
             {{"t_s", 2.0}, {"enu_m", {4.0, 34.0, 3.0}}}}}}}}};
    const fs::path path = dir / "scenario.json";
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    return path;
}

}  // namespace

TEST_CASE("bounded queue drops the oldest entry") {
    SpscQueue<int> q(3);
    CHECK(q.empty());
    CHECK(q.capacity() == 3);
    for (int i = 0; i < 5; ++i) q.push(i);
    CHECK(q.size() == 3);
    CHECK(q.dropped() == 2);
    CHECK(*q.pop() == 2);
    CHECK(*q.pop() == 3);
    CHECK(*q.pop() == 4);
    CHECK_FALSE(q.pop().has_value());
    CHECK_THROWS_AS(SpscQueue<int>(0), std::invalid_argument);
}

TEST_CASE("worker tick schedules") {
    CHECK(fire_times_ms(10.0, 1.0) ==
          std::vector<std::int64_t>{0, 100, 200, 300, 400, 500, 600, 700, 800, 900});
    CHECK(fire_times_ms(0.5, 10.0) == std::vector<std::int64_t>{0, 2000, 4000, 6000, 8000});
    CHECK(fire_times_ms(3.0, 1.0) == std::vector<std::int64_t>{0, 333, 666});
    CHECK_THROWS_AS(fire_times_ms(0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(fire_times_ms(10.0, 0.0), std::invalid_argument);

    RateTable rates;
    rates.poll_hz = 0.0;
    CHECK_THROWS_AS(validate(rates), SchemaError);
}

TEST_CASE("config parsing") {
    SECTION("fusion block") {
        const auto cfg = fusion_config_from_json(
            json{{"min_sensors", 2},
                 {"weights", {{"Audio", 2.5}}},
                 {"include", {{"ADSB", false}}}});
        CHECK(cfg.min_sensors == 2);
        CHECK(cfg.weights[2] == 2.5);
        CHECK_FALSE(cfg.include[3]);
        CHECK(cfg.include[0]);
        CHECK_THROWS_AS(fusion_config_from_json(json{{"min_sensors", 0}}), SchemaError);
        CHECK_THROWS_AS(fusion_config_from_json(json{{"weights", {{"Audio", "x"}}}}),
                        SchemaError);
    }
    SECTION("control block") {
        const auto cfg = control_config_from_json(
            json{{"enable_search", false}, {"search_pattern", "B"}, {"command_period_ms", 500}});
        CHECK_FALSE(cfg.enable_search);
        CHECK(cfg.search_pattern == SearchPattern::B);
        CHECK(cfg.command_period_ms == 500);
        CHECK_THROWS_AS(control_config_from_json(json{{"command_period_ms", 0}}), SchemaError);
        CHECK_THROWS_AS(control_config_from_json(json{{"search_pattern", "C"}}), SchemaError);
    }
    SECTION("tracker and foreground blocks") {
        CHECK(tracker_config_from_json(json{{"confirm_after_visible", 5}}).confirm_after_visible ==
              5);
        CHECK(gmm_config_from_json(json{{"num_modes", 3}}).num_modes == 3);
        CHECK_THROWS_AS(tracker_config_from_json(json{{"non_assignment_cost", "far"}}),
                        SchemaError);
    }
    SECTION("run config") {
        const auto cfg = run_config_from_json(json{
            {"scenario", "s.json"},
            {"seed", 7},
            {"reconfigure", {{{"t_ms", 500}}, {{"t_ms", 100}, {"fusion", {{"min_sensors", 3}}}}}},
            {"idle_sensors", {"Fcam", "Audio"}}});
        CHECK(cfg.scenario_path == "s.json");
        REQUIRE(cfg.seed.has_value());
        CHECK(*cfg.seed == 7);
        REQUIRE(cfg.reconfigure.size() == 2);
        CHECK(cfg.reconfigure[0].t_ms == 100);  // sorted by time
        CHECK(cfg.reconfigure[0].fusion.min_sensors == 3);
        CHECK(cfg.reconfigure[1].t_ms == 500);
        REQUIRE(cfg.idle_sensors.size() == 2);
        CHECK(cfg.idle_sensors[0] == SensorId::Fcam);
        CHECK_THROWS_AS(run_config_from_json(json{{"seed", "x"}}), SchemaError);
    }
    SECTION("run config file") {
        CHECK_THROWS_AS(load_run_config_file("/nonexistent/run.json"), SchemaError);
        const fs::path dir = fresh_dir("skyfuse_badcfg");
        std::ofstream(dir / "bad.json") << "{ not json";
        CHECK_THROWS_AS(load_run_config_file((dir / "bad.json").string()), SchemaError);
    }
}

TEST_CASE("event log parsing") {
    SECTION("valid lines with blanks round trip") {
        Detection d{SensorId::Audio, TargetClass::Drone, 0.7, std::nullopt, 450};
        std::stringstream ss;
        write_event(ss, detection_event(d));
        ss << "\n";
        write_event(ss, fusion_event(FusionOutput{500, TargetClass::Drone, 0.5, 2}));
        const auto events = load_events(ss);
        REQUIRE(events.size() == 2);
        const auto dets = detections_from_events(events);
        REQUIRE(dets.size() == 1);
        CHECK(dets[0].sensor == SensorId::Audio);
        CHECK(dets[0].cls == TargetClass::Drone);
        CHECK(dets[0].confidence == 0.7);
        CHECK(dets[0].t == 450);
    }
    SECTION("bad lines are reported by number") {
        std::istringstream ss("{\"type\":\"x\",\"t\":0}\nnot json\n");
        CHECK_THROWS_WITH(load_events(ss), Catch::Matchers::ContainsSubstring("line 2"));
        std::istringstream missing("{\"type\":\"x\"}\n");
        CHECK_THROWS_WITH(load_events(missing), Catch::Matchers::ContainsSubstring("line 1"));
    }
}

TEST_CASE("poll reconstruction from a detection log") {
    std::stringstream ss;
    write_event(ss, detection_event({SensorId::Vcam, TargetClass::Bird, 0.6, std::nullopt, 0}));
    write_event(ss, detection_event({SensorId::IRcam, TargetClass::Drone, 0.8, std::nullopt, 40}));
    write_event(ss, detection_event({SensorId::IRcam, TargetClass::Drone, 0.9, std::nullopt, 95}));
    write_event(ss, detection_event({SensorId::Audio, TargetClass::Drone, 0.7, std::nullopt, 100}));
    write_event(ss, fusion_event(FusionOutput{100, std::nullopt, 0, 0}));
    write_event(ss, fusion_event(FusionOutput{200, std::nullopt, 0, 0}));
    const auto events = load_events(ss);

    const auto timeline = polls_from_events(events, 100);
    REQUIRE(timeline.size() == 2);
    CHECK(timeline[0].t == 100);

    // Window (0, 100]: the birth-instant report misses it, the newer of the
    // two infrared reports wins, the boundary report is included.
    CHECK_FALSE(timeline[0].reports[1].has_value());
    REQUIRE(timeline[0].reports[0].has_value());
    CHECK(timeline[0].reports[0]->t == 95);
    REQUIRE(timeline[0].reports[2].has_value());
    CHECK(timeline[0].reports[2]->t == 100);

    // Window (100, 200]: nothing qualifies.
    for (const auto& r : timeline[1].reports) CHECK_FALSE(r.has_value());

    SECTION("a schedule is synthesized when the log has no fusion ticks") {
        std::stringstream only;
        write_event(only, detection_event({SensorId::IRcam, TargetClass::Drone, 0.8,
                                           std::nullopt, 250}));
        const auto t2 = polls_from_events(load_events(only), 100);
        REQUIRE(t2.size() == 3);
        CHECK(t2[0].t == 0);
        CHECK(t2[2].t == 200);
    }
    SECTION("the poll period must be positive") {
        CHECK_THROWS_AS(polls_from_events(events, 0), SchemaError);
    }
}

TEST_CASE("inferred poll period") {
    std::stringstream ss;
    write_event(ss, fusion_event(FusionOutput{0, std::nullopt, 0, 0}));
    write_event(ss, fusion_event(FusionOutput{250, std::nullopt, 0, 0}));
    write_event(ss, fusion_event(FusionOutput{500, std::nullopt, 0, 0}));
    CHECK(infer_poll_period_ms(load_events(ss)) == 250);
    CHECK(infer_poll_period_ms({}) == 100);  // fallback
}

TEST_CASE("full runs are reproducible") {
    const fs::path dir = fresh_dir("skyfuse_orch_run");
    RunConfig cfg;
    cfg.scenario_path = write_small_scenario(dir).string();

    cfg.out_dir = (dir / "a").string();
    const SimArtifacts a = run_simulate(cfg);
    cfg.out_dir = (dir / "b").string();
    const SimArtifacts b = run_simulate(cfg);

    const std::string events_a = read_file(a.events);
    CHECK(events_a == read_file(b.events));
    CHECK(read_file(a.summary) == read_file(b.summary));
    CHECK(read_file(a.metrics) == read_file(b.metrics));

    const json summary = json::parse(read_file(a.summary));
    CHECK(summary.at("polls") == 20);  // 10 Hz poll over 2 s
    CHECK(summary.at("queue_drops") == 0);
    CHECK(summary.at("seed") == 21);

    SECTION("a seed override changes the transcript") {
        cfg.out_dir = (dir / "c").string();
        cfg.seed = 22;
        const SimArtifacts c = run_simulate(cfg);
        CHECK(events_a != read_file(c.events));
        CHECK(json::parse(read_file(c.summary)).at("seed") == 22);
    }
    SECTION("the replayed fusion stream matches the live one") {
        std::vector<std::string> live;
        std::istringstream in(events_a);
        std::string line;
        while (std::getline(in, line))
            if (line.find("\"type\":\"fusion\"") != std::string::npos) live.push_back(line);
        REQUIRE(live.size() == 20);

        std::ostringstream replay_os;
        const auto outputs = run_fuse_replay(a.events.string(), FusionConfig{}, {}, 100, replay_os);
        REQUIRE(outputs.size() == live.size());
        std::istringstream replay_in(replay_os.str());
        size_t i = 0;
        while (std::getline(replay_in, line)) {
            REQUIRE(i < live.size());
            CHECK(line == live[i]);
            ++i;
        }
        CHECK(i == live.size());
    }
    SECTION("the run report scores the logged opportunities") {
        const json rep = run_report(a.events.string());
        CHECK(rep.at("poll_period_ms") == 100);
        CHECK(rep.at("fusion_ticks") == 20);
        CHECK(rep.at("opportunities").get<int>() >= 1);
        CHECK(rep.at("success_fraction").contains("system"));
        CHECK(rep.at("success_fraction").contains("Vcam"));
    }
    SECTION("detection metrics come straight off the run artifacts") {
        const auto art = run_evaluate(a.gt_ir.string(), a.pred_ir.string(),
                                      (dir / "eval").string(), 0.5, 0.0);
        const json metrics = json::parse(read_file(art.metrics_json));
        CHECK(metrics.contains("overall"));
        CHECK(metrics.at("iou_thr") == 0.5);
        CHECK(fs::exists(art.sweep_csv));
        for (const auto& curve : art.curves) CHECK(fs::exists(curve));
    }
}

TEST_CASE("idled sensors stay quiet") {
    const fs::path dir = fresh_dir("skyfuse_orch_idle");
    RunConfig cfg;
    cfg.scenario_path = write_small_scenario(dir).string();
    cfg.out_dir = (dir / "out").string();
    cfg.idle_sensors = {SensorId::IRcam, SensorId::Vcam, SensorId::Fcam, SensorId::Audio,
                        SensorId::ADSB};
    const SimArtifacts art = run_simulate(cfg);

    int detections = 0, fusions = 0, tracks = 0;
    std::istringstream in(read_file(art.events));
    std::string line;
    while (std::getline(in, line)) {
        if (line.find("\"type\":\"detection\"") != std::string::npos) ++detections;
        if (line.find("\"type\":\"fusion\"") != std::string::npos) ++fusions;
        if (line.find("\"type\":\"fcam_track\"") != std::string::npos) ++tracks;
    }
    CHECK(detections == 0);
    CHECK(tracks == 0);
    CHECK(fusions == 20);  // the poll loop keeps running
    const json summary = json::parse(read_file(art.summary));
    CHECK(summary.at("fusion_per_class").at("Drone") == 0);
    CHECK(summary.at("suppressed_ticks") == 20);
}

TEST_CASE("wall-clock pacing does not change the transcript") {
    const fs::path dir = fresh_dir("skyfuse_orch_rt");
    const json j{{"schema_version", 1},
                 {"seed", 3},
                 {"duration_s", 0.4},
                 {"system",
                  {{"position", {{"lat_deg", 56.0}, {"lon_deg", 12.0}, {"alt_m", 25.0}}}}},
                 {"cameras",
                  {{"fcam",
                    {{"hfov_deg", 180.0},
                     {"vfov_deg", 90.0},
                     {"width_px", 128},
                     {"height_px", 64}}}}},
                 {"targets",
                  {{{"name", "quad"},
                    {"class", "Drone"},
                    {"size_m", 0.4},
                    {"sound", "Drone"},
                    {"trajectory",
                     {{{"t_s", 0.0}, {"enu_m", {0.0, 30.0, 2.0}}},
                      {{"t_s", 1.0}, {"enu_m", {2.0, 32.0, 2.0}}}}}}}}};
    std::ofstream(dir / "scenario.json") << j.dump() << '\n';

    RunConfig cfg;
    cfg.scenario_path = (dir / "scenario.json").string();
    cfg.out_dir = (dir / "fast").string();
    const SimArtifacts fast = run_simulate(cfg);
    cfg.out_dir = (dir / "paced").string();
    cfg.realtime = true;
    const SimArtifacts paced = run_simulate(cfg);
    CHECK(read_file(fast.events) == read_file(paced.events));
}

TEST_CASE("transponder frame file decoding") {
    const fs::path dir = fresh_dir("skyfuse_orch_adsb");
    {
        std::ofstream out(dir / "frames.txt");
        out << "# capture header\n";
        out << "8D4840D6202CC371C32CE0576098\n";
        out << "this is not a frame\n";
    }
    std::ostringstream os;
    const auto stats =
        run_decode_adsb((dir / "frames.txt").string(), GeoPosition{56.0, 12.0, 25.0}, os);
    CHECK(stats.lines == 2);
    CHECK(stats.parsed == 1);
    CHECK(stats.skipped == 1);
    const std::string text = os.str();
    CHECK(text.find("\"type\":\"adsb\"") != std::string::npos);
    CHECK(text.find("\"type\":\"adsb_stats\"") != std::string::npos);
    CHECK(text.find("4840D6") != std::string::npos);

    SECTION("a file with zero usable frames is an error") {
        std::ofstream(dir / "junk.txt") << "garbage\n";
        std::ostringstream sink;
        CHECK_THROWS_AS(
            run_decode_adsb((dir / "junk.txt").string(), GeoPosition{56.0, 12.0, 25.0}, sink),
            SchemaError);
    }
}

TEST_CASE("cepstral coefficient dump") {
    const fs::path dir = fresh_dir("skyfuse_orch_mfcc");
    std::vector<double> samples(8820);
    for (size_t i = 0; i < samples.size(); ++i)
        samples[i] = 0.4 * std::sin(2.0 * kPi * 200.0 * double(i) / 44100.0);
    save_wav((dir / "tone.wav").string(), 44100, samples);

    std::ostringstream os;
    run_mfcc_dump((dir / "tone.wav").string(), false, os);
    std::istringstream in(os.str());
    std::string header;
    REQUIRE(std::getline(in, header));
    CHECK(header.rfind("frame,c1,", 0) == 0);
    CHECK(header.find("c13") != std::string::npos);
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == 18);  // (8820 - 1323) / 441 + 1 frames
}
