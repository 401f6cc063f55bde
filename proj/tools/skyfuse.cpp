#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skyfuse/orchestrator.hpp"

namespace {

// Stream sink that is either stdout or a file the user asked for.
class OutputSink {
  public:
    explicit OutputSink(const std::string& path) {
        if (!path.empty()) {
            file_.open(path);
            if (!file_) throw skyfuse::SchemaError("cannot write output file: " + path);
        }
    }
    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

  private:
    std::ofstream file_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-sensor drone detection engine"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "run a scenario through the virtual-clock loop");
    std::string sim_config, sim_scenario, sim_out;
    std::uint64_t sim_seed = 0;
    bool sim_realtime = false;
    sim->add_option("--config", sim_config, "run configuration JSON");
    sim->add_option("--scenario", sim_scenario, "scenario JSON (overrides the config's path)");
    sim->add_option("--seed", sim_seed, "seed override");
    sim->add_option("--out", sim_out, "output directory");
    sim->add_flag("--realtime", sim_realtime, "pace the virtual clock against wall time");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "score predictions against ground truth");
    std::string eval_gt, eval_pred, eval_out = "out";
    double eval_iou = 0.5, eval_conf = 0.0;
    eval->add_option("--gt", eval_gt, "ground truth CSV (frame,class,x,y,w,h,bin)")->required();
    eval->add_option("--pred", eval_pred, "prediction CSV (frame,class,confidence,x,y,w,h)")
        ->required();
    eval->add_option("--out", eval_out, "output directory");
    eval->add_option("--iou", eval_iou, "IoU threshold");
    eval->add_option("--conf", eval_conf, "confidence threshold");

    // decode-adsb
    auto* dec = app.add_subcommand("decode-adsb", "decode hex transponder frames into a track list");
    std::string dec_frames, dec_out;
    double dec_lat = 0.0, dec_lon = 0.0, dec_alt = 0.0;
    dec->add_option("--frames", dec_frames, "frame file, one [t_us,]hex28 per line")->required();
    dec->add_option("--lat", dec_lat, "receiver latitude, degrees");
    dec->add_option("--lon", dec_lon, "receiver longitude, degrees");
    dec->add_option("--alt", dec_alt, "receiver altitude, metres");
    dec->add_option("--out", dec_out, "output JSONL (default stdout)");

    // mfcc-dump
    auto* mfc = app.add_subcommand("mfcc-dump", "compute cepstral features for a WAV file");
    std::string mfc_wav, mfc_out;
    bool mfc_clips = false;
    mfc->add_option("--wav", mfc_wav, "mono 16-bit PCM WAV")->required();
    mfc->add_flag("--clips", mfc_clips, "average per 1 s clip at 0.5 s steps");
    mfc->add_option("--out", mfc_out, "output CSV (default stdout)");

    // fuse-replay
    auto* rep = app.add_subcommand("fuse-replay", "re-run fusion over a recorded event log");
    std::string rep_events, rep_config, rep_out;
    std::int64_t rep_period = 100;
    int rep_min_sensors = -1, rep_window = -1;
    rep->add_option("--events", rep_events, "events.jsonl from a simulate run")->required();
    rep->add_option("--config", rep_config, "JSON with fusion settings and a reconfigure schedule");
    rep->add_option("--min-sensors", rep_min_sensors, "override: sensors required per poll");
    rep->add_option("--window-rows", rep_window, "override: smoothing window length");
    rep->add_option("--period", rep_period, "poll period in ms");
    rep->add_option("--out", rep_out, "output JSONL (default stdout)");

    // report
    auto* rpt = app.add_subcommand("report", "opportunity and false-output analysis of a run");
    std::string rpt_events, rpt_out;
    rpt->add_option("--events", rpt_events, "events.jsonl from a simulate run")->required();
    rpt->add_option("--out", rpt_out, "write report JSON here as well");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            skyfuse::RunConfig cfg;
            if (!sim_config.empty()) cfg = skyfuse::load_run_config_file(sim_config);
            if (!sim_scenario.empty()) cfg.scenario_path = sim_scenario;
            if (sim->count("--seed")) cfg.seed = sim_seed;
            if (sim->count("--out")) cfg.out_dir = sim_out;
            if (sim_realtime) cfg.realtime = true;
            const auto art = skyfuse::run_simulate(cfg);
            std::cout << "events:  " << art.events.string() << '\n'
                      << "metrics: " << art.metrics.string() << '\n'
                      << "summary: " << art.summary.string() << '\n';
        } else if (*eval) {
            const auto art = skyfuse::run_evaluate(eval_gt, eval_pred, eval_out, eval_iou,
                                                   eval_conf);
            std::ifstream json_in(art.metrics_json);
            std::cout << json_in.rdbuf();
        } else if (*dec) {
            OutputSink sink(dec_out);
            skyfuse::run_decode_adsb(dec_frames, {dec_lat, dec_lon, dec_alt}, sink.stream());
        } else if (*mfc) {
            OutputSink sink(mfc_out);
            skyfuse::run_mfcc_dump(mfc_wav, mfc_clips, sink.stream());
        } else if (*rep) {
            skyfuse::FusionConfig fcfg;
            std::vector<skyfuse::ReconfigPoint> schedule;
            if (!rep_config.empty()) {
                std::ifstream in(rep_config);
                if (!in) throw skyfuse::SchemaError("cannot open config: " + rep_config);
                nlohmann::json j;
                try {
                    in >> j;
                } catch (const nlohmann::json::exception& e) {
                    throw skyfuse::SchemaError("config is not valid JSON: " +
                                               std::string(e.what()));
                }
                if (j.contains("fusion")) fcfg = skyfuse::fusion_config_from_json(j.at("fusion"));
                if (j.contains("reconfigure"))
                    for (const auto& rj : j.at("reconfigure"))
                        schedule.push_back(
                            {rj.at("t_ms").get<std::int64_t>(),
                             skyfuse::fusion_config_from_json(
                                 rj.value("fusion", nlohmann::json::object()), fcfg)});
            }
            if (rep_min_sensors >= 0) fcfg.min_sensors = rep_min_sensors;
            if (rep_window >= 0) fcfg.window_rows = rep_window;
            skyfuse::validate(fcfg);
            OutputSink sink(rep_out);
            skyfuse::run_fuse_replay(rep_events, fcfg, schedule, rep_period, sink.stream());
        } else if (*rpt) {
            const nlohmann::json j = skyfuse::run_report(rpt_events);
            std::cout << j.dump(2) << '\n';
            if (!rpt_out.empty()) {
                std::ofstream out(rpt_out);
                if (!out) throw skyfuse::SchemaError("cannot write report: " + rpt_out);
                out << j.dump(2) << '\n';
            }
        }
    } catch (const skyfuse::SchemaError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const skyfuse::InvariantError& e) {
        std::cerr << "invariant violated: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
