#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "skyfuse/core.hpp"
#include "skyfuse/geometry.hpp"

namespace skyfuse {

struct GtBox {
    TargetClass cls = TargetClass::Drone;
    BBox box;
    DriBin bin = DriBin::Distant;
};

struct PredBox {
    TargetClass cls = TargetClass::Drone;
    double confidence = 0;
    BBox box;
};

struct EvalFrame {
    std::string frame_id;
    std::vector<GtBox> gt;
    std::vector<PredBox> pred;
};

struct MatchCounts {
    int tp = 0, fp = 0, fn = 0;
};

using ClassCounts = std::map<TargetClass, MatchCounts>;

struct Prf {
    double precision = 0, recall = 0, f1 = 0;
};

inline Prf prf(const MatchCounts& c) {
    Prf out;
    if (c.tp + c.fp > 0) out.precision = double(c.tp) / double(c.tp + c.fp);
    if (c.tp + c.fn > 0) out.recall = double(c.tp) / double(c.tp + c.fn);
    if (out.precision + out.recall > 0)
        out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

namespace detail {

// Confidence-descending order with a full tiebreak so matching does not
// depend on the order detections arrived in.
inline bool pred_rank_before(const PredBox& a, const PredBox& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.box.x != b.box.x) return a.box.x < b.box.x;
    if (a.box.y != b.box.y) return a.box.y < b.box.y;
    if (a.box.w != b.box.w) return a.box.w < b.box.w;
    return a.box.h < b.box.h;
}

// Ground-truth-centric matching for one frame and one class: each truth
// claims the strongest not-yet-claimed detection that overlaps it enough.
// Returns a TP flag per detection (detections already rank-sorted).
inline std::vector<char> match_ranked(const std::vector<PredBox>& ranked,
                                      const std::vector<BBox>& truths, double iou_thr) {
    std::vector<char> is_tp(ranked.size(), 0);
    std::vector<char> claimed(ranked.size(), 0);
    for (const BBox& truth : truths) {
        for (size_t d = 0; d < ranked.size(); ++d) {
            if (claimed[d]) continue;
            if (iou(ranked[d].box, truth) >= iou_thr) {
                claimed[d] = 1;
                is_tp[d] = 1;
                break;
            }
        }
    }
    return is_tp;
}

}  // namespace detail

// Per-class TP/FP/FN for one annotated frame. Detections below conf_thr are
// dropped before matching; of several detections on one truth only the
// strongest counts, the rest are false positives.
inline ClassCounts match_detections(const std::vector<PredBox>& dets,
                                    const std::vector<GtBox>& gt, double iou_thr,
                                    double conf_thr) {
    if (iou_thr < 0 || iou_thr > 1 || conf_thr < 0 || conf_thr > 1)
        throw std::invalid_argument("thresholds must be in [0,1]");
    ClassCounts counts;
    for (const auto& g : gt) counts[g.cls];
    for (const auto& d : dets)
        if (d.confidence >= conf_thr) counts[d.cls];

    for (auto& [cls, c] : counts) {
        std::vector<PredBox> ranked;
        for (const auto& d : dets)
            if (d.cls == cls && d.confidence >= conf_thr) ranked.push_back(d);
        std::sort(ranked.begin(), ranked.end(), detail::pred_rank_before);
        std::vector<BBox> truths;
        for (const auto& g : gt)
            if (g.cls == cls) truths.push_back(g.box);
        const auto is_tp = detail::match_ranked(ranked, truths, iou_thr);
        for (char f : is_tp) f ? ++c.tp : ++c.fp;
        c.fn = int(truths.size()) - c.tp;
    }
    return counts;
}

inline ClassCounts match_dataset(const std::vector<EvalFrame>& frames, double iou_thr,
                                 double conf_thr) {
    ClassCounts total;
    for (const auto& f : frames) {
        for (const auto& [cls, c] : match_detections(f.pred, f.gt, iou_thr, conf_thr)) {
            total[cls].tp += c.tp;
            total[cls].fp += c.fp;
            total[cls].fn += c.fn;
        }
    }
    return total;
}

struct PrPoint {
    double threshold = 0;
    double recall = 0;
    double precision = 0;
};

struct PrCurve {
    std::vector<PrPoint> points;
};

struct ApResult {
    PrCurve curve;
    double ap = 0;
    int total_gt = 0;
    int total_pred = 0;
};

// Area under the uninterpolated precision/recall curve: walk the ranked
// detections and accumulate precision at every recall increment.
inline double ap_from_ranked(const std::vector<char>& is_tp, int total_gt) {
    if (total_gt <= 0) return 0.0;
    double ap = 0;
    int tp = 0;
    for (size_t r = 0; r < is_tp.size(); ++r) {
        if (!is_tp[r]) continue;
        ++tp;
        ap += double(tp) / double(r + 1) / double(total_gt);
    }
    return ap;
}

inline ApResult pr_curve_and_ap(const std::vector<EvalFrame>& frames, TargetClass cls,
                                double iou_thr) {
    // Match within each frame first, then pool the ranked outcomes.
    std::vector<std::pair<double, char>> pooled;  // (confidence, is_tp)
    int total_gt = 0;
    for (const auto& f : frames) {
        std::vector<PredBox> ranked;
        for (const auto& d : f.pred)
            if (d.cls == cls) ranked.push_back(d);
        std::sort(ranked.begin(), ranked.end(), detail::pred_rank_before);
        std::vector<BBox> truths;
        for (const auto& g : f.gt)
            if (g.cls == cls) truths.push_back(g.box);
        total_gt += int(truths.size());
        const auto is_tp = detail::match_ranked(ranked, truths, iou_thr);
        for (size_t d = 0; d < ranked.size(); ++d)
            pooled.emplace_back(ranked[d].confidence, is_tp[d]);
    }
    std::stable_sort(pooled.begin(), pooled.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });

    ApResult out;
    out.total_gt = total_gt;
    out.total_pred = int(pooled.size());
    std::vector<char> is_tp(pooled.size());
    int tp = 0, fp = 0;
    for (size_t r = 0; r < pooled.size(); ++r) {
        is_tp[r] = pooled[r].second;
        pooled[r].second ? ++tp : ++fp;
        PrPoint p;
        p.threshold = pooled[r].first;
        p.precision = double(tp) / double(tp + fp);
        p.recall = total_gt > 0 ? double(tp) / double(total_gt) : 0.0;
        out.curve.points.push_back(p);
    }
    out.ap = ap_from_ranked(is_tp, total_gt);
    return out;
}

// Unweighted mean of per-class average precisions.
inline double map_over_classes(const std::vector<double>& per_class_ap) {
    if (per_class_ap.empty()) throw std::invalid_argument("mAP over an empty class set");
    double sum = 0;
    for (double ap : per_class_ap) sum += ap;
    return sum / double(per_class_ap.size());
}

struct SweepRow {
    double conf_thr = 0;
    int tp = 0, fp = 0, fn = 0;
    Prf metrics;
};

// F1 as a function of the confidence threshold, IoU fixed at 0.5, counts
// pooled across classes.
inline std::vector<SweepRow> threshold_sweep(const std::vector<EvalFrame>& frames) {
    std::vector<SweepRow> rows;
    for (int step = 1; step <= 10; ++step) {
        SweepRow row;
        row.conf_thr = step / 10.0;
        for (const auto& [cls, c] : match_dataset(frames, 0.5, row.conf_thr)) {
            row.tp += c.tp;
            row.fp += c.fp;
            row.fn += c.fn;
        }
        row.metrics = prf({row.tp, row.fp, row.fn});
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Anchor estimation

struct AnchorBox {
    double w = 0, h = 0;
};

struct AnchorResult {
    std::vector<AnchorBox> anchors;
    double mean_iou = 0;
};

// Overlap of two sizes as boxes sharing a corner at the origin.
inline double anchor_iou(const AnchorBox& a, const AnchorBox& b) {
    const double inter = std::min(a.w, b.w) * std::min(a.h, b.h);
    return inter / (a.w * a.h + b.w * b.h - inter);
}

namespace detail {

inline double anchor_score(const std::vector<AnchorBox>& boxes,
                           const std::vector<AnchorBox>& anchors) {
    double sum = 0;
    for (const auto& b : boxes) {
        double best = 0;
        for (const auto& a : anchors) best = std::max(best, anchor_iou(b, a));
        sum += best;
    }
    return sum / double(boxes.size());
}

inline size_t farthest_box(const std::vector<AnchorBox>& boxes,
                           const std::vector<AnchorBox>& anchors) {
    size_t pick = 0;
    double worst = -1;
    for (size_t i = 0; i < boxes.size(); ++i) {
        double best = 0;
        for (const auto& a : anchors) best = std::max(best, anchor_iou(boxes[i], a));
        if (1.0 - best > worst) {
            worst = 1.0 - best;
            pick = i;
        }
    }
    return pick;
}

// Lloyd refinement under the 1-IoU metric. Cluster means are not guaranteed
// optimal for this distance, so the best anchor set seen at any iteration is
// kept, not just the final one.
inline AnchorResult lloyd_best_seen(const std::vector<AnchorBox>& boxes,
                                    std::vector<AnchorBox> anchors) {
    const size_t k = anchors.size();
    AnchorResult best{anchors, anchor_score(boxes, anchors)};
    std::vector<size_t> assign(boxes.size(), 0), prev;
    for (int iter = 0; iter < 100; ++iter) {
        for (size_t i = 0; i < boxes.size(); ++i) {
            double top = -1;
            for (size_t a = 0; a < k; ++a) {
                const double v = anchor_iou(boxes[i], anchors[a]);
                if (v > top) {
                    top = v;
                    assign[i] = a;
                }
            }
        }
        if (assign == prev) break;
        prev = assign;
        std::vector<double> sw(k, 0), sh(k, 0);
        std::vector<int> n(k, 0);
        for (size_t i = 0; i < boxes.size(); ++i) {
            sw[assign[i]] += boxes[i].w;
            sh[assign[i]] += boxes[i].h;
            ++n[assign[i]];
        }
        for (size_t a = 0; a < k; ++a) {
            if (n[a] > 0)
                anchors[a] = {sw[a] / n[a], sh[a] / n[a]};
            else
                anchors[a] = boxes[farthest_box(boxes, anchors)];
        }
        const double score = anchor_score(boxes, anchors);
        if (score > best.mean_iou) best = {anchors, score};
    }
    return best;
}

}  // namespace detail

// k-means over box sizes with 1-IoU as the distance. Deterministic:
// farthest-point seeding from ten spread-out start boxes, plus a warm start
// that extends the best (k-1)-anchor set, which makes mean_iou non-decreasing
// in k on fixed data.
inline AnchorResult anchor_kmeans(const std::vector<AnchorBox>& boxes, int k) {
    if (boxes.empty()) throw std::invalid_argument("anchor_kmeans: no boxes");
    for (const auto& b : boxes)
        if (b.w <= 0 || b.h <= 0) throw std::invalid_argument("anchor_kmeans: non-positive box");
    std::vector<std::pair<double, double>> distinct;
    for (const auto& b : boxes) distinct.emplace_back(b.w, b.h);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (k < 1 || size_t(k) > distinct.size())
        throw std::invalid_argument("anchor_kmeans: k must be in [1, distinct box count]");

    AnchorResult carried;  // best solution for the previous k
    for (int kk = 1; kk <= k; ++kk) {
        AnchorResult best;
        auto consider = [&](std::vector<AnchorBox> seed) {
            AnchorResult r = detail::lloyd_best_seen(boxes, std::move(seed));
            if (r.mean_iou > best.mean_iou) best = std::move(r);
        };
        for (int restart = 0; restart < 10; ++restart) {
            std::vector<AnchorBox> seed{boxes[restart * boxes.size() / 10]};
            while (int(seed.size()) < kk)
                seed.push_back(boxes[detail::farthest_box(boxes, seed)]);
            consider(std::move(seed));
        }
        if (kk > 1) {
            std::vector<AnchorBox> seed = carried.anchors;
            seed.push_back(boxes[detail::farthest_box(boxes, seed)]);
            consider(std::move(seed));
        }
        carried = std::move(best);
    }
    std::sort(carried.anchors.begin(), carried.anchors.end(),
              [](const AnchorBox& a, const AnchorBox& b) {
                  return a.w * a.h != b.w * b.h ? a.w * a.h < b.w * b.h : a.w < b.w;
              });
    return carried;
}

// ---------------------------------------------------------------------------
// Detection-opportunity analysis

struct OpportunityTick {
    std::map<SensorId, TargetClass> sensor_outputs;
    std::optional<TargetClass> system_output;
};

struct Opportunity {
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    std::vector<OpportunityTick> ticks;
};

struct OpportunityReport {
    int opportunity_count = 0;
    std::map<std::string, int> success_count;
    std::map<std::string, double> success_fraction;
};

// For every source, the fraction of opportunities in which it called Drone at
// least once. The fused system is scored under the key "system".
inline OpportunityReport opportunity_analysis(const std::vector<Opportunity>& log) {
    std::vector<std::pair<std::int64_t, std::int64_t>> spans;
    for (const auto& op : log) {
        if (op.end_ms < op.start_ms) throw SchemaError("opportunity interval ends before it starts");
        spans.emplace_back(op.start_ms, op.end_ms);
    }
    std::sort(spans.begin(), spans.end());
    for (size_t i = 1; i < spans.size(); ++i)
        if (spans[i].first < spans[i - 1].second)
            throw SchemaError("opportunity intervals overlap");

    OpportunityReport rep;
    rep.opportunity_count = int(log.size());
    for (SensorId s : {SensorId::IRcam, SensorId::Vcam, SensorId::Audio, SensorId::ADSB,
                       SensorId::Fcam})
        rep.success_count[to_string(s)] = 0;
    rep.success_count["system"] = 0;
    for (const auto& op : log) {
        std::map<std::string, bool> hit;
        for (const auto& tick : op.ticks) {
            for (const auto& [sensor, cls] : tick.sensor_outputs)
                if (cls == TargetClass::Drone) hit[to_string(sensor)] = true;
            if (tick.system_output == TargetClass::Drone) hit["system"] = true;
        }
        for (const auto& [source, flag] : hit)
            if (flag) ++rep.success_count[source];
    }
    for (const auto& [source, n] : rep.success_count)
        rep.success_fraction[source] =
            rep.opportunity_count > 0 ? double(n) / double(rep.opportunity_count) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Dataset I/O and report rendering

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double csv_num(const std::string& s, const std::string& what) {
    try {
        size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SchemaError("bad number '" + s + "' in " + what);
    }
}

}  // namespace detail

// Ground truth rows: frame,class,x,y,w,h,bin
inline std::map<std::string, std::vector<GtBox>> load_ground_truth_csv(std::istream& in) {
    std::map<std::string, std::vector<GtBox>> out;
    std::string line;
    if (!std::getline(in, line) || detail::split_csv_line(line) !=
                                       std::vector<std::string>{"frame", "class", "x", "y", "w",
                                                                "h", "bin"})
        throw SchemaError("ground truth CSV must start with frame,class,x,y,w,h,bin");
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 7) throw SchemaError("ground truth row needs 7 fields: " + line);
        GtBox g;
        g.cls = parse_target_class(f[1]);
        g.box = {detail::csv_num(f[2], "gt"), detail::csv_num(f[3], "gt"),
                 detail::csv_num(f[4], "gt"), detail::csv_num(f[5], "gt")};
        g.bin = parse_dri_bin(f[6]);
        if (g.box.w <= 0 || g.box.h <= 0) throw SchemaError("ground truth box is empty: " + line);
        out[f[0]].push_back(g);
    }
    return out;
}

// Prediction rows: frame,class,confidence,x,y,w,h
inline std::map<std::string, std::vector<PredBox>> load_predictions_csv(std::istream& in) {
    std::map<std::string, std::vector<PredBox>> out;
    std::string line;
    if (!std::getline(in, line) || detail::split_csv_line(line) !=
                                       std::vector<std::string>{"frame", "class", "confidence",
                                                                "x", "y", "w", "h"})
        throw SchemaError("prediction CSV must start with frame,class,confidence,x,y,w,h");
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 7) throw SchemaError("prediction row needs 7 fields: " + line);
        PredBox p;
        p.cls = parse_target_class(f[1]);
        p.confidence = detail::csv_num(f[2], "prediction");
        if (p.confidence < 0 || p.confidence > 1)
            throw SchemaError("prediction confidence outside [0,1]: " + line);
        p.box = {detail::csv_num(f[3], "prediction"), detail::csv_num(f[4], "prediction"),
                 detail::csv_num(f[5], "prediction"), detail::csv_num(f[6], "prediction")};
        if (p.box.w <= 0 || p.box.h <= 0) throw SchemaError("prediction box is empty: " + line);
        out[f[0]].push_back(p);
    }
    return out;
}

// Join ground truth and predictions on frame id; frames present on either
// side participate (missing side contributes an empty list).
inline std::vector<EvalFrame> build_eval_frames(
    const std::map<std::string, std::vector<GtBox>>& gt,
    const std::map<std::string, std::vector<PredBox>>& pred) {
    std::map<std::string, EvalFrame> merged;
    for (const auto& [frame, boxes] : gt) {
        merged[frame].frame_id = frame;
        merged[frame].gt = boxes;
    }
    for (const auto& [frame, boxes] : pred) {
        merged[frame].frame_id = frame;
        merged[frame].pred = boxes;
    }
    std::vector<EvalFrame> out;
    for (auto& [frame, f] : merged) out.push_back(std::move(f));
    return out;
}

// Per-bin slices keep ground truth by its annotated bin and predictions by
// the bin their own pixel width implies.
inline std::vector<EvalFrame> filter_bin(const std::vector<EvalFrame>& frames, DriBin bin,
                                         const DriConfig& cfg = {}) {
    std::vector<EvalFrame> out;
    for (const auto& f : frames) {
        EvalFrame kept;
        kept.frame_id = f.frame_id;
        for (const auto& g : f.gt)
            if (g.bin == bin) kept.gt.push_back(g);
        for (const auto& p : f.pred)
            if (dri_bin(p.box.w, cfg) == bin) kept.pred.push_back(p);
        if (!kept.gt.empty() || !kept.pred.empty()) out.push_back(std::move(kept));
    }
    return out;
}

inline std::string pr_curve_csv(const PrCurve& curve) {
    std::ostringstream os;
    os << "threshold,recall,precision\n";
    for (const auto& p : curve.points)
        os << p.threshold << ',' << p.recall << ',' << p.precision << '\n';
    return os.str();
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "conf_thr,tp,fp,fn,precision,recall,f1\n";
    for (const auto& r : rows)
        os << r.conf_thr << ',' << r.tp << ',' << r.fp << ',' << r.fn << ','
           << r.metrics.precision << ',' << r.metrics.recall << ',' << r.metrics.f1 << '\n';
    return os.str();
}

// A dependency-free PR plot: fixed 640x480 viewport, unit axes, one polyline.
inline std::string pr_curve_svg(const PrCurve& curve, const std::string& title) {
    const int w = 640, h = 480, ml = 60, mr = 20, mt = 40, mb = 50;
    const double pw = w - ml - mr, ph = h - mt - mb;
    auto sx = [&](double r) { return ml + r * pw; };
    auto sy = [&](double p) { return mt + (1.0 - p) * ph; };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
       << " font-size=\"16\">" << title << "</text>\n";
    for (int i = 0; i <= 10; ++i) {
        const double v = i / 10.0;
        os << "<line x1=\"" << sx(v) << "\" y1=\"" << sy(0) << "\" x2=\"" << sx(v) << "\" y2=\""
           << sy(1) << "\" stroke=\"#dddddd\"/>\n";
        os << "<line x1=\"" << sx(0) << "\" y1=\"" << sy(v) << "\" x2=\"" << sx(1) << "\" y2=\""
           << sy(v) << "\" stroke=\"#dddddd\"/>\n";
        os << "<text x=\"" << sx(v) << "\" y=\"" << h - mb + 18
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << v
           << "</text>\n";
        os << "<text x=\"" << ml - 8 << "\" y=\"" << sy(v) + 3
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << v
           << "</text>\n";
    }
    os << "<line x1=\"" << sx(0) << "\" y1=\"" << sy(0) << "\" x2=\"" << sx(1) << "\" y2=\""
       << sy(0) << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << sx(0) << "\" y1=\"" << sy(0) << "\" x2=\"" << sx(0) << "\" y2=\""
       << sy(1) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << w / 2 << "\" y=\"" << h - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">recall</text>\n";
    os << "<text x=\"16\" y=\"" << h / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\""
       << " transform=\"rotate(-90 16 " << h / 2 << ")\">precision</text>\n";
    if (!curve.points.empty()) {
        os << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
        os << sx(0) << ',' << sy(curve.points.front().precision) << ' ';
        for (const auto& p : curve.points) os << sx(p.recall) << ',' << sy(p.precision) << ' ';
        os << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace skyfuse
