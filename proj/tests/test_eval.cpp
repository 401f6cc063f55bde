#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <sstream>
#include <vector>

#include "skyfuse/eval.hpp"
#include "skyfuse/rng.hpp"

using namespace skyfuse;

namespace {

// Longhand overlap, written from the corner arithmetic rather than the
// library helper.
double slow_iou(const BBox& a, const BBox& b) {
    const double ox = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double oy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ox * oy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0 ? inter / uni : 0.0;
}

struct SlowRow {
    double confidence = 0;
    bool tp = false;
};

// Reference evaluation: match every frame truth by truth, pool the outcomes,
// then walk the cumulative precision/recall table row by row.
struct SlowEval {
    std::vector<SlowRow> table;  // confidence-descending
    int total_gt = 0;
    double ap = 0;
};

SlowEval slow_eval(const std::vector<EvalFrame>& frames, TargetClass cls, double thr) {
    SlowEval out;
    for (const auto& f : frames) {
        std::vector<PredBox> dets;
        for (const auto& p : f.pred)
            if (p.cls == cls) dets.push_back(p);
        std::sort(dets.begin(), dets.end(), [](const PredBox& a, const PredBox& b) {
            return a.confidence > b.confidence;
        });
        std::vector<bool> taken(dets.size(), false);
        std::vector<bool> hit(dets.size(), false);
        for (const auto& g : f.gt) {
            if (g.cls != cls) continue;
            ++out.total_gt;
            for (size_t d = 0; d < dets.size(); ++d) {
                if (taken[d] || slow_iou(dets[d].box, g.box) < thr) continue;
                taken[d] = hit[d] = true;
                break;
            }
        }
        for (size_t d = 0; d < dets.size(); ++d) out.table.push_back({dets[d].confidence, hit[d]});
    }
    std::sort(out.table.begin(), out.table.end(),
              [](const SlowRow& a, const SlowRow& b) { return a.confidence > b.confidence; });
    int tp = 0;
    double prev_recall = 0;
    for (size_t r = 0; r < out.table.size(); ++r) {
        if (!out.table[r].tp) continue;
        ++tp;
        const double recall = double(tp) / double(out.total_gt);
        const double precision = double(tp) / double(r + 1);
        out.ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return out;
}

std::vector<EvalFrame> random_instance(RngStream& rng) {
    const int n_frames = 1 + int(rng.next_u64() % 3);
    std::set<double> used;
    const auto fresh_conf = [&] {
        double c = rng.uniform();
        while (!used.insert(c).second) c = rng.uniform();
        return c;
    };
    std::vector<EvalFrame> frames(n_frames);
    for (int f = 0; f < n_frames; ++f) {
        frames[f].frame_id = "f" + std::to_string(f);
        const int n_gt = int(rng.next_u64() % 11);
        const int n_det = int(rng.next_u64() % 21);
        for (int i = 0; i < n_gt; ++i) {
            GtBox g;
            g.cls = TargetClass::Drone;
            g.box = {rng.uniform() * 50.0, rng.uniform() * 50.0,
                     5.0 + rng.uniform() * 10.0, 5.0 + rng.uniform() * 10.0};
            frames[f].gt.push_back(g);
        }
        for (int i = 0; i < n_det; ++i) {
            PredBox p;
            p.cls = TargetClass::Drone;
            p.confidence = fresh_conf();
            p.box = {rng.uniform() * 50.0, rng.uniform() * 50.0,
                     5.0 + rng.uniform() * 10.0, 5.0 + rng.uniform() * 10.0};
            frames[f].pred.push_back(p);
        }
    }
    return frames;
}

}  // namespace

TEST_CASE("precision, recall, f1 conventions") {
    const Prf all = prf({8, 2, 2});
    CHECK(all.precision == Catch::Approx(0.8));
    CHECK(all.recall == Catch::Approx(0.8));
    CHECK(all.f1 == Catch::Approx(0.8));
    const Prf none = prf({0, 0, 0});
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);
    CHECK(prf({0, 5, 0}).precision == 0.0);
    CHECK(prf({0, 0, 5}).recall == 0.0);
}

TEST_CASE("frame matching") {
    GtBox truth;
    truth.cls = TargetClass::Drone;
    truth.box = {10, 10, 20, 20};

    SECTION("two detections on one truth leave one false positive") {
        PredBox strong{TargetClass::Drone, 0.9, {11, 11, 20, 20}};
        PredBox weak{TargetClass::Drone, 0.7, {9, 9, 20, 20}};
        const auto counts = match_detections({weak, strong}, {truth}, 0.5, 0.0);
        CHECK(counts.at(TargetClass::Drone).tp == 1);
        CHECK(counts.at(TargetClass::Drone).fp == 1);
        CHECK(counts.at(TargetClass::Drone).fn == 0);
    }
    SECTION("matching is blind to input order") {
        std::vector<PredBox> dets;
        RngStream rng(7);
        for (int i = 0; i < 8; ++i)
            dets.push_back({TargetClass::Drone, rng.uniform(),
                            {8.0 + rng.uniform() * 6.0, 8.0 + rng.uniform() * 6.0, 20, 20}});
        const auto forward = match_detections(dets, {truth}, 0.5, 0.0);
        std::reverse(dets.begin(), dets.end());
        const auto reversed = match_detections(dets, {truth}, 0.5, 0.0);
        CHECK(forward.at(TargetClass::Drone).tp == reversed.at(TargetClass::Drone).tp);
        CHECK(forward.at(TargetClass::Drone).fp == reversed.at(TargetClass::Drone).fp);
    }
    SECTION("classes are scored separately") {
        PredBox bird{TargetClass::Bird, 0.9, {10, 10, 20, 20}};
        const auto counts = match_detections({bird}, {truth}, 0.5, 0.0);
        CHECK(counts.at(TargetClass::Drone).fn == 1);
        CHECK(counts.at(TargetClass::Drone).tp == 0);
        CHECK(counts.at(TargetClass::Bird).fp == 1);
    }
    SECTION("the confidence threshold drops weak detections before matching") {
        PredBox weak{TargetClass::Drone, 0.2, {10, 10, 20, 20}};
        const auto counts = match_detections({weak}, {truth}, 0.5, 0.5);
        CHECK(counts.at(TargetClass::Drone).tp == 0);
        CHECK(counts.at(TargetClass::Drone).fn == 1);
    }
    SECTION("threshold validation") {
        CHECK_THROWS_AS(match_detections({}, {truth}, 1.5, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(match_detections({}, {truth}, 0.5, -0.1), std::invalid_argument);
    }
}

TEST_CASE("average precision against the cumulative table") {
    RngStream rng(424242);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto frames = random_instance(rng);
        const double thr = 0.3 + 0.2 * double(trial % 3);
        const auto fast = pr_curve_and_ap(frames, TargetClass::Drone, thr);
        const auto slow = slow_eval(frames, TargetClass::Drone, thr);
        REQUIRE(fast.total_gt == slow.total_gt);
        REQUIRE(fast.total_pred == int(slow.table.size()));
        REQUIRE(std::abs(fast.ap - slow.ap) < 1e-12);
        REQUIRE(fast.curve.points.size() == slow.table.size());
        int tp = 0;
        for (size_t r = 0; r < slow.table.size(); ++r) {
            if (slow.table[r].tp) ++tp;
            REQUIRE(fast.curve.points[r].threshold == slow.table[r].confidence);
            REQUIRE(std::abs(fast.curve.points[r].precision - double(tp) / double(r + 1)) < 1e-12);
        }
    }
}

TEST_CASE("average precision hand values") {
    CHECK(ap_from_ranked({1, 0, 1}, 2) == Catch::Approx(0.5 * (1.0 + 2.0 / 3.0)));
    CHECK(ap_from_ranked({1, 1}, 2) == Catch::Approx(1.0));
    CHECK(ap_from_ranked({0, 0}, 2) == 0.0);
    CHECK(ap_from_ranked({1}, 0) == 0.0);
    CHECK(ap_from_ranked({}, 3) == 0.0);
}

TEST_CASE("mean average precision") {
    CHECK(map_over_classes({0.8704, 0.7150, 0.5086}) ==
          Catch::Approx((0.8704 + 0.7150 + 0.5086) / 3.0).epsilon(1e-12));
    CHECK(map_over_classes({0.8474, 0.7477, 0.5883}) ==
          Catch::Approx((0.8474 + 0.7477 + 0.5883) / 3.0).epsilon(1e-12));
    CHECK(map_over_classes({0.5}) == 0.5);
    CHECK_THROWS_AS(map_over_classes({}), std::invalid_argument);
}

TEST_CASE("confidence threshold sweep") {
    EvalFrame f;
    f.frame_id = "0";
    f.gt.push_back({TargetClass::Drone, {0, 0, 10, 10}, DriBin::Close});
    f.gt.push_back({TargetClass::Drone, {50, 50, 10, 10}, DriBin::Close});
    f.pred.push_back({TargetClass::Drone, 0.95, {0, 0, 10, 10}});
    f.pred.push_back({TargetClass::Drone, 0.45, {50, 50, 10, 10}});
    f.pred.push_back({TargetClass::Drone, 0.30, {100, 100, 10, 10}});
    const auto rows = threshold_sweep({f});
    REQUIRE(rows.size() == 10);
    CHECK(rows[0].conf_thr == Catch::Approx(0.1));
    CHECK(rows[9].conf_thr == Catch::Approx(1.0));
    CHECK(rows[0].tp == 2);
    CHECK(rows[0].fp == 1);
    CHECK(rows[0].fn == 0);
    CHECK(rows[4].tp == 1);  // 0.5 keeps only the strong detection
    CHECK(rows[4].fp == 0);
    CHECK(rows[4].fn == 1);
    CHECK(rows[9].tp == 0);
    CHECK(rows[9].fn == 2);
    for (size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].tp <= rows[i - 1].tp);
        CHECK(rows[i].fn >= rows[i - 1].fn);
    }
}

TEST_CASE("anchor overlap metric") {
    CHECK(anchor_iou({3, 4}, {3, 4}) == Catch::Approx(1.0));
    CHECK(anchor_iou({2, 2}, {4, 4}) == Catch::Approx(4.0 / 16.0));
    CHECK(anchor_iou({2, 8}, {8, 2}) == Catch::Approx(4.0 / 28.0));
}

TEST_CASE("anchor clustering") {
    SECTION("two obvious clusters are recovered") {
        std::vector<AnchorBox> boxes;
        RngStream rng(5);
        for (int i = 0; i < 30; ++i)
            boxes.push_back({4.0 + rng.uniform(), 4.0 + rng.uniform()});
        for (int i = 0; i < 30; ++i)
            boxes.push_back({40.0 + rng.uniform(), 40.0 + rng.uniform()});
        const auto r = anchor_kmeans(boxes, 2);
        REQUIRE(r.anchors.size() == 2);
        CHECK(r.anchors[0].w == Catch::Approx(4.5).margin(0.5));
        CHECK(r.anchors[1].w == Catch::Approx(40.5).margin(0.5));
        CHECK(r.mean_iou > 0.8);
    }
    SECTION("more anchors never fit worse") {
        std::vector<AnchorBox> boxes;
        RngStream rng(17);
        for (int i = 0; i < 40; ++i)
            boxes.push_back({1.0 + rng.uniform() * 30.0, 1.0 + rng.uniform() * 30.0});
        double prev = 0;
        for (int k = 1; k <= 5; ++k) {
            const auto r = anchor_kmeans(boxes, k);
            REQUIRE(int(r.anchors.size()) == k);
            CHECK(r.mean_iou >= prev - 1e-12);
            prev = r.mean_iou;
            for (size_t i = 1; i < r.anchors.size(); ++i)
                CHECK(r.anchors[i].w * r.anchors[i].h >=
                      r.anchors[i - 1].w * r.anchors[i - 1].h);
        }
    }
    SECTION("one anchor per distinct size fits perfectly") {
        const std::vector<AnchorBox> boxes = {{2, 2}, {2, 2}, {6, 3}, {10, 10}};
        const auto r = anchor_kmeans(boxes, 3);
        CHECK(r.mean_iou == Catch::Approx(1.0));
    }
    SECTION("input validation") {
        CHECK_THROWS_AS(anchor_kmeans({}, 1), std::invalid_argument);
        CHECK_THROWS_AS(anchor_kmeans({{1, 1}}, 2), std::invalid_argument);
        CHECK_THROWS_AS(anchor_kmeans({{1, 1}}, 0), std::invalid_argument);
        CHECK_THROWS_AS(anchor_kmeans({{0, 1}}, 1), std::invalid_argument);
    }
}

TEST_CASE("opportunity scoring") {
    Opportunity a;
    a.start_ms = 0;
    a.end_ms = 1000;
    a.ticks.push_back({{{SensorId::IRcam, TargetClass::Drone}}, TargetClass::Drone});
    Opportunity b;
    b.start_ms = 1000;
    b.end_ms = 2000;
    b.ticks.push_back({{{SensorId::Vcam, TargetClass::Bird}}, std::nullopt});
    Opportunity c;
    c.start_ms = 3000;
    c.end_ms = 4000;
    c.ticks.push_back({{}, TargetClass::Drone});
    c.ticks.push_back({{{SensorId::Vcam, TargetClass::Drone}}, std::nullopt});

    const auto rep = opportunity_analysis({a, b, c});
    CHECK(rep.opportunity_count == 3);
    CHECK(rep.success_count.at("IRcam") == 1);
    CHECK(rep.success_count.at("Vcam") == 1);
    CHECK(rep.success_count.at("Audio") == 0);
    CHECK(rep.success_count.at("system") == 2);
    CHECK(rep.success_fraction.at("system") == Catch::Approx(2.0 / 3.0));

    SECTION("an empty log reports zero everywhere") {
        const auto empty = opportunity_analysis({});
        CHECK(empty.opportunity_count == 0);
        CHECK(empty.success_fraction.at("system") == 0.0);
    }
    SECTION("overlapping intervals are rejected") {
        Opportunity bad = b;
        bad.start_ms = 500;
        CHECK_THROWS_AS(opportunity_analysis({a, bad}), SchemaError);
        Opportunity inverted;
        inverted.start_ms = 10;
        inverted.end_ms = 5;
        CHECK_THROWS_AS(opportunity_analysis({inverted}), SchemaError);
    }
}

TEST_CASE("dataset CSV round trips") {
    SECTION("ground truth") {
        std::istringstream in(
            "frame,class,x,y,w,h,bin\r\n"
            "f1,Drone,1,2,3,4,close\n"
            "\n"
            "f1,Bird,5,6,7,8,medium\n"
            "f2,Helicopter,0,0,9,9,distant\n");
        const auto gt = load_ground_truth_csv(in);
        REQUIRE(gt.size() == 2);
        REQUIRE(gt.at("f1").size() == 2);
        CHECK(gt.at("f1")[0].cls == TargetClass::Drone);
        CHECK(gt.at("f1")[0].box.w == 3.0);
        CHECK(gt.at("f1")[1].bin == DriBin::Medium);
        CHECK(gt.at("f2")[0].cls == TargetClass::Helicopter);
    }
    SECTION("predictions") {
        std::istringstream in(
            "frame,class,confidence,x,y,w,h\n"
            "f1,Drone,0.75,1,2,3,4\n");
        const auto pred = load_predictions_csv(in);
        CHECK(pred.at("f1")[0].confidence == 0.75);
    }
    SECTION("schema violations") {
        std::istringstream h("frame,class,x,y,w,h\nf1,Drone,1,2,3,4\n");
        CHECK_THROWS_AS(load_ground_truth_csv(h), SchemaError);
        std::istringstream n("frame,class,x,y,w,h,bin\nf1,Drone,1,2,xx,4,close\n");
        CHECK_THROWS_AS(load_ground_truth_csv(n), SchemaError);
        std::istringstream e("frame,class,x,y,w,h,bin\nf1,Drone,1,2,0,4,close\n");
        CHECK_THROWS_AS(load_ground_truth_csv(e), SchemaError);
        std::istringstream c("frame,class,confidence,x,y,w,h\nf1,Drone,1.5,1,2,3,4\n");
        CHECK_THROWS_AS(load_predictions_csv(c), SchemaError);
        std::istringstream s("frame,class,confidence,x,y,w,h\nf1,Drone,0.5,1,2,3\n");
        CHECK_THROWS_AS(load_predictions_csv(s), SchemaError);
    }
}

TEST_CASE("frame joining and bin slicing") {
    std::map<std::string, std::vector<GtBox>> gt;
    gt["a"].push_back({TargetClass::Drone, {0, 0, 20, 20}, DriBin::Close});
    gt["b"].push_back({TargetClass::Drone, {0, 0, 2, 2}, DriBin::Distant});
    std::map<std::string, std::vector<PredBox>> pred;
    pred["a"].push_back({TargetClass::Drone, 0.9, {0, 0, 20, 20}});
    pred["c"].push_back({TargetClass::Drone, 0.8, {0, 0, 10, 10}});

    const auto frames = build_eval_frames(gt, pred);
    REQUIRE(frames.size() == 3);
    CHECK(frames[0].frame_id == "a");
    CHECK(frames[1].pred.empty());
    CHECK(frames[2].gt.empty());

    const auto close = filter_bin(frames, DriBin::Close);
    REQUIRE(close.size() == 1);
    CHECK(close[0].frame_id == "a");
    REQUIRE(close[0].pred.size() == 1);  // width 20 px implies the close bin

    const auto medium = filter_bin(frames, DriBin::Medium);
    REQUIRE(medium.size() == 1);
    CHECK(medium[0].frame_id == "c");
    CHECK(medium[0].gt.empty());

    const auto distant = filter_bin(frames, DriBin::Distant);
    REQUIRE(distant.size() == 1);
    CHECK(distant[0].frame_id == "b");
    CHECK(distant[0].pred.empty());
}

TEST_CASE("report rendering") {
    PrCurve curve;
    curve.points.push_back({0.9, 0.5, 1.0});
    curve.points.push_back({0.4, 1.0, 0.8});
    const std::string csv = pr_curve_csv(curve);
    CHECK(csv.rfind("threshold,recall,precision\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

    const std::string svg = pr_curve_svg(curve, "drone pr");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("drone pr") != std::string::npos);

    SweepRow row;
    row.conf_thr = 0.5;
    row.tp = 3;
    row.metrics = prf({3, 0, 0});
    const std::string sweep = sweep_csv({row});
    CHECK(sweep.rfind("conf_thr,tp,fp,fn,precision,recall,f1\n", 0) == 0);
    CHECK(sweep.find("0.5,3,0,0,1,1,1") != std::string::npos);
}
