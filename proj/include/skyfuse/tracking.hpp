#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "skyfuse/assignment.hpp"
#include "skyfuse/kalman.hpp"

namespace skyfuse {

struct TrackerConfig {
    double non_assignment_cost = 30.0;  // px, Euclidean gate for the matcher
    int delete_after_invisible = 5;     // consecutive missed frames
    int confirm_after_visible = 3;      // total seen frames before a track counts
    double min_visibility_ratio = 0.6;  // young tracks below this get culled
    KalmanConfig kalman;
};

struct Track {
    int id = 0;
    KalmanState kf;
    int age = 1;                    // frames since creation, inclusive
    int total_visible = 1;          // frames with an assigned detection
    int consecutive_invisible = 0;  // current miss streak
    // Estimated centroid per visible frame, (t, {x, y}). Grows only on
    // updates, so its length is the track's evidence, not its age.
    std::vector<std::pair<std::int64_t, std::array<double, 2>>> history;

    double x() const { return kf.x(0); }
    double vx() const { return kf.x(1); }
    double y() const { return kf.x(2); }
    double vy() const { return kf.x(3); }
    double visibility() const { return static_cast<double>(total_visible) / age; }
};

// Frame-rate multi-object tracker over blob centroids: predict, match with a
// gated optimal assignment, correct matched tracks, age and cull the rest,
// and open a new track for every detection nothing claimed.
class MultiObjectTracker {
  public:
    explicit MultiObjectTracker(TrackerConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<std::array<double, 2>>& detections, std::int64_t t) {
        for (auto& tr : tracks_) kf_predict(tr.kf, cfg_.kalman);

        // With no live tracks the cost matrix has no rows and cannot carry
        // the detection count, so hand every detection straight to track
        // creation instead of round-tripping through the matcher.
        AssignmentResult assignment;
        if (tracks_.empty()) {
            for (std::size_t j = 0; j < detections.size(); ++j)
                assignment.unmatched_detections.push_back(static_cast<int>(j));
        } else {
            std::vector<std::vector<double>> cost(tracks_.size(),
                                                  std::vector<double>(detections.size(), 0.0));
            for (std::size_t i = 0; i < tracks_.size(); ++i)
                for (std::size_t j = 0; j < detections.size(); ++j)
                    cost[i][j] = std::hypot(tracks_[i].x() - detections[j][0],
                                            tracks_[i].y() - detections[j][1]);
            assignment = assign(cost, cfg_.non_assignment_cost);
        }

        std::vector<char> track_matched(tracks_.size(), false);
        for (const auto& [ti, di] : assignment.matches) {
            Track& tr = tracks_[ti];
            kf_update(tr.kf, detections[di][0], detections[di][1], cfg_.kalman);
            tr.total_visible += 1;
            tr.consecutive_invisible = 0;
            tr.history.emplace_back(t, std::array<double, 2>{tr.x(), tr.y()});
            track_matched[ti] = true;
        }
        for (std::size_t i = 0; i < tracks_.size(); ++i) {
            tracks_[i].age += 1;
            if (!track_matched[i]) tracks_[i].consecutive_invisible += 1;
        }

        std::vector<Track> kept;
        kept.reserve(tracks_.size());
        for (auto& tr : tracks_) {
            const bool lost = tr.consecutive_invisible >= cfg_.delete_after_invisible;
            const bool never_took_hold = tr.total_visible < cfg_.confirm_after_visible &&
                                         tr.visibility() < cfg_.min_visibility_ratio;
            if (!lost && !never_took_hold) kept.push_back(std::move(tr));
        }
        tracks_ = std::move(kept);

        for (int di : assignment.unmatched_detections) {
            Track tr;
            tr.id = next_id_++;
            tr.kf = kf_init(detections[di][0], detections[di][1], cfg_.kalman);
            tr.history.emplace_back(t, std::array<double, 2>{tr.x(), tr.y()});
            tracks_.push_back(std::move(tr));
        }
    }

    const std::vector<Track>& tracks() const { return tracks_; }

    bool confirmed(const Track& tr) const { return tr.total_visible >= cfg_.confirm_after_visible; }

    // The confirmed track with the most evidence; ties go to the older id.
    const Track* best() const {
        const Track* best = nullptr;
        for (const auto& tr : tracks_) {
            if (!confirmed(tr)) continue;
            if (!best || tr.history.size() > best->history.size() ||
                (tr.history.size() == best->history.size() && tr.id < best->id))
                best = &tr;
        }
        return best;
    }

    const TrackerConfig& config() const { return cfg_; }

  private:
    TrackerConfig cfg_;
    std::vector<Track> tracks_;
    int next_id_ = 1;  // ids are never reused within a run
};

}  // namespace skyfuse
