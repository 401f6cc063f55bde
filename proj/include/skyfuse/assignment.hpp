#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace skyfuse {

// Exact minimum-cost assignment on a square matrix (Kuhn-Munkres with
// potentials, O(n^3)). Returns row -> column.
inline std::vector<int> min_cost_assignment(const std::vector<std::vector<double>>& a) {
    const int n = static_cast<int>(a.size());
    for (const auto& row : a)
        if (static_cast<int>(row.size()) != n)
            throw std::invalid_argument("min_cost_assignment: matrix must be square");
    if (n == 0) return {};

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0), v(n + 1, 0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

struct AssignmentResult {
    std::vector<std::pair<int, int>> matches;  // (track index, detection index)
    std::vector<int> unmatched_tracks;
    std::vector<int> unmatched_detections;
    double total_cost = 0;  // matched costs plus non_assignment_cost per unmatched item
};

// Gated bipartite matching: cost[t][d] is the price of pairing track t with
// detection d, and every item may instead stay unmatched at a flat price of
// non_assignment_cost. Solved exactly by embedding into a padded square
// matrix whose lower-right block closes the unmatched rows/columns for free.
inline AssignmentResult assign(const std::vector<std::vector<double>>& cost,
                               double non_assignment_cost) {
    const std::size_t nt = cost.size();
    const std::size_t nd = nt == 0 ? 0 : cost[0].size();
    for (const auto& row : cost)
        if (row.size() != nd) throw std::invalid_argument("assign: ragged cost matrix");
    if (non_assignment_cost < 0)
        throw std::invalid_argument("assign: non_assignment_cost must be non-negative");

    AssignmentResult res;
    if (nt == 0 || nd == 0) {
        for (std::size_t t = 0; t < nt; ++t) res.unmatched_tracks.push_back(static_cast<int>(t));
        for (std::size_t d = 0; d < nd; ++d)
            res.unmatched_detections.push_back(static_cast<int>(d));
        res.total_cost = non_assignment_cost * static_cast<double>(nt + nd);
        return res;
    }

    // Large finite stand-in for "not allowed"; never part of an optimal
    // solution because the diagonal alternatives are always available.
    const double big = 1e30;
    const std::size_t n = nt + nd;
    std::vector<std::vector<double>> padded(n, std::vector<double>(n, big));
    for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t d = 0; d < nd; ++d) padded[t][d] = cost[t][d];
    for (std::size_t t = 0; t < nt; ++t) padded[t][nd + t] = non_assignment_cost;
    for (std::size_t d = 0; d < nd; ++d) padded[nt + d][d] = non_assignment_cost;
    for (std::size_t d = 0; d < nd; ++d)
        for (std::size_t t = 0; t < nt; ++t) padded[nt + d][nd + t] = 0;

    const auto row_to_col = min_cost_assignment(padded);
    for (std::size_t t = 0; t < nt; ++t) {
        const int c = row_to_col[t];
        if (c >= 0 && static_cast<std::size_t>(c) < nd) {
            res.matches.emplace_back(static_cast<int>(t), c);
            res.total_cost += cost[t][c];
        } else {
            res.unmatched_tracks.push_back(static_cast<int>(t));
            res.total_cost += non_assignment_cost;
        }
    }
    std::vector<char> det_taken(nd, false);
    for (const auto& [t, d] : res.matches) det_taken[d] = true;
    for (std::size_t d = 0; d < nd; ++d) {
        if (!det_taken[d]) {
            res.unmatched_detections.push_back(static_cast<int>(d));
            res.total_cost += non_assignment_cost;
        }
    }
    return res;
}

}  // namespace skyfuse
