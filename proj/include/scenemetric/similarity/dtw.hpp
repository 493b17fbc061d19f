#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "scenemetric/core/scenario.hpp"

namespace scenemetric {

struct DtwResult {
    double distance = 0.0;       ///< accumulated cost of the optimal warping path
    std::size_t path_length = 0; ///< number of cells on the path
    double normalized_path = 0.0; ///< path_length / max(len_i, len_j)
    double dissimilarity = 0.0;  ///< distance * normalized_path
};

inline double action_cost(const ActionRow& a, const ActionRow& b)
{
    const double d0 = a.a_lat - b.a_lat;
    const double d1 = a.a_lon - b.a_lon;
    const double d2 = a.speed - b.speed;
    return std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
}

/// Classic DTW (diagonal/horizontal/vertical steps, no window) over the
/// Euclidean distance between action rows. The path is recovered from the end
/// cell preferring the diagonal predecessor, then (i-1, j), then (i, j-1).
inline DtwResult dtw(const std::vector<ActionRow>& a, const std::vector<ActionRow>& b)
{
    if (a.empty() || b.empty())
        throw Error("dtw needs two nonempty sequences");
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> acc(n * m, inf);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * m + j]; };

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double c = action_cost(a[i], b[j]);
            if (i == 0 && j == 0) {
                at(i, j) = c;
                continue;
            }
            double best = inf;
            if (i > 0 && j > 0)
                best = at(i - 1, j - 1);
            if (i > 0)
                best = std::min(best, at(i - 1, j));
            if (j > 0)
                best = std::min(best, at(i, j - 1));
            at(i, j) = c + best;
        }

    std::size_t i = n - 1;
    std::size_t j = m - 1;
    std::size_t length = 1;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0) {
            const double diag = at(i - 1, j - 1);
            const double up = at(i - 1, j);
            const double left = at(i, j - 1);
            if (diag <= up && diag <= left) {
                --i;
                --j;
            } else if (up <= left) {
                --i;
            } else {
                --j;
            }
        } else if (i > 0) {
            --i;
        } else {
            --j;
        }
        ++length;
    }

    DtwResult r;
    r.distance = at(n - 1, m - 1);
    r.path_length = length;
    r.normalized_path = static_cast<double>(length) / static_cast<double>(std::max(n, m));
    r.dissimilarity = r.distance * r.normalized_path;
    return r;
}

inline DtwResult dtw(const ActionSequence& a, const ActionSequence& b) { return dtw(a.rows, b.rows); }

/// Action similarity relative to the class maximum dissimilarity: 1 - d/d_max,
/// and 1 for a degenerate class (d_max = 0).
inline double trajectory_similarity(double d, double d_max)
{
    require(d >= 0.0 && d_max >= 0.0, "dissimilarities must be nonnegative");
    if (d_max == 0.0) {
        require(d == 0.0, "dissimilarity exceeds class maximum");
        return 1.0;
    }
    if (d > d_max)
        throw Error("dissimilarity exceeds class maximum: " + std::to_string(d) + " > " + std::to_string(d_max));
    return std::clamp(1.0 - d / d_max, 0.0, 1.0);
}

} // namespace scenemetric
