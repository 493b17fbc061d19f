#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "scenemetric/eval/novelty.hpp"

namespace scenemetric {

/// Bottom-up average-linkage clustering down to k clusters. Among equally
/// close pairs the one with the smallest (lower min-id, higher min-id) wins.
/// Labels are numbered by each cluster's smallest member id.
inline std::vector<int> agglomerative_cluster(const Embeddings& z, std::size_t k)
{
    const std::size_t n = z.size();
    if (k < 1 || k > n)
        throw Error("cluster count k=" + std::to_string(k) + " out of range [1, " + std::to_string(n) + "]");
    const Eigen::MatrixXd m = eval_detail::to_matrix(z);

    // sum[a][b]: sum of pairwise distances between clusters a and b.
    std::vector<std::vector<double>> sum(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = (m.row(static_cast<Eigen::Index>(i)) - m.row(static_cast<Eigen::Index>(j))).norm();
            sum[i][j] = sum[j][i] = d;
        }
    std::vector<std::vector<std::size_t>> members(n);
    std::vector<std::size_t> min_id(n);
    std::vector<bool> alive(n, true);
    for (std::size_t i = 0; i < n; ++i) {
        members[i] = {i};
        min_id[i] = i;
    }

    for (std::size_t clusters = n; clusters > k; --clusters) {
        double best = std::numeric_limits<double>::infinity();
        std::pair<std::size_t, std::size_t> best_key{n, n};
        std::size_t ba = n, bb = n;
        for (std::size_t a = 0; a < n; ++a) {
            if (!alive[a])
                continue;
            for (std::size_t b = a + 1; b < n; ++b) {
                if (!alive[b])
                    continue;
                const double link = sum[a][b] / static_cast<double>(members[a].size() * members[b].size());
                const std::pair<std::size_t, std::size_t> key{std::min(min_id[a], min_id[b]),
                                                              std::max(min_id[a], min_id[b])};
                if (link < best || (link == best && key < best_key)) {
                    best = link;
                    best_key = key;
                    ba = a;
                    bb = b;
                }
            }
        }
        // Merge bb into ba.
        for (std::size_t c = 0; c < n; ++c)
            if (alive[c] && c != ba && c != bb) {
                sum[ba][c] += sum[bb][c];
                sum[c][ba] = sum[ba][c];
            }
        members[ba].insert(members[ba].end(), members[bb].begin(), members[bb].end());
        min_id[ba] = std::min(min_id[ba], min_id[bb]);
        alive[bb] = false;
    }

    std::vector<std::pair<std::size_t, std::size_t>> order; // (min id, slot)
    for (std::size_t a = 0; a < n; ++a)
        if (alive[a])
            order.emplace_back(min_id[a], a);
    std::sort(order.begin(), order.end());
    std::vector<int> labels(n, -1);
    for (std::size_t l = 0; l < order.size(); ++l)
        for (std::size_t i : members[order[l].second])
            labels[i] = static_cast<int>(l);
    return labels;
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method).
/// Returns assignment[row] = column.
inline std::vector<std::size_t> max_weight_assignment(const std::vector<std::vector<double>>& w)
{
    const std::size_t n = w.size();
    for (const auto& row : w)
        require(row.size() == n, "assignment matrix must be square");
    if (n == 0)
        return {};
    double top = 0.0;
    for (const auto& row : w)
        for (double v : row)
            top = std::max(top, v);
    // Minimize top - w with the potentials formulation (1-based internals).
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j])
                    continue;
                const double cur = (top - w[i0 - 1][j - 1]) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
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
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= n; ++j)
        assignment[p[j] - 1] = j - 1;
    return assignment;
}

/// Fraction of points correctly labeled under the best one-to-one mapping of
/// predicted clusters onto truth groups.
inline double clustering_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth)
{
    require(predicted.size() == truth.size(), "label vectors differ in length");
    if (predicted.empty())
        throw Error("clustering accuracy of an empty labeling");
    const std::vector<int> p = dense_ids(predicted);
    const std::vector<int> t = dense_ids(truth);
    const auto np = static_cast<std::size_t>(group_count(p));
    const auto nt = static_cast<std::size_t>(group_count(t));
    const std::size_t n = std::max(np, nt);
    std::vector<std::vector<double>> table(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < p.size(); ++i)
        table[static_cast<std::size_t>(p[i])][static_cast<std::size_t>(t[i])] += 1.0;
    const auto a = max_weight_assignment(table);
    double matched = 0.0;
    for (std::size_t r = 0; r < n; ++r)
        matched += table[r][a[r]];
    return matched / static_cast<double>(predicted.size());
}

/// Clusters into as many groups as the truth has and scores the result.
inline double clustering_experiment(const Embeddings& z, const std::vector<int>& truth)
{
    require(z.size() == truth.size(), "embeddings and labels differ in length");
    const auto k = static_cast<std::size_t>(group_count(truth));
    return clustering_accuracy(agglomerative_cluster(z, k), truth);
}

} // namespace scenemetric
