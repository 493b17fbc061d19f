#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "scenemetric/core/error.hpp"
#include "scenemetric/core/scenario.hpp"

namespace scenemetric {

using Embeddings = std::vector<std::vector<double>>;

namespace eval_detail {

inline Eigen::MatrixXd to_matrix(const Embeddings& e)
{
    require(!e.empty(), "empty embedding matrix");
    const auto dim = static_cast<Eigen::Index>(e[0].size());
    Eigen::MatrixXd m(static_cast<Eigen::Index>(e.size()), dim);
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (static_cast<Eigen::Index>(e[i].size()) != dim)
            throw Error("shape mismatch: embedding rows have different lengths");
        for (Eigen::Index j = 0; j < dim; ++j)
            m(static_cast<Eigen::Index>(i), j) = e[i][static_cast<std::size_t>(j)];
    }
    return m;
}

inline double abof(const Eigen::MatrixXd& base, const Eigen::RowVectorXd& q)
{
    const Eigen::MatrixXd diff = base.rowwise() - q;
    const Eigen::VectorXd sq = diff.rowwise().squaredNorm();
    const Eigen::MatrixXd dots = diff * diff.transpose();
    const Eigen::Index n = base.rows();
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index y = 0; y < n; ++y) {
        if (sq(y) == 0.0)
            continue;
        for (Eigen::Index z = y + 1; z < n; ++z) {
            if (sq(z) == 0.0)
                continue;
            const double v = dots(y, z) / (sq(y) * sq(z));
            sum += v;
            ++count;
        }
    }
    if (count == 0)
        throw Error("ABOF undefined: every base pair coincides with the query");
    const double mean = sum / static_cast<double>(count);
    // Second pass for a numerically stable variance.
    double var = 0.0;
    for (Eigen::Index y = 0; y < n; ++y) {
        if (sq(y) == 0.0)
            continue;
        for (Eigen::Index z = y + 1; z < n; ++z) {
            if (sq(z) == 0.0)
                continue;
            const double v = dots(y, z) / (sq(y) * sq(z)) - mean;
            var += v * v;
        }
    }
    return var / static_cast<double>(count);
}

} // namespace eval_detail

/// Novelty score -ABOF(q) of every query against the base set (higher is
/// more novel). ABOF is the population variance over unordered base pairs of
/// the distance-weighted angle <y-q, z-q> / (|y-q|^2 |z-q|^2); pairs touching
/// a base point equal to q are skipped.
inline std::vector<double> abod_scores(const Embeddings& base, const Embeddings& queries)
{
    require(base.size() >= 3, "ABOD needs at least 3 base points");
    const Eigen::MatrixXd b = eval_detail::to_matrix(base);
    std::vector<double> scores;
    scores.reserve(queries.size());
    for (const auto& q : queries) {
        if (static_cast<Eigen::Index>(q.size()) != b.cols())
            throw Error("shape mismatch: query dimension differs from base dimension");
        const Eigen::RowVectorXd qv = Eigen::Map<const Eigen::RowVectorXd>(q.data(), b.cols());
        scores.push_back(-eval_detail::abof(b, qv));
    }
    return scores;
}

/// Area under the ROC curve of scores for positives (label true) versus
/// negatives, via the Mann-Whitney statistic with ties counted as one half.
inline double auc_score(const std::vector<double>& scores, const std::vector<bool>& positive)
{
    require(scores.size() == positive.size(), "scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]])
            ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j); // mean of ranks i+1 .. j
        for (std::size_t k = i; k < j; ++k)
            rank[order[k]] = mid;
        i = j;
    }
    double n_pos = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (positive[i]) {
            n_pos += 1.0;
            rank_sum += rank[i];
        }
    const double n_neg = static_cast<double>(n) - n_pos;
    require(n_pos > 0.0 && n_neg > 0.0, "AUC needs at least one positive and one negative");
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

struct NoveltyResult {
    double mean_auc = 0.0;
    std::vector<double> group_auc; ///< indexed by group id
};

/// n-vs-1 protocol: each group in turn is removed from the base set and all
/// scenarios are scored against the rest; members of the held-out group are
/// the positives.
inline NoveltyResult novelty_experiment(const Embeddings& z, const std::vector<int>& labels)
{
    require(z.size() == labels.size(), "embeddings and labels differ in length");
    const int groups = group_count(labels);
    if (groups < 2)
        throw Error("novelty experiment needs at least 2 groups, got " + std::to_string(groups));
    NoveltyResult r;
    for (int g = 0; g < groups; ++g) {
        Embeddings base;
        std::vector<bool> positive(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
            positive[i] = labels[i] == g;
            if (!positive[i])
                base.push_back(z[i]);
        }
        require(base.size() < z.size(), "group without members");
        r.group_auc.push_back(auc_score(abod_scores(base, z), positive));
    }
    r.mean_auc = std::accumulate(r.group_auc.begin(), r.group_auc.end(), 0.0) / static_cast<double>(groups);
    return r;
}

inline NoveltyResult novelty_experiment(const Embeddings& z, const Dataset& d, GroupLevel level)
{
    return novelty_experiment(z, d.groups.level(level));
}

} // namespace scenemetric
