#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "scenemetric/core/geometry.hpp"
#include "scenemetric/eval/novelty.hpp"

namespace scenemetric {

/// Mean raw-feature differences between scenarios and their latent-space
/// nearest neighbours.
struct StabilityReport {
    double d_image = 0.0;        ///< mean |pixel difference|, percent
    double d_trajectory = 0.0;   ///< mean displacement, m
    double d_speed = 0.0;        ///< m/s
    double d_accel_lon = 0.0;    ///< m/s^2
    double d_accel_lat = 0.0;    ///< m/s^2
    double d_heading = 0.0;      ///< rad, in [0, pi]
};

namespace eval_detail {

struct ScenarioFeatures {
    double speed = 0.0;
    double accel_lon = 0.0;
    double accel_lat = 0.0;
    double heading = 0.0; ///< circular mean
};

inline ScenarioFeatures scenario_features(const Scenario& s)
{
    const ActionSequence a = derive_action_sequence(s.trajectory);
    ScenarioFeatures f;
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        f.speed += a.rows[i].speed;
        f.accel_lon += a.rows[i].a_lon;
        f.accel_lat += a.rows[i].a_lat;
        sx += std::cos(a.headings[i]);
        sy += std::sin(a.headings[i]);
    }
    const auto n = static_cast<double>(a.size());
    f.speed /= n;
    f.accel_lon /= n;
    f.accel_lat /= n;
    f.heading = std::atan2(sy, sx);
    return f;
}

/// Linear resampling of a polyline (by point index) to n points.
inline std::vector<Point2> resample(const Trajectory& t, std::size_t n)
{
    std::vector<Point2> out(n);
    if (t.size() == n) {
        for (std::size_t i = 0; i < n; ++i)
            out[i] = t.position(i);
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double u = n == 1 ? 0.0
                                : static_cast<double>(i) * static_cast<double>(t.size() - 1) / static_cast<double>(n - 1);
        const auto k = std::min(static_cast<std::size_t>(u), t.size() - 2);
        const double f = u - static_cast<double>(k);
        const Point2 a = t.position(k), b = t.position(k + 1);
        out[i] = {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)};
    }
    return out;
}

inline double average_displacement(const Trajectory& a, const Trajectory& b)
{
    const std::size_t n = std::max(a.size(), b.size());
    const auto pa = resample(a, n);
    const auto pb = resample(b, n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        s += distance(pa[i], pb[i]);
    return s / static_cast<double>(n);
}

inline double image_difference(const InfrastructureImage& a, const InfrastructureImage& b)
{
    if (a.size() != b.size())
        throw Error("shape mismatch: image sizes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels().size(); ++i)
        s += std::abs(static_cast<double>(a.pixels()[i]) - static_cast<double>(b.pixels()[i]));
    return 100.0 * s / static_cast<double>(a.pixels().size());
}

} // namespace eval_detail

/// Indices of the k nearest rows to row i (Euclidean, i excluded, ties by id).
inline std::vector<std::size_t> nearest_neighbors(const Embeddings& z, std::size_t i, std::size_t k)
{
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) {
        if (j == i)
            continue;
        double s = 0.0;
        for (std::size_t c = 0; c < z[i].size(); ++c)
            s += (z[i][c] - z[j][c]) * (z[i][c] - z[j][c]);
        d.emplace_back(s, j);
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    std::vector<std::size_t> out(k);
    for (std::size_t t = 0; t < k; ++t)
        out[t] = d[t].second;
    return out;
}

inline StabilityReport feature_stability(const Embeddings& z, const Dataset& d, std::size_t k = 15)
{
    require(z.size() == d.size(), "embeddings and dataset differ in length");
    if (d.size() <= k)
        throw Error("feature stability needs more than k=" + std::to_string(k) + " scenarios, got " +
                    std::to_string(d.size()));
    require(k >= 1, "neighbour count must be at least 1");
    std::vector<eval_detail::ScenarioFeatures> f;
    f.reserve(d.size());
    for (const auto& s : d.entries)
        f.push_back(eval_detail::scenario_features(s));

    StabilityReport r;
    for (std::size_t i = 0; i < d.size(); ++i) {
        StabilityReport local;
        for (std::size_t j : nearest_neighbors(z, i, k)) {
            local.d_image += eval_detail::image_difference(d[i].image, d[j].image);
            local.d_trajectory += eval_detail::average_displacement(d[i].trajectory, d[j].trajectory);
            local.d_speed += std::abs(f[i].speed - f[j].speed);
            local.d_accel_lon += std::abs(f[i].accel_lon - f[j].accel_lon);
            local.d_accel_lat += std::abs(f[i].accel_lat - f[j].accel_lat);
            local.d_heading += std::abs(wrap_angle(f[i].heading - f[j].heading));
        }
        const auto kk = static_cast<double>(k);
        r.d_image += local.d_image / kk;
        r.d_trajectory += local.d_trajectory / kk;
        r.d_speed += local.d_speed / kk;
        r.d_accel_lon += local.d_accel_lon / kk;
        r.d_accel_lat += local.d_accel_lat / kk;
        r.d_heading += local.d_heading / kk;
    }
    const auto m = static_cast<double>(d.size());
    r.d_image /= m;
    r.d_trajectory /= m;
    r.d_speed /= m;
    r.d_accel_lon /= m;
    r.d_accel_lat /= m;
    r.d_heading /= m;
    return r;
}

} // namespace scenemetric
