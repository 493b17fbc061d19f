#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "scenemetric/core/scenario.hpp"
#include "scenemetric/similarity/graph_match.hpp"

namespace scenemetric::testing {

// Straight drive along x at speed v sampled every 0.125 s. Both values are
// exact in binary so the derived speed is exactly v.
inline Trajectory exact_drive(double v, int points = 9)
{
    std::vector<TrajectoryPoint> pts;
    for (int i = 0; i < points; ++i) {
        const double t = 0.125 * i;
        pts.push_back({static_cast<float>(v * t), 0.0f, static_cast<float>(t)});
    }
    return Trajectory(pts);
}

// Scenarios alternating between 10 m/s (even ids) and 20 m/s (odd ids) on
// one blank single-lane road.
inline Dataset two_speed_dataset(std::size_t count)
{
    Dataset d;
    for (std::size_t i = 0; i < count; ++i)
        d.entries.emplace_back(InfrastructureImage::blank(8, 1.0), exact_drive(i % 2 == 0 ? 10.0 : 20.0),
                               TopologyGraph::abstract(1, {}), RouteLabeling({2}), Category::SingleLane);
    d.groups = compute_groups(d.entries);
    return d;
}

// Embeddings with each speed type in its own tight blob.
inline std::vector<std::vector<double>> blob_layout(std::size_t count)
{
    std::vector<std::vector<double>> z;
    for (std::size_t i = 0; i < count; ++i)
        z.push_back({(i % 2) * 100.0 + 0.001 * static_cast<double>(i), 0.0});
    return z;
}

// Embeddings on a line in id order, so every nearest neighbour has the
// other speed.
inline std::vector<std::vector<double>> interleaved_layout(std::size_t count)
{
    std::vector<std::vector<double>> z;
    for (std::size_t i = 0; i < count; ++i)
        z.push_back({static_cast<double>(i), 0.0});
    return z;
}

// Straight-line drive at constant speed v; `wobble` adds a lateral sway.
inline Trajectory drive(double v, double wobble = 0.0)
{
    std::vector<TrajectoryPoint> pts;
    for (int i = 0; i < 12; ++i) {
        const double t = 0.5 * i;
        pts.push_back({static_cast<float>(v * t), static_cast<float>(wobble * std::sin(t)), static_cast<float>(t)});
    }
    return Trajectory(pts);
}

// Abstract graphs: every point maps to vertex 0, which carries the start label.
inline TopologyGraph fork_graph() { return TopologyGraph::abstract(4, {{0, 1}, {1, 3}, {0, 2}}); }
inline TopologyGraph loop_graph() { return TopologyGraph::abstract(3, {{0, 1}, {1, 2}, {2, 0}}); }

inline Scenario make(const TopologyGraph& g, std::vector<std::uint8_t> labels, Trajectory t, Category c)
{
    return Scenario(InfrastructureImage::blank(8, 1.0), std::move(t), g, RouteLabeling(std::move(labels)), c);
}

inline Dataset with_groups(std::vector<Scenario> entries)
{
    Dataset d;
    d.entries = std::move(entries);
    d.groups = compute_groups(d.entries);
    return d;
}

// Two templates x {2, 1} routes: fork route A {0,1,2}, fork route B {3,4},
// loop {5}.
inline Dataset six_scenarios()
{
    const auto f = fork_graph();
    const auto l = loop_graph();
    return with_groups({make(f, {2, 1, 0, 1}, drive(5.0), Category::Intersection),
                        make(f, {2, 1, 0, 1}, drive(6.0), Category::Intersection),
                        make(f, {2, 1, 0, 1}, drive(8.0, 1.0), Category::Intersection),
                        make(f, {2, 0, 1, 0}, drive(5.0), Category::Intersection),
                        make(f, {2, 0, 1, 0}, drive(9.0), Category::Intersection),
                        make(l, {2, 1, 1}, drive(7.0), Category::Roundabout)});
}

// Candidate sets straight from pairwise similarity calls.
struct OracleSets {
    std::vector<std::size_t> pp, pn, nn;
};

inline OracleSets oracle_sets(const Dataset& d, std::size_t a)
{
    OracleSets o;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (i == a)
            continue;
        const int si = infra_similarity(d[a].graph, d[i].graph);
        const int sr = route_similarity(d[a].graph, d[a].route, d[i].graph, d[i].route);
        if (sr == 1)
            o.pp.push_back(i);
        else if (si == 1)
            o.pn.push_back(i);
        else
            o.nn.push_back(i);
    }
    return o;
}

} // namespace scenemetric::testing
