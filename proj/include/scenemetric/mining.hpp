#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "scenemetric/core/random.hpp"
#include "scenemetric/core/scenario.hpp"
#include "scenemetric/similarity/classes.hpp"
#include "scenemetric/similarity/dtw.hpp"

namespace scenemetric {

enum class NegativeStrategy { Random, Group, RandomExcl };

inline std::string_view strategy_name(NegativeStrategy s)
{
    switch (s) {
    case NegativeStrategy::Random: return "random";
    case NegativeStrategy::Group: return "group";
    case NegativeStrategy::RandomExcl: return "random-excl";
    }
    return "?";
}

inline NegativeStrategy parse_strategy(std::string_view name)
{
    if (name == "random")
        return NegativeStrategy::Random;
    if (name == "group")
        return NegativeStrategy::Group;
    if (name == "random-excl" || name == "random_excl")
        return NegativeStrategy::RandomExcl;
    throw Error("unknown negative strategy '" + std::string(name) + "'");
}

/// Graph/route class membership of every scenario plus the within-route-class
/// action dissimilarities used for the action similarity s_t.
struct ClassIndex {
    std::vector<int> graph_class;
    std::vector<int> route_class;
    std::vector<Category> category;
    std::vector<std::vector<std::size_t>> graph_members;
    std::vector<std::vector<std::size_t>> route_members;
    std::vector<int> route_class_graph;  ///< graph class of each route class
    std::vector<std::size_t> slot;       ///< position of a scenario inside its route class
    std::vector<std::vector<double>> dissimilarity; ///< per route class, k*k matrix
    std::vector<double> d_max;

    std::size_t size() const { return graph_class.size(); }

    double pair_dissimilarity(std::size_t a, std::size_t b) const
    {
        require(route_class[a] == route_class[b], "dissimilarity is only defined within a route class");
        const auto rc = static_cast<std::size_t>(route_class[a]);
        const std::size_t k = route_members[rc].size();
        return dissimilarity[rc][slot[a] * k + slot[b]];
    }

    /// s_t between two members of one route class.
    double action_similarity(std::size_t a, std::size_t b) const
    {
        return trajectory_similarity(pair_dissimilarity(a, b), d_max[static_cast<std::size_t>(route_class[a])]);
    }
};

inline ClassIndex build_index(const Dataset& d, std::size_t bound = kDefaultCanonicalBound)
{
    require(d.size() > 0, "cannot index an empty dataset");
    const ClassCodes codes = compute_class_codes(d.entries, bound);
    ClassIndex idx;
    idx.graph_class = dense_ids(codes.graph);
    idx.route_class = dense_ids(codes.route);
    for (const auto& s : d.entries)
        idx.category.push_back(s.category);

    idx.graph_members.resize(static_cast<std::size_t>(group_count(idx.graph_class)));
    idx.route_members.resize(static_cast<std::size_t>(group_count(idx.route_class)));
    idx.route_class_graph.assign(idx.route_members.size(), -1);
    idx.slot.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        idx.graph_members[static_cast<std::size_t>(idx.graph_class[i])].push_back(i);
        auto& members = idx.route_members[static_cast<std::size_t>(idx.route_class[i])];
        idx.slot[i] = members.size();
        members.push_back(i);
        idx.route_class_graph[static_cast<std::size_t>(idx.route_class[i])] = idx.graph_class[i];
    }

    std::vector<ActionSequence> actions;
    actions.reserve(d.size());
    for (const auto& s : d.entries)
        actions.push_back(derive_action_sequence(s.trajectory));

    idx.dissimilarity.resize(idx.route_members.size());
    idx.d_max.assign(idx.route_members.size(), 0.0);
    for (std::size_t rc = 0; rc < idx.route_members.size(); ++rc) {
        const auto& members = idx.route_members[rc];
        const std::size_t k = members.size();
        auto& m = idx.dissimilarity[rc];
        m.assign(k * k, 0.0);
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = a + 1; b < k; ++b) {
                const double v = dtw(actions[members[a]], actions[members[b]]).dissimilarity;
                m[a * k + b] = v;
                m[b * k + a] = v;
                idx.d_max[rc] = std::max(idx.d_max[rc], v);
            }
    }
    return idx;
}

struct Quadruplet {
    std::size_t anchor = 0;
    std::size_t pp = 0; ///< same graph, same route
    std::size_t pn = 0; ///< same graph, different route
    std::size_t nn = 0; ///< different graph
    double s_t = 1.0;   ///< action similarity of anchor and pp

    friend bool operator==(const Quadruplet&, const Quadruplet&) = default;
};

namespace mining_detail {

struct Candidates {
    std::vector<std::size_t> pp, pn, nn;
};

inline Candidates candidates(const ClassIndex& idx, std::size_t anchor, NegativeStrategy strategy)
{
    Candidates c;
    const int g = idx.graph_class[anchor];
    const int r = idx.route_class[anchor];
    for (std::size_t i : idx.route_members[static_cast<std::size_t>(r)])
        if (i != anchor)
            c.pp.push_back(i);
    for (std::size_t i : idx.graph_members[static_cast<std::size_t>(g)])
        if (idx.route_class[i] != r)
            c.pn.push_back(i);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx.graph_class[i] == g)
            continue;
        const bool same_category = idx.category[i] == idx.category[anchor];
        if (strategy == NegativeStrategy::Group && !same_category)
            continue;
        if (strategy == NegativeStrategy::RandomExcl && same_category)
            continue;
        c.nn.push_back(i);
    }
    return c;
}

} // namespace mining_detail

/// Candidate sets for an anchor (exposed for verification and diagnostics).
inline mining_detail::Candidates quadruplet_candidates(const ClassIndex& idx, std::size_t anchor,
                                                       NegativeStrategy strategy)
{
    require(anchor < idx.size(), "anchor index out of range");
    return mining_detail::candidates(idx, anchor, strategy);
}

/// Draws pp, pn and nn uniformly from their candidate sets.
inline Quadruplet mine_quadruplet(const ClassIndex& idx, std::size_t anchor, NegativeStrategy strategy, Rng& rng)
{
    const auto c = quadruplet_candidates(idx, anchor, strategy);
    if (c.pp.empty())
        throw Error("empty pp candidates for anchor " + std::to_string(anchor));
    if (c.pn.empty())
        throw Error("empty pn candidates for anchor " + std::to_string(anchor));
    if (c.nn.empty())
        throw Error("empty nn candidates for anchor " + std::to_string(anchor) + " (strategy " +
                    std::string(strategy_name(strategy)) + ")");
    Quadruplet q;
    q.anchor = anchor;
    q.pp = c.pp[uniform_index(rng, c.pp.size())];
    q.pn = c.pn[uniform_index(rng, c.pn.size())];
    q.nn = c.nn[uniform_index(rng, c.nn.size())];
    q.s_t = idx.action_similarity(anchor, q.pp);
    return q;
}

inline bool anchor_eligible(const ClassIndex& idx, std::size_t anchor, NegativeStrategy strategy)
{
    const auto c = mining_detail::candidates(idx, anchor, strategy);
    return !c.pp.empty() && !c.pn.empty() && !c.nn.empty();
}

inline std::size_t skipped_anchors(const ClassIndex& idx, NegativeStrategy strategy)
{
    std::size_t n = 0;
    for (std::size_t a = 0; a < idx.size(); ++a)
        n += !anchor_eligible(idx, a, strategy);
    return n;
}

struct MinedEpoch {
    std::vector<Quadruplet> quadruplets;
    std::vector<std::size_t> skipped; ///< ineligible anchors, ascending
};

/// One quadruplet per eligible anchor, anchors in shuffled order.
inline MinedEpoch mine_epoch(const ClassIndex& idx, NegativeStrategy strategy, Rng& rng)
{
    std::vector<std::size_t> order(idx.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    shuffle(order, rng);
    MinedEpoch epoch;
    for (std::size_t a : order) {
        if (!anchor_eligible(idx, a, strategy)) {
            epoch.skipped.push_back(a);
            continue;
        }
        epoch.quadruplets.push_back(mine_quadruplet(idx, a, strategy, rng));
    }
    std::sort(epoch.skipped.begin(), epoch.skipped.end());
    if (epoch.quadruplets.empty())
        throw Error("all anchors ineligible: no quadruplet can be mined (strategy " +
                    std::string(strategy_name(strategy)) + ")");
    return epoch;
}

} // namespace scenemetric
