#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "scenemetric/core/scenario.hpp"

namespace scenemetric {

/// Bijection from the vertices of the first graph to the vertices of the
/// second that preserves edges and edge kinds in both directions.
struct IsomorphismWitness {
    std::vector<std::size_t> mapping;
};

namespace match_detail {

// Local invariant of a vertex: colour plus in/out degree per edge kind.
using Signature = std::array<int, 5>;

inline Signature signature(const TopologyGraph& g, std::span<const std::uint8_t> colors, std::size_t v)
{
    Signature s{colors.empty() ? 0 : colors[v], 0, 0, 0, 0};
    for (std::size_t w = 0; w < g.vertex_count(); ++w) {
        const auto out = g.edge_bits(v, w);
        const auto in = g.edge_bits(w, v);
        s[1] += out & 1;
        s[2] += (out >> 1) & 1;
        s[3] += in & 1;
        s[4] += (in >> 1) & 1;
    }
    return s;
}

class Matcher {
public:
    Matcher(const TopologyGraph& a, std::span<const std::uint8_t> colors_a, const TopologyGraph& b,
            std::span<const std::uint8_t> colors_b)
        : a_(a), b_(b), n_(a.vertex_count())
    {
        sig_a_.resize(n_);
        sig_b_.resize(n_);
        for (std::size_t v = 0; v < n_; ++v) {
            sig_a_[v] = signature(a, colors_a, v);
            sig_b_[v] = signature(b, colors_b, v);
        }
        order_ = matching_order();
        map_ab_.assign(n_, kUnmapped);
        used_b_.assign(n_, 0);
    }

    std::optional<IsomorphismWitness> run()
    {
        auto sa = sig_a_;
        auto sb = sig_b_;
        std::sort(sa.begin(), sa.end());
        std::sort(sb.begin(), sb.end());
        if (sa != sb)
            return std::nullopt;
        if (!extend(0))
            return std::nullopt;
        return IsomorphismWitness{map_ab_};
    }

private:
    static constexpr std::size_t kUnmapped = static_cast<std::size_t>(-1);

    // Connectivity-first order: each next vertex is the unvisited one with the
    // most already-ordered neighbours, ties broken by rarer signature then id.
    std::vector<std::size_t> matching_order() const
    {
        std::vector<int> rarity(n_);
        for (std::size_t v = 0; v < n_; ++v)
            rarity[v] = static_cast<int>(std::count(sig_a_.begin(), sig_a_.end(), sig_a_[v]));
        std::vector<std::size_t> order;
        std::vector<char> placed(n_, 0);
        std::vector<int> links(n_, 0);
        for (std::size_t step = 0; step < n_; ++step) {
            std::size_t best = kUnmapped;
            for (std::size_t v = 0; v < n_; ++v) {
                if (placed[v])
                    continue;
                if (best == kUnmapped || links[v] > links[best] ||
                    (links[v] == links[best] && rarity[v] < rarity[best]))
                    best = v;
            }
            placed[best] = 1;
            order.push_back(best);
            for (std::size_t w = 0; w < n_; ++w)
                if (a_.edge_bits(best, w) || a_.edge_bits(w, best))
                    ++links[w];
        }
        return order;
    }

    bool feasible(std::size_t u, std::size_t v) const
    {
        if (sig_a_[u] != sig_b_[v])
            return false;
        for (std::size_t k = 0; k < n_; ++k) {
            const std::size_t mk = map_ab_[k];
            if (mk == kUnmapped)
                continue;
            if (a_.edge_bits(u, k) != b_.edge_bits(v, mk) || a_.edge_bits(k, u) != b_.edge_bits(mk, v))
                return false;
        }
        return true;
    }

    bool extend(std::size_t depth)
    {
        if (depth == n_)
            return true;
        const std::size_t u = order_[depth];
        for (std::size_t v = 0; v < n_; ++v) {
            if (used_b_[v] || !feasible(u, v))
                continue;
            map_ab_[u] = v;
            used_b_[v] = 1;
            if (extend(depth + 1))
                return true;
            map_ab_[u] = kUnmapped;
            used_b_[v] = 0;
        }
        return false;
    }

    const TopologyGraph& a_;
    const TopologyGraph& b_;
    std::size_t n_;
    std::vector<Signature> sig_a_, sig_b_;
    std::vector<std::size_t> order_;
    std::vector<std::size_t> map_ab_;
    std::vector<char> used_b_;
};

} // namespace match_detail

/// Backtracking search for a colour-, edge- and kind-preserving bijection.
/// Colours are optional per-vertex labels (empty span = uncoloured).
inline std::optional<IsomorphismWitness> find_isomorphism(const TopologyGraph& a, const TopologyGraph& b,
                                                          std::span<const std::uint8_t> colors_a = {},
                                                          std::span<const std::uint8_t> colors_b = {})
{
    if (a.vertex_count() != b.vertex_count() || a.edges().size() != b.edges().size())
        return std::nullopt;
    require(colors_a.empty() == colors_b.empty(), "colours must be given for both graphs or neither");
    require(colors_a.empty() || (colors_a.size() == a.vertex_count() && colors_b.size() == b.vertex_count()),
            "colour vector length differs from vertex count");
    return match_detail::Matcher(a, colors_a, b, colors_b).run();
}

/// Infrastructure similarity: 1 iff the graphs are isomorphic (edge kinds must match).
inline int infra_similarity(const TopologyGraph& g_i, const TopologyGraph& g_j)
{
    return find_isomorphism(g_i, g_j).has_value() ? 1 : 0;
}

/// Route similarity: 1 iff some isomorphism also carries one route labeling onto the other.
inline int route_similarity(const TopologyGraph& g_i, const RouteLabeling& r_i, const TopologyGraph& g_j,
                            const RouteLabeling& r_j)
{
    require(r_i.size() == g_i.vertex_count() && r_j.size() == g_j.vertex_count(),
            "route labeling not aligned with its graph");
    return find_isomorphism(g_i, g_j, r_i.labels(), r_j.labels()).has_value() ? 1 : 0;
}

} // namespace scenemetric
