#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "scenemetric/core/scenario.hpp"

namespace scenemetric {

/// Opaque byte string naming an isomorphism class (route-aware when built
/// with labels). Stable within one library version only.
struct CanonicalForm {
    std::string code;

    friend bool operator==(const CanonicalForm&, const CanonicalForm&) = default;
    friend auto operator<=>(const CanonicalForm&, const CanonicalForm&) = default;
};

inline constexpr std::size_t kDefaultCanonicalBound = 64;

namespace canon_detail {

using Colors = std::vector<int>;

// Renumbers arbitrary ordered keys into dense colours 0..k-1 preserving order.
template <typename Key>
Colors rank(const std::vector<Key>& keys)
{
    std::vector<Key> sorted = keys;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    Colors out(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i)
        out[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), keys[i]) - sorted.begin());
    return out;
}

inline int color_count(const Colors& c) { return c.empty() ? 0 : *std::max_element(c.begin(), c.end()) + 1; }

class Canonizer {
public:
    Canonizer(const TopologyGraph& g, const std::vector<std::uint8_t>* labels) : g_(g), n_(g.vertex_count())
    {
        if (labels)
            labels_ = *labels;
        else
            labels_.assign(n_, 0);
    }

    std::string run()
    {
        using Key = std::tuple<int, int, int, int, int>;
        std::vector<Key> keys(n_);
        for (std::size_t v = 0; v < n_; ++v) {
            int os = 0, on = 0, is = 0, in = 0;
            for (std::size_t w = 0; w < n_; ++w) {
                os += g_.edge_bits(v, w) & 1;
                on += (g_.edge_bits(v, w) >> 1) & 1;
                is += g_.edge_bits(w, v) & 1;
                in += (g_.edge_bits(w, v) >> 1) & 1;
            }
            keys[v] = {labels_[v], os, on, is, in};
        }
        search(refine(rank(keys)));
        return best_;
    }

private:
    // Iterated colour refinement: a vertex's new colour is its old colour plus
    // the sorted multiset of (out bits, in bits, neighbour colour).
    Colors refine(Colors colors) const
    {
        using Key = std::pair<int, std::vector<std::tuple<int, int, int>>>;
        int count = color_count(colors);
        while (true) {
            std::vector<Key> keys(n_);
            for (std::size_t v = 0; v < n_; ++v) {
                keys[v].first = colors[v];
                for (std::size_t w = 0; w < n_; ++w) {
                    const int out = g_.edge_bits(v, w);
                    const int in = g_.edge_bits(w, v);
                    if (out || in)
                        keys[v].second.emplace_back(out, in, colors[w]);
                }
                std::sort(keys[v].second.begin(), keys[v].second.end());
            }
            Colors next = rank(keys);
            const int next_count = color_count(next);
            if (next_count == count)
                return next;
            colors = std::move(next);
            count = next_count;
        }
    }

    std::string leaf_code(const Colors& colors) const
    {
        std::vector<std::size_t> at(n_);
        for (std::size_t v = 0; v < n_; ++v)
            at[static_cast<std::size_t>(colors[v])] = v;
        std::string code;
        code.reserve(8 + n_ + n_ * n_);
        const auto n32 = static_cast<std::uint32_t>(n_);
        for (int i = 0; i < 4; ++i)
            code.push_back(static_cast<char>((n32 >> (8 * i)) & 0xFF));
        for (std::size_t i = 0; i < n_; ++i)
            code.push_back(static_cast<char>(labels_[at[i]]));
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
                code.push_back(static_cast<char>(g_.edge_bits(at[i], at[j])));
        return code;
    }

    // Swapping u and v is an automorphism of the coloured graph.
    bool twins(std::size_t u, std::size_t v) const
    {
        if (labels_[u] != labels_[v] || g_.edge_bits(u, v) != g_.edge_bits(v, u))
            return false;
        for (std::size_t w = 0; w < n_; ++w) {
            if (w == u || w == v)
                continue;
            if (g_.edge_bits(u, w) != g_.edge_bits(v, w) || g_.edge_bits(w, u) != g_.edge_bits(w, v))
                return false;
        }
        return true;
    }

    void search(const Colors& colors)
    {
        if (color_count(colors) == static_cast<int>(n_)) {
            std::string code = leaf_code(colors);
            if (!have_best_ || code < best_) {
                best_ = std::move(code);
                have_best_ = true;
            }
            return;
        }
        // Target the first (lowest-colour) non-singleton cell.
        std::vector<int> sizes(n_, 0);
        for (int c : colors)
            ++sizes[static_cast<std::size_t>(c)];
        int target = 0;
        while (sizes[static_cast<std::size_t>(target)] < 2)
            ++target;
        std::vector<std::size_t> cell;
        for (std::size_t v = 0; v < n_; ++v)
            if (colors[v] == target)
                cell.push_back(v);

        std::vector<std::size_t> tried;
        for (std::size_t v : cell) {
            if (std::any_of(tried.begin(), tried.end(), [&](std::size_t u) { return twins(u, v); }))
                continue;
            tried.push_back(v);
            std::vector<int> split(n_);
            for (std::size_t w = 0; w < n_; ++w)
                split[w] = 2 * colors[w] + ((colors[w] == target && w != v) ? 1 : 0);
            search(refine(rank(split)));
        }
    }

    const TopologyGraph& g_;
    std::size_t n_;
    std::vector<std::uint8_t> labels_;
    std::string best_;
    bool have_best_ = false;
};

} // namespace canon_detail

/// Canonical code: equal for two graphs iff they are isomorphic (or
/// route-isomorphic when labels are given).
inline CanonicalForm canonical_code(const TopologyGraph& g, const RouteLabeling* labels = nullptr,
                                    std::size_t bound = kDefaultCanonicalBound)
{
    if (g.vertex_count() > bound)
        throw Error("canonicalization bound exceeded: graph has " + std::to_string(g.vertex_count()) +
                    " vertices, bound is " + std::to_string(bound));
    if (labels)
        require(labels->size() == g.vertex_count(), "route labeling not aligned with its graph");
    return {canon_detail::Canonizer(g, labels ? &labels->labels() : nullptr).run()};
}

inline CanonicalForm canonical_code(const TopologyGraph& g, const RouteLabeling& labels,
                                    std::size_t bound = kDefaultCanonicalBound)
{
    return canonical_code(g, &labels, bound);
}

} // namespace scenemetric
