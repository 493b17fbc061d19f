#pragma once

#include <vector>

#include "scenemetric/core/scenario.hpp"
#include "scenemetric/similarity/canonical.hpp"

namespace scenemetric {

/// Graph-class and route-class codes for every scenario.
struct ClassCodes {
    std::vector<CanonicalForm> graph;
    std::vector<CanonicalForm> route;
};

inline ClassCodes compute_class_codes(const std::vector<Scenario>& scenarios,
                                      std::size_t bound = kDefaultCanonicalBound)
{
    ClassCodes codes;
    codes.graph.reserve(scenarios.size());
    codes.route.reserve(scenarios.size());
    for (const auto& s : scenarios) {
        codes.graph.push_back(canonical_code(s.graph, nullptr, bound));
        codes.route.push_back(canonical_code(s.graph, &s.route, bound));
    }
    return codes;
}

/// Dense C/G/R group ids (first-appearance order) for a list of scenarios.
inline GroupIndex compute_groups(const std::vector<Scenario>& scenarios, std::size_t bound = kDefaultCanonicalBound)
{
    const ClassCodes codes = compute_class_codes(scenarios, bound);
    std::vector<Category> cats;
    cats.reserve(scenarios.size());
    for (const auto& s : scenarios)
        cats.push_back(s.category);
    return {dense_ids(cats), dense_ids(codes.graph), dense_ids(codes.route)};
}

} // namespace scenemetric
