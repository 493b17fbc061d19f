#include <map>
#include <set>

#include <gtest/gtest.h>

#include "scenemetric/core/dataset_io.hpp"
#include "scenemetric/similarity/canonical.hpp"
#include "scenemetric/similarity/graph_match.hpp"
#include "scenemetric/synthgen.hpp"
#include "test_support.hpp"

using namespace scenemetric;

namespace {

GeneratorConfig small_config(std::vector<Category> templates, int per_template)
{
    GeneratorConfig c;
    c.templates = std::move(templates);
    c.scenarios_per_template = per_template;
    c.image_size = 32;
    return c;
}

const Dataset& default_dataset()
{
    static const Dataset d = generate(GeneratorConfig{});
    return d;
}

// Successor paths from a lane with no predecessor to a lane with no successor.
std::size_t count_entry_to_exit_paths(const TopologyGraph& g)
{
    const std::size_t n = g.vertex_count();
    std::vector<bool> has_pred(n, false), has_succ(n, false);
    for (const auto& e : g.edges())
        if (e.kind == EdgeKind::Successor) {
            has_succ[e.from] = true;
            has_pred[e.to] = true;
        }
    std::size_t count = 0;
    std::function<void(std::size_t, std::vector<bool>&)> walk = [&](std::size_t v, std::vector<bool>& seen) {
        if (!has_succ[v]) {
            ++count;
            return;
        }
        for (std::size_t w = 0; w < n; ++w)
            if ((g.edge_bits(v, w) & 1) && !seen[w]) {
                seen[w] = true;
                walk(w, seen);
                seen[w] = false;
            }
    };
    for (std::size_t v = 0; v < n; ++v)
        if (!has_pred[v]) {
            std::vector<bool> seen(n, false);
            seen[v] = true;
            walk(v, seen);
        }
    return count;
}

} // namespace

TEST(TemplateCatalog, HasEightDistinctCategories)
{
    const auto cat = template_catalog();
    ASSERT_EQ(cat.size(), 8u);
    std::set<Category> seen;
    for (const auto& t : cat)
        seen.insert(t.category);
    EXPECT_EQ(seen.size(), 8u);
}

TEST(TemplateCatalog, GraphsArePairwiseNonIsomorphicAndCodesAgree)
{
    const auto cat = template_catalog();
    for (std::size_t i = 0; i < cat.size(); ++i)
        for (std::size_t j = 0; j < cat.size(); ++j) {
            const int iso = infra_similarity(cat[i].graph, cat[j].graph);
            EXPECT_EQ(iso, i == j ? 1 : 0) << category_name(cat[i].category) << " vs " << category_name(cat[j].category);
            EXPECT_EQ(canonical_code(cat[i].graph) == canonical_code(cat[j].graph), iso == 1);
        }
}

TEST(TemplateCatalog, RoutesAreLegalAndPairwiseDistinct)
{
    for (const auto& t : template_catalog()) {
        const auto& g = t.graph;
        EXPECT_GE(t.routes.size(), 2u) << category_name(t.category);
        std::vector<RouteLabeling> labelings;
        for (const auto& r : t.routes) {
            ASSERT_FALSE(r.legs.empty());
            for (std::size_t k = 0; k + 1 < r.legs.size(); ++k) {
                const std::size_t from = r.legs[k].merge_into.value_or(r.legs[k].lane);
                EXPECT_TRUE(g.edge_bits(from, r.legs[k + 1].lane) & 1)
                    << category_name(t.category) << " route " << r.name << " leg " << k;
            }
            for (const auto& leg : r.legs) {
                if (leg.merge_into) {
                    EXPECT_TRUE(g.edge_bits(leg.lane, *leg.merge_into) & 2) << "merge needs a neighbour edge";
                }
            }
            labelings.emplace_back(r.expected_labels(g.vertex_count()));
        }
        for (std::size_t a = 0; a < labelings.size(); ++a)
            for (std::size_t b = a + 1; b < labelings.size(); ++b)
                EXPECT_EQ(route_similarity(g, labelings[a], g, labelings[b]), 0)
                    << category_name(t.category) << " routes " << a << " and " << b;
    }
}

TEST(TemplateCatalog, IntersectionOffersStraightLeftAndRight)
{
    const auto t = find_template(Category::Intersection);
    EXPECT_GE(t.routes.size(), 3u);
    // Four entries, each reaching three exits.
    EXPECT_EQ(count_entry_to_exit_paths(t.graph), 12u);
}

TEST(Generate, DeterministicForAFixedSeed)
{
    const auto cfg = small_config({Category::Roundabout, Category::HighwayEntering}, 6);
    const Dataset a = generate(cfg);
    const Dataset b = generate(cfg);
    ASSERT_TRUE(a == b);
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_EQ(encode_scenario_blob(a[i]), encode_scenario_blob(b[i]));

    auto other = cfg;
    other.seed = cfg.seed + 1;
    EXPECT_FALSE(generate(other) == a);
}

TEST(Generate, ClosedUnderTemplateSet)
{
    const Dataset d = generate(small_config({Category::Intersection}, 3));
    ASSERT_EQ(d.size(), 3u * find_template(Category::Intersection).routes.size());
    for (const auto& s : d.entries)
        EXPECT_EQ(s.category, Category::Intersection);
}

TEST(Generate, SizeAndRouteCoverageFollowTemplateRouteGrid)
{
    // Three templates with three routes plus single-lane with two.
    const std::vector<Category> cats{Category::Intersection, Category::Roundabout, Category::Highway,
                                     Category::SingleLane};
    const Dataset d = generate(small_config(cats, 10));
    std::size_t grid = 0;
    for (Category c : cats)
        grid += find_template(c).routes.size();
    ASSERT_EQ(grid, 11u);
    ASSERT_EQ(d.size(), 10u * grid);

    const Dataset three_routes = generate(small_config({Category::Intersection, Category::Roundabout, Category::Highway,
                                                        Category::Intersection}, 10));
    EXPECT_EQ(three_routes.size(), 90u); // duplicate template entries are ignored

    for (Category c : cats) {
        std::map<int, int> sizes;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d[i].category == c)
                ++sizes[d.groups.route[i]];
        EXPECT_EQ(sizes.size(), find_template(c).routes.size());
        for (auto [id, n] : sizes)
            EXPECT_EQ(n, 10);
    }
    EXPECT_EQ(static_cast<std::size_t>(group_count(d.groups.route)), grid);
}

TEST(Generate, EmptyTemplateSetIsAnError)
{
    EXPECT_THROW(generate(small_config({}, 5)), Error);
}

TEST(Generate, TopologyStableAndRoutesConsistent)
{
    const Dataset& d = default_dataset();
    std::map<Category, ScenarioTemplate> templates;
    for (const auto& t : template_catalog())
        templates.emplace(t.category, t);
    for (const auto& s : d.entries) {
        const auto& t = templates.at(s.category);
        EXPECT_EQ(infra_similarity(s.graph, t.graph), 1);
        EXPECT_NO_THROW(derive_route_labeling(s.graph, s.trajectory));
        EXPECT_EQ(derive_route_labeling(s.graph, s.trajectory), s.route);
        bool matches_a_route = false;
        for (const auto& r : t.routes)
            matches_a_route = matches_a_route || RouteLabeling(r.expected_labels(t.graph.vertex_count())) == s.route;
        EXPECT_TRUE(matches_a_route);
    }
}

TEST(Generate, TopologyStableUnderLargeJitter)
{
    auto cfg = small_config({kAllCategories.begin(), kAllCategories.end()}, 4);
    cfg.jitter = 4.0;
    const Dataset d = generate(cfg);
    for (const auto& s : d.entries)
        EXPECT_EQ(infra_similarity(s.graph, find_template(s.category).graph), 1);
}

TEST(Generate, TrajectoriesFollowTheSamplingGrid)
{
    const Dataset& d = default_dataset();
    for (const auto& s : d.entries) {
        ASSERT_EQ(s.trajectory.size(), 61u);
        EXPECT_NEAR(s.trajectory.duration(), 6.0, 1e-5);
        EXPECT_NEAR(s.trajectory[1].t - s.trajectory[0].t, 0.1, 1e-6);
        EXPECT_DOUBLE_EQ(s.image.meters_per_pixel(), 200.0 / 64);
        EXPECT_NO_THROW(build_reconstruction_target(s));
    }
}

TEST(Generate, DefaultDatasetHasRichGroups)
{
    const Dataset& d = default_dataset();
    EXPECT_GE(d.size(), 240u);
    for (GroupLevel l : {GroupLevel::C, GroupLevel::G, GroupLevel::R}) {
        const auto& ids = d.groups.level(l);
        const int k = group_count(ids);
        EXPECT_GE(k, 2);
        std::vector<int> sizes(k, 0);
        for (int id : ids)
            ++sizes[id];
        for (int n : sizes)
            EXPECT_GE(n, 2) << group_level_name(l);
    }
}
