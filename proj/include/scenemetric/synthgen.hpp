#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "scenemetric/core/geometry.hpp"
#include "scenemetric/core/random.hpp"
#include "scenemetric/core/scenario.hpp"
#include "scenemetric/similarity/classes.hpp"

namespace scenemetric {

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

/// One step of a route. A plain leg follows `lane` from start to end. A merge
/// leg follows `lane`, drifts laterally onto `merge_into` between the given
/// fractions of its length, then continues along `merge_into` to its end.
struct RouteLeg {
    std::size_t lane = 0;
    std::optional<std::size_t> merge_into;
    double blend_begin = 0.0;
    double blend_end = 0.0;
};

struct RouteTemplate {
    std::string name;
    std::vector<RouteLeg> legs;

    /// Route labels this route produces on a graph with `vertex_count` vertices.
    std::vector<std::uint8_t> expected_labels(std::size_t vertex_count) const
    {
        std::vector<std::uint8_t> labels(vertex_count, 0);
        for (const auto& leg : legs) {
            labels[leg.lane] = std::max<std::uint8_t>(labels[leg.lane], 1);
            if (leg.merge_into)
                labels[*leg.merge_into] = std::max<std::uint8_t>(labels[*leg.merge_into], 1);
        }
        labels[legs.front().lane] = 2;
        return labels;
    }
};

struct ScenarioTemplate {
    Category category = Category::SingleLane;
    TopologyGraph graph;               ///< nominal geometry, template frame
    std::vector<RouteTemplate> routes; ///< pairwise route-distinct legal routes
    double speed_scale = 1.0;
};

namespace synth_detail {

constexpr double kSpacing = 2.0;   // polyline sample spacing (m)
constexpr double kHalfLane = 1.75; // half lane width (m)

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }

inline Polyline line(Point2 a, Point2 b)
{
    const int steps = std::max(1, static_cast<int>(std::ceil(distance(a, b) / kSpacing)));
    Polyline out;
    for (int i = 0; i <= steps; ++i) {
        const double u = static_cast<double>(i) / steps;
        out.push_back(a + u * (b - a));
    }
    return out;
}

inline Polyline bezier(Point2 p0, Point2 c, Point2 p1)
{
    const double approx = distance(p0, c) + distance(c, p1);
    const int steps = std::max(2, static_cast<int>(std::ceil(approx / kSpacing)));
    Polyline out;
    for (int i = 0; i <= steps; ++i) {
        const double u = static_cast<double>(i) / steps;
        const double a = (1 - u) * (1 - u), b = 2 * (1 - u) * u, d = u * u;
        out.push_back({a * p0.x + b * c.x + d * p1.x, a * p0.y + b * c.y + d * p1.y});
    }
    return out;
}

inline Polyline arc(Point2 centre, double radius, double from, double to)
{
    const int steps = std::max(2, static_cast<int>(std::ceil(std::abs(to - from) * radius / kSpacing)));
    Polyline out;
    for (int i = 0; i <= steps; ++i) {
        const double a = from + (to - from) * i / steps;
        out.push_back({centre.x + radius * std::cos(a), centre.y + radius * std::sin(a)});
    }
    return out;
}

inline Polyline join(Polyline a, const Polyline& b)
{
    for (std::size_t i = (!a.empty() && !b.empty() && a.back() == b.front()) ? 1 : 0; i < b.size(); ++i)
        a.push_back(b[i]);
    return a;
}

inline Point2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }
// Right-hand normal of a travel direction.
inline Point2 right_of(Point2 d) { return {d.y, -d.x}; }

// Intersection of the lines p + t*u and q + s*v; midpoint when parallel.
inline Point2 line_intersection(Point2 p, Point2 u, Point2 q, Point2 v)
{
    const double den = u.x * v.y - u.y * v.x;
    if (std::abs(den) < 1e-9)
        return 0.5 * (p + q);
    const double t = ((q.x - p.x) * v.y - (q.y - p.y) * v.x) / den;
    return p + t * u;
}

inline Edge succ(std::size_t a, std::size_t b) { return {a, b, EdgeKind::Successor}; }

inline void neighbors(std::vector<Edge>& edges, std::size_t a, std::size_t b)
{
    edges.push_back({a, b, EdgeKind::Neighbor});
    edges.push_back({b, a, EdgeKind::Neighbor});
}

inline RouteTemplate route(std::string name, std::vector<std::size_t> lanes)
{
    RouteTemplate r{std::move(name), {}};
    for (auto l : lanes)
        r.legs.push_back({l, std::nullopt, 0.0, 0.0});
    return r;
}

inline ScenarioTemplate single_lane()
{
    auto curve = [](double y) { return Point2{12.0 * std::sin(std::numbers::pi * y / 90.0), y}; };
    auto piece = [&](double y0, double y1) {
        Polyline p;
        for (double y = y0; y <= y1 + 1e-9; y += kSpacing)
            p.push_back(curve(y));
        return p;
    };
    TopologyGraph g({piece(-90, -30), piece(-30, 30), piece(30, 90)}, {succ(0, 1), succ(1, 2)});
    return {Category::SingleLane, std::move(g), {route("lower", {0, 1}), route("upper", {1, 2})}, 0.8};
}

inline ScenarioTemplate multi_lane()
{
    const double xl = -kHalfLane, xr = kHalfLane;
    std::vector<Polyline> lanes = {line({xl, -90}, {xl, 0}), line({xl, 0}, {xl, 90}), line({xr, -90}, {xr, 0}),
                                   line({xr, 0}, {xr, 90})};
    std::vector<Edge> edges = {succ(0, 1), succ(2, 3)};
    neighbors(edges, 0, 2);
    neighbors(edges, 1, 3);
    RouteTemplate change{"lane-change", {{0, 2, 0.55, 0.8}, {3, std::nullopt, 0, 0}}};
    return {Category::MultiLane, TopologyGraph(std::move(lanes), std::move(edges)),
            {route("keep", {0, 1}), std::move(change)}, 1.0};
}

// Junction with arms at the given headings (radians, pointing outward).
// Vertices: inbound lanes, outbound lanes, then one connector per
// (inbound arm, other arm) pair in arm order.
struct Junction {
    std::vector<Polyline> lanes;
    std::vector<Edge> edges;
    std::vector<std::vector<std::size_t>> connector; // [in arm][out arm]
    std::size_t arms = 0;
};

inline Junction junction(const std::vector<double>& headings)
{
    constexpr double near = 10.0, far = 90.0;
    Junction j;
    j.arms = headings.size();
    const std::size_t n = headings.size();
    std::vector<Point2> in_end(n), in_dir(n), out_start(n), out_dir(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Point2 u = unit(headings[k]);
        const Point2 d_in = -1.0 * u;
        const Point2 off_in = kHalfLane * right_of(d_in);
        j.lanes.push_back(line(far * u + off_in, near * u + off_in));
        in_end[k] = near * u + off_in;
        in_dir[k] = d_in;
    }
    for (std::size_t k = 0; k < n; ++k) {
        const Point2 u = unit(headings[k]);
        const Point2 off_out = kHalfLane * right_of(u);
        j.lanes.push_back(line(near * u + off_out, far * u + off_out));
        out_start[k] = near * u + off_out;
        out_dir[k] = u;
    }
    j.connector.assign(n, std::vector<std::size_t>(n, 0));
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            if (a == b)
                continue;
            const Point2 c = line_intersection(in_end[a], in_dir[a], out_start[b], out_dir[b]);
            j.connector[a][b] = j.lanes.size();
            j.lanes.push_back(bezier(in_end[a], c, out_start[b]));
            j.edges.push_back(succ(a, j.connector[a][b]));
            j.edges.push_back(succ(j.connector[a][b], n + b));
        }
    // Diverging connectors of one arm, each pointing to the one on its left.
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t i = 1; i + 1 < n; ++i)
            j.edges.push_back({j.connector[a][(a + i) % n], j.connector[a][(a + i + 1) % n], EdgeKind::Neighbor});
    return j;
}

inline ScenarioTemplate intersection()
{
    const double pi = std::numbers::pi;
    Junction j = junction({-pi / 2, 0.0, pi / 2, pi});
    const std::size_t n = j.arms;
    std::vector<RouteTemplate> routes = {route("right", {0, j.connector[0][1], n + 1}),
                                         route("straight", {0, j.connector[0][2], n + 2}),
                                         route("left", {0, j.connector[0][3], n + 3})};
    return {Category::Intersection, TopologyGraph(std::move(j.lanes), std::move(j.edges)), std::move(routes), 0.8};
}

inline ScenarioTemplate intersection_entering()
{
    const double pi = std::numbers::pi;
    Junction j = junction({-pi / 2, 0.0, pi});
    const std::size_t n = j.arms;
    std::vector<RouteTemplate> routes = {route("right", {0, j.connector[0][1], n + 1}),
                                         route("left", {0, j.connector[0][2], n + 2})};
    return {Category::IntersectionEntering, TopologyGraph(std::move(j.lanes), std::move(j.edges)), std::move(routes),
            0.8};
}

// Four-arm roundabout, counter-clockwise circulation. Vertices: entries
// E_k (0..3), exits X_k (4..7), ring pieces P_k between entry k and exit k+1
// (8..11), short ring pieces Q_k passing arm k (12..15). With `approach`, the
// entry of arm 0 is split and its upstream part becomes vertex 16.
inline ScenarioTemplate roundabout(bool approach)
{
    const double pi = std::numbers::pi;
    constexpr double radius = 14.0, delta = 0.22, far = 90.0, offset = 2.5;
    const std::array<double, 4> arm = {-pi / 2, 0.0, pi / 2, pi};
    std::vector<Polyline> lanes(16);
    for (std::size_t k = 0; k < 4; ++k) {
        const Point2 u = unit(arm[k]);
        const Point2 off_in = offset * right_of(-1.0 * u);
        const Point2 off_out = offset * right_of(u);
        const Point2 ring_in = radius * unit(arm[k] + delta);
        const Point2 ring_out = radius * unit(arm[k] - delta);
        const Point2 mid_in = 30.0 * u + off_in;
        const Point2 mid_out = 30.0 * u + off_out;
        lanes[k] = join(line(far * u + off_in, mid_in), bezier(mid_in, (radius + 8.0) * u + off_in, ring_in));
        lanes[4 + k] = join(bezier(ring_out, (radius + 8.0) * u + off_out, mid_out), line(mid_out, far * u + off_out));
        lanes[8 + k] = arc({0, 0}, radius, arm[k] + delta, arm[k] + pi / 2 - delta);
        lanes[12 + k] = arc({0, 0}, radius, arm[k] - delta, arm[k] + delta);
    }
    std::vector<Edge> edges;
    for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t next = (k + 1) % 4;
        edges.push_back(succ(k, 8 + k));
        edges.push_back(succ(12 + k, 8 + k));
        edges.push_back(succ(8 + k, 4 + next));
        edges.push_back(succ(8 + k, 12 + next));
    }
    if (!approach) {
        std::vector<RouteTemplate> routes = {route("exit-1", {0, 8, 5}), route("exit-2", {0, 8, 13, 9, 6}),
                                             route("exit-3", {0, 8, 13, 9, 14, 10, 7})};
        return {Category::Roundabout, TopologyGraph(std::move(lanes), std::move(edges)), std::move(routes), 0.9};
    }
    // Split entry 0 at 50 m from the centre.
    const Polyline& entry = lanes[0];
    Polyline upstream, downstream;
    const double split_y = -50.0;
    for (const auto& p : entry) {
        if (p.y <= split_y)
            upstream.push_back(p);
        if (p.y >= split_y)
            downstream.push_back(p);
    }
    if (upstream.back().y != split_y) {
        const Point2 cut{entry.front().x, split_y};
        upstream.push_back(cut);
        downstream.insert(downstream.begin(), cut);
    }
    lanes[0] = std::move(downstream);
    lanes.push_back(std::move(upstream));
    edges.push_back(succ(16, 0));
    std::vector<RouteTemplate> routes = {route("enter", {16, 0, 8}), route("enter-exit-1", {16, 0, 8, 5})};
    return {Category::RoundaboutEntering, TopologyGraph(std::move(lanes), std::move(edges)), std::move(routes), 1.0};
}

inline ScenarioTemplate highway()
{
    const std::array<double, 3> xs = {-3.5, 0.0, 3.5};
    std::vector<Polyline> lanes;
    for (double x : xs) {
        lanes.push_back(line({x, -90}, {x, 0}));
        lanes.push_back(line({x, 0}, {x, 90}));
    }
    // 0 L1, 1 L2, 2 M1, 3 M2, 4 R1, 5 R2
    std::vector<Edge> edges = {succ(0, 1), succ(2, 3), succ(4, 5)};
    neighbors(edges, 0, 2);
    neighbors(edges, 2, 4);
    neighbors(edges, 1, 3);
    neighbors(edges, 3, 5);
    RouteTemplate change{"change-right", {{2, 4, 0.55, 0.8}, {5, std::nullopt, 0, 0}}};
    return {Category::Highway,
            TopologyGraph(std::move(lanes), std::move(edges)),
            {route("keep-middle", {2, 3}), std::move(change), route("keep-right", {4, 5})},
            1.6};
}

inline ScenarioTemplate highway_entering()
{
    const double xm = -kHalfLane, xr = kHalfLane, xa = 3 * kHalfLane;
    // 0 M1, 1 M2, 2 R1, 3 R2, 4 ramp, 5 acceleration lane
    std::vector<Polyline> lanes = {line({xm, -90}, {xm, 10}), line({xm, 10}, {xm, 90}), line({xr, -90}, {xr, 10}),
                                   line({xr, 10}, {xr, 90}),  bezier({40, -90}, {xa, -75}, {xa, -30}),
                                   line({xa, -30}, {xa, 50})};
    std::vector<Edge> edges = {succ(0, 1), succ(2, 3), succ(4, 5)};
    neighbors(edges, 0, 2);
    neighbors(edges, 1, 3);
    neighbors(edges, 5, 2);
    neighbors(edges, 5, 3);
    RouteTemplate merge{"merge", {{4, std::nullopt, 0, 0}, {5, 3, 0.5625, 0.8125}}};
    return {Category::HighwayEntering,
            TopologyGraph(std::move(lanes), std::move(edges)),
            {std::move(merge), route("keep-right", {2, 3})},
            1.3};
}

} // namespace synth_detail

/// The eight built-in template families, in category order.
inline std::vector<ScenarioTemplate> template_catalog()
{
    using namespace synth_detail;
    return {single_lane(), multi_lane(),      intersection(),      intersection_entering(),
            roundabout(false), roundabout(true), highway(), highway_entering()};
}

inline ScenarioTemplate find_template(Category c)
{
    for (auto& t : template_catalog())
        if (t.category == c)
            return t;
    throw Error("no template for category " + std::string(category_name(c)));
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Ranges for the initial speed (m/s) and constant acceleration (m/s^2) of one
/// speed-profile family.
struct SpeedProfile {
    double speed_min = 8.0;
    double speed_max = 14.0;
    double accel_min = -0.4;
    double accel_max = 0.4;
};

struct GeneratorConfig {
    std::uint64_t seed = 7;
    int scenarios_per_template = 45; ///< per legal route of each template
    std::vector<Category> templates{kAllCategories.begin(), kAllCategories.end()};
    int image_size = 64;
    std::vector<SpeedProfile> speed_profiles = {
        {8.0, 14.0, -0.4, 0.4}, // free flow
        {3.0, 6.0, 1.0, 2.0},   // pulling away
        {12.0, 15.0, -2.0, -1.0}, // braking
    };
    double jitter = 2.0;     ///< geometric noise amplitude (m)
    int max_clutter_roads = 2; ///< off-graph roads drawn into the image
    double extent = 200.0;   ///< world extent of the image (m)
    double duration = 6.0;   ///< trajectory span (s)
    double time_step = 0.1;  ///< trajectory sampling interval (s)

    void validate() const
    {
        require(!templates.empty(), "generator template set is empty");
        require(scenarios_per_template >= 1, "scenarios_per_template must be at least 1");
        require(image_size >= 8, "image_size must be at least 8");
        require(jitter >= 0.0, "jitter must be nonnegative");
        require(max_clutter_roads >= 0, "max_clutter_roads must be nonnegative");
        require(!speed_profiles.empty(), "at least one speed profile is required");
        for (const auto& p : speed_profiles)
            require(p.speed_min >= 0.0 && p.speed_max >= p.speed_min && p.accel_max >= p.accel_min,
                    "invalid speed profile range");
        require(extent > 0.0 && duration > 0.0 && time_step > 0.0, "extent, duration and time_step must be positive");
    }
};

namespace synth_detail {

// Smooth deformation: rotation, scaling, translation and a low-frequency
// displacement field, all bounded by the jitter amplitude.
struct Warp {
    double cos_a = 1.0, sin_a = 0.0, scale = 1.0, tx = 0.0, ty = 0.0;
    double amplitude = 0.0, phase_x = 0.0, phase_y = 0.0;
    static constexpr double wave = 2.0 * std::numbers::pi / 160.0;

    static Warp sample(double jitter, Rng& rng)
    {
        Warp w;
        const double angle = uniform(rng, -1.0, 1.0) * 0.02 * jitter;
        w.cos_a = std::cos(angle);
        w.sin_a = std::sin(angle);
        w.scale = 1.0 + uniform(rng, -1.0, 1.0) * 0.02 * jitter;
        w.tx = uniform(rng, -1.0, 1.0) * jitter;
        w.ty = uniform(rng, -1.0, 1.0) * jitter;
        w.amplitude = uniform(rng, 0.0, 1.0) * jitter;
        w.phase_x = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        w.phase_y = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        return w;
    }

    Point2 operator()(Point2 p) const
    {
        const double x = scale * (cos_a * p.x - sin_a * p.y) + tx;
        const double y = scale * (sin_a * p.x + cos_a * p.y) + ty;
        return {x + amplitude * std::sin(wave * y + phase_x), y + amplitude * std::sin(wave * x + phase_y)};
    }
};

inline double project_onto(const ArcLengthPath& path, Point2 p)
{
    const auto& pts = path.points();
    double best = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const Point2 a = pts[i], b = pts[i + 1];
        const double len = distance(a, b);
        double u = 0.0;
        if (len > 0.0)
            u = std::clamp(((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / (len * len), 0.0, 1.0);
        const double d = distance(p, a + u * (b - a));
        if (d < best) {
            best = d;
            best_s = s + u * len;
        }
        s += len;
    }
    return best_s;
}

struct RoutePath {
    ArcLengthPath path;
    double start_lo = 0.0, start_hi = 0.0; // admissible start arc lengths
    double end_lo = 0.0, end_hi = 0.0;     // admissible end arc lengths
};

inline RoutePath build_route_path(const TopologyGraph& g, const RouteTemplate& r, double margin = 3.0)
{
    Polyline pts;
    auto append = [&](Point2 p) {
        if (pts.empty() || !(pts.back() == p))
            pts.push_back(p);
    };
    double first_region_end = 0.0;
    double last_region_begin = 0.0;
    for (std::size_t li = 0; li < r.legs.size(); ++li) {
        const RouteLeg& leg = r.legs[li];
        const ArcLengthPath own(g.lane(leg.lane));
        const double before = ArcLengthPath(pts).length();
        if (!leg.merge_into) {
            for (const auto& p : own.points())
                append(p);
            if (li == 0)
                first_region_end = ArcLengthPath(pts).length();
            last_region_begin = before;
            continue;
        }
        const ArcLengthPath target(g.lane(*leg.merge_into));
        const double s_begin = leg.blend_begin * own.length();
        const double s_end = leg.blend_end * own.length();
        for (double s = 0.0; s <= s_end + 1e-9; s += 1.0) {
            const Point2 p = own.at(s);
            const Point2 q = target.at(project_onto(target, p));
            double w = std::clamp((s - s_begin) / (s_end - s_begin), 0.0, 1.0);
            w = w * w * (3.0 - 2.0 * w);
            append((1.0 - w) * p + w * q);
        }
        if (li == 0)
            first_region_end = before + s_begin;
        const double t_from = project_onto(target, own.at(s_end));
        last_region_begin = ArcLengthPath(pts).length();
        for (double s = t_from + 1.0; s < target.length(); s += 1.0)
            append(target.at(s));
        append(target.at(target.length()));
    }
    RoutePath out;
    out.path = ArcLengthPath(std::move(pts));
    out.start_lo = margin;
    out.start_hi = first_region_end - margin;
    out.end_lo = last_region_begin + margin;
    out.end_hi = out.path.length() - margin;
    return out;
}

// Distance travelled after time t with initial speed v0 and acceleration a,
// never reversing.
inline double travelled(double v0, double a, double t)
{
    if (a < 0.0 && v0 + a * t < 0.0) {
        const double stop = -v0 / a;
        return v0 * stop + 0.5 * a * stop * stop;
    }
    return v0 * t + 0.5 * a * t * t;
}

inline void draw_polyline(std::vector<double>& nearest, const InfrastructureImage& frame, const Polyline& line)
{
    const int n = frame.size();
    const double mpp = frame.meters_per_pixel();
    const double reach = kHalfLane + mpp;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const Point2 a = line[i], b = line[i + 1];
        const auto [ca, ra] = frame.world_to_grid(a);
        const auto [cb, rb] = frame.world_to_grid(b);
        const double pad = reach / mpp + 1.0;
        const int c0 = std::max(0, static_cast<int>(std::floor(std::min(ca, cb) - pad)));
        const int c1 = std::min(n - 1, static_cast<int>(std::ceil(std::max(ca, cb) + pad)));
        const int r0 = std::max(0, static_cast<int>(std::floor(std::min(ra, rb) - pad)));
        const int r1 = std::min(n - 1, static_cast<int>(std::ceil(std::max(ra, rb) + pad)));
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) {
                double& d = nearest[static_cast<std::size_t>(r) * n + c];
                d = std::min(d, point_segment_distance(frame.pixel_center(r, c), a, b));
            }
    }
}

// Lanes render at full intensity within half a lane width and fade out over
// one pixel beyond it.
inline InfrastructureImage render(const std::vector<Polyline>& lanes, int size, double mpp)
{
    const InfrastructureImage frame = InfrastructureImage::blank(size, mpp);
    std::vector<double> nearest(static_cast<std::size_t>(size) * size, std::numeric_limits<double>::infinity());
    for (const auto& lane : lanes)
        draw_polyline(nearest, frame, lane);
    std::vector<float> pixels(nearest.size());
    for (std::size_t i = 0; i < nearest.size(); ++i) {
        const double v = std::clamp(1.0 - std::max(0.0, nearest[i] - kHalfLane) / mpp, 0.0, 1.0);
        pixels[i] = static_cast<float>(v);
    }
    return {size, mpp, std::move(pixels)};
}

inline std::vector<Polyline> clutter_roads(int count, double extent, Rng& rng)
{
    std::vector<Polyline> roads;
    for (int i = 0; i < count; ++i) {
        const Point2 centre{uniform(rng, -0.45, 0.45) * extent, uniform(rng, -0.45, 0.45) * extent};
        const Point2 dir = unit(uniform(rng, 0.0, std::numbers::pi));
        const Point2 side = right_of(dir);
        for (double lane_offset : {-kHalfLane, kHalfLane}) {
            const Point2 c = centre + lane_offset * side;
            roads.push_back(line(c - extent * dir, c + extent * dir));
        }
    }
    return roads;
}

inline Scenario generate_one(const ScenarioTemplate& tpl, std::size_t route_index, const GeneratorConfig& cfg,
                             Rng& rng)
{
    const double mpp = cfg.extent / cfg.image_size;
    const RouteTemplate& rt = tpl.routes[route_index];
    const auto expected = rt.expected_labels(tpl.graph.vertex_count());
    const int samples = static_cast<int>(std::lround(cfg.duration / cfg.time_step)) + 1;

    for (int attempt = 0; attempt < 64; ++attempt) {
        const Warp warp = Warp::sample(cfg.jitter, rng);
        std::vector<Polyline> lanes;
        for (const auto& lane : tpl.graph.lanes()) {
            Polyline warped;
            for (const auto& p : lane)
                warped.push_back(warp(p));
            lanes.push_back(std::move(warped));
        }
        TopologyGraph graph(lanes, tpl.graph.edges());
        const RoutePath rp = build_route_path(graph, rt);

        // Speed profile and start offset such that the trajectory starts in
        // the first route lane and ends in the last one.
        std::optional<std::pair<double, double>> motion; // (v0, a)
        double start = 0.0;
        for (int draw = 0; draw < 256 && !motion; ++draw) {
            const SpeedProfile& prof = cfg.speed_profiles[uniform_index(rng, cfg.speed_profiles.size())];
            const double v0 = uniform(rng, prof.speed_min, prof.speed_max) * tpl.speed_scale;
            const double a = uniform(rng, prof.accel_min, prof.accel_max) * tpl.speed_scale;
            const double dist = travelled(v0, a, cfg.duration);
            const double lo = std::max(rp.start_lo, rp.end_lo - dist);
            const double hi = std::min(rp.start_hi, rp.end_hi - dist);
            if (lo <= hi) {
                motion = std::make_pair(v0, a);
                start = uniform(rng, lo, hi);
            }
        }
        if (!motion)
            continue;

        std::vector<TrajectoryPoint> pts;
        for (int k = 0; k < samples; ++k) {
            const double t = k * cfg.time_step;
            const Point2 p = rp.path.at(start + travelled(motion->first, motion->second, t));
            pts.push_back({static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(t)});
        }
        Trajectory traj(std::move(pts));

        const double half = 0.5 * cfg.extent;
        const bool in_frame = std::all_of(traj.points().begin(), traj.points().end(), [&](const TrajectoryPoint& p) {
            return std::abs(p.x) < half - mpp && std::abs(p.y) < half - mpp;
        });
        if (!in_frame)
            continue;
        RouteLabeling labels;
        try {
            labels = derive_route_labeling(graph, traj);
        } catch (const Error&) {
            continue;
        }
        if (labels.labels() != expected)
            continue;

        const int clutter = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(cfg.max_clutter_roads) + 1));
        std::vector<Polyline> drawn = lanes;
        for (auto& road : clutter_roads(clutter, cfg.extent, rng))
            drawn.push_back(std::move(road));
        InfrastructureImage image = render(drawn, cfg.image_size, mpp);
        return {std::move(image), std::move(traj), std::move(graph), std::move(labels), tpl.category};
    }
    throw Error("generator could not realize route '" + rt.name + "' of template " +
                std::string(category_name(tpl.category)));
}

} // namespace synth_detail

/// Deterministic synthetic dataset: for every selected template,
/// `scenarios_per_template` scenarios per legal route, interleaved by route.
inline Dataset generate(const GeneratorConfig& cfg)
{
    cfg.validate();
    std::vector<ScenarioTemplate> selected;
    for (Category c : cfg.templates)
        if (std::none_of(selected.begin(), selected.end(), [&](const auto& t) { return t.category == c; }))
            selected.push_back(find_template(c));

    Dataset d;
    for (std::size_t ti = 0; ti < selected.size(); ++ti) {
        const auto& tpl = selected[ti];
        const std::size_t count = static_cast<std::size_t>(cfg.scenarios_per_template) * tpl.routes.size();
        for (std::size_t i = 0; i < count; ++i) {
            Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(tpl.category), i}));
            d.entries.push_back(synth_detail::generate_one(tpl, i % tpl.routes.size(), cfg, rng));
        }
    }
    d.groups = compute_groups(d.entries);
    return d;
}

} // namespace scenemetric
