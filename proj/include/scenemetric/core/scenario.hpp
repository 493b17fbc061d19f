#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scenemetric/core/error.hpp"
#include "scenemetric/core/geometry.hpp"

namespace scenemetric {

// ---------------------------------------------------------------------------
// Categories
// ---------------------------------------------------------------------------

enum class Category : std::uint8_t {
    SingleLane,
    MultiLane,
    Intersection,
    IntersectionEntering,
    Roundabout,
    RoundaboutEntering,
    Highway,
    HighwayEntering,
};

inline constexpr std::array<Category, 8> kAllCategories = {
    Category::SingleLane,   Category::MultiLane,          Category::Intersection, Category::IntersectionEntering,
    Category::Roundabout,   Category::RoundaboutEntering, Category::Highway,      Category::HighwayEntering,
};

inline std::string_view category_name(Category c)
{
    switch (c) {
    case Category::SingleLane: return "single-lane";
    case Category::MultiLane: return "multi-lane";
    case Category::Intersection: return "intersection";
    case Category::IntersectionEntering: return "intersection-entering";
    case Category::Roundabout: return "roundabout";
    case Category::RoundaboutEntering: return "roundabout-entering";
    case Category::Highway: return "highway";
    case Category::HighwayEntering: return "highway-entering";
    }
    return "unknown";
}

inline Category parse_category(std::string_view name)
{
    for (Category c : kAllCategories)
        if (category_name(c) == name)
            return c;
    throw Error("unknown category '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Infrastructure image
// ---------------------------------------------------------------------------

/// Square grayscale birds-eye raster centred on the world origin. Row 0 is the
/// northern edge, column 0 the western edge. Pixels are kept in 32-bit
/// precision so that datasets round-trip bit-exactly.
class InfrastructureImage {
public:
    InfrastructureImage() = default;

    InfrastructureImage(int size, double meters_per_pixel, std::vector<float> pixels)
        : size_(size), meters_per_pixel_(meters_per_pixel), pixels_(std::move(pixels))
    {
        require(size_ >= 8, "image size must be at least 8");
        require(meters_per_pixel_ > 0.0 && std::isfinite(meters_per_pixel_), "meters_per_pixel must be positive");
        require(pixels_.size() == static_cast<std::size_t>(size_) * static_cast<std::size_t>(size_),
                "shape mismatch: expected " + std::to_string(size_ * size_) + " pixels, got " +
                    std::to_string(pixels_.size()));
        for (float v : pixels_)
            require(v >= 0.0f && v <= 1.0f, "pixel intensity outside [0,1]");
    }

    static InfrastructureImage blank(int size, double meters_per_pixel)
    {
        return {size, meters_per_pixel, std::vector<float>(static_cast<std::size_t>(size) * size, 0.0f)};
    }

    int size() const { return size_; }
    double meters_per_pixel() const { return meters_per_pixel_; }
    double extent() const { return size_ * meters_per_pixel_; }
    const std::vector<float>& pixels() const { return pixels_; }
    float at(int row, int col) const { return pixels_[static_cast<std::size_t>(row) * size_ + col]; }

    Point2 pixel_center(int row, int col) const
    {
        const double half = 0.5 * extent();
        return {-half + (col + 0.5) * meters_per_pixel_, half - (row + 0.5) * meters_per_pixel_};
    }

    /// Continuous pixel coordinates (column, row) of a world point.
    std::pair<double, double> world_to_grid(Point2 p) const
    {
        const double half = 0.5 * extent();
        return {(p.x + half) / meters_per_pixel_, (half - p.y) / meters_per_pixel_};
    }

    friend bool operator==(const InfrastructureImage&, const InfrastructureImage&) = default;

private:
    int size_ = 0;
    double meters_per_pixel_ = 1.0;
    std::vector<float> pixels_;
};

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

struct TrajectoryPoint {
    float x = 0.0f;
    float y = 0.0f;
    float t = 0.0f;

    friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

class Trajectory {
public:
    Trajectory() = default;

    explicit Trajectory(std::vector<TrajectoryPoint> points) : points_(std::move(points))
    {
        require(points_.size() >= 2, "trajectory too short: need at least 2 points");
        for (std::size_t i = 1; i < points_.size(); ++i)
            require(points_[i].t > points_[i - 1].t, "non-monotonic time at point " + std::to_string(i));
        for (const auto& p : points_)
            require(std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.t), "non-finite trajectory point");
    }

    std::size_t size() const { return points_.size(); }
    const std::vector<TrajectoryPoint>& points() const { return points_; }
    const TrajectoryPoint& operator[](std::size_t i) const { return points_[i]; }
    Point2 position(std::size_t i) const { return {points_[i].x, points_[i].y}; }
    double duration() const { return points_.back().t - points_.front().t; }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;

private:
    std::vector<TrajectoryPoint> points_;
};

// ---------------------------------------------------------------------------
// Topology graph and route labeling
// ---------------------------------------------------------------------------

enum class EdgeKind : std::uint8_t { Successor = 0, Neighbor = 1 };

inline std::string_view edge_kind_name(EdgeKind k) { return k == EdgeKind::Successor ? "successor" : "neighbor"; }

inline EdgeKind parse_edge_kind(std::string_view name)
{
    if (name == "successor")
        return EdgeKind::Successor;
    if (name == "neighbor")
        return EdgeKind::Neighbor;
    throw Error("unknown edge kind '" + std::string(name) + "'");
}

struct Edge {
    std::size_t from = 0;
    std::size_t to = 0;
    EdgeKind kind = EdgeKind::Successor;

    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Lane-piece graph. Vertex ids are their indices; every vertex carries a
/// reference polyline in meters (possibly empty for abstract graphs).
class TopologyGraph {
public:
    TopologyGraph() = default;

    TopologyGraph(std::vector<Polyline> lanes, std::vector<Edge> edges)
        : lanes_(std::move(lanes)), edges_(std::move(edges))
    {
        require(!lanes_.empty(), "graph must have at least one vertex");
        const std::size_t n = lanes_.size();
        bits_.assign(n * n, 0);
        for (const Edge& e : edges_) {
            require(e.from < n && e.to < n, "edge endpoint out of range");
            require(e.from != e.to, "self-loop on vertex " + std::to_string(e.from));
            std::uint8_t& cell = bits_[e.from * n + e.to];
            const std::uint8_t bit = kind_bit(e.kind);
            require((cell & bit) == 0, "duplicate edge " + std::to_string(e.from) + "->" + std::to_string(e.to));
            cell |= bit;
        }
    }

    /// Abstract graph without geometry.
    static TopologyGraph abstract(std::size_t vertex_count, std::vector<Edge> edges)
    {
        return {std::vector<Polyline>(vertex_count), std::move(edges)};
    }

    std::size_t vertex_count() const { return lanes_.size(); }
    const std::vector<Polyline>& lanes() const { return lanes_; }
    const Polyline& lane(std::size_t v) const { return lanes_[v]; }
    const std::vector<Edge>& edges() const { return edges_; }

    /// Bitmask of edge kinds from u to v (bit 0 successor, bit 1 neighbor).
    std::uint8_t edge_bits(std::size_t u, std::size_t v) const { return bits_[u * lanes_.size() + v]; }

    static constexpr std::uint8_t kind_bit(EdgeKind k) { return k == EdgeKind::Successor ? 1 : 2; }

    friend bool operator==(const TopologyGraph& a, const TopologyGraph& b)
    {
        return a.lanes_ == b.lanes_ && a.edges_ == b.edges_;
    }

private:
    std::vector<Polyline> lanes_;
    std::vector<Edge> edges_;
    std::vector<std::uint8_t> bits_;
};

/// Per-vertex route labels: 2 start lane, 1 traversed, 0 untouched.
class RouteLabeling {
public:
    RouteLabeling() = default;

    explicit RouteLabeling(std::vector<std::uint8_t> labels) : labels_(std::move(labels))
    {
        bool has_start = false;
        for (auto l : labels_) {
            require(l <= 2, "route label outside {0,1,2}");
            has_start = has_start || l == 2;
        }
        require(has_start, "route labeling needs at least one start vertex (label 2)");
    }

    std::size_t size() const { return labels_.size(); }
    const std::vector<std::uint8_t>& labels() const { return labels_; }
    std::uint8_t operator[](std::size_t i) const { return labels_[i]; }

    friend bool operator==(const RouteLabeling&, const RouteLabeling&) = default;

private:
    std::vector<std::uint8_t> labels_;
};

// ---------------------------------------------------------------------------
// Point to lane assignment and route derivation
// ---------------------------------------------------------------------------

inline constexpr double kDefaultOffRoadThreshold = 5.0;

/// Vertex whose reference polyline is nearest to (x, y); ties go to the lowest
/// id. Throws "point off-road" when the nearest lane is farther than
/// `threshold` meters.
inline std::size_t map_point_to_vertex(const TopologyGraph& graph, double x, double y,
                                       double threshold = kDefaultOffRoadThreshold)
{
    std::size_t best = 0;
    double best_distance = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < graph.vertex_count(); ++v) {
        const double d = point_polyline_distance({x, y}, graph.lane(v));
        if (d < best_distance) {
            best_distance = d;
            best = v;
        }
    }
    if (!(best_distance <= threshold))
        throw Error("point off-road: (" + std::to_string(x) + ", " + std::to_string(y) + ") is " +
                    std::to_string(best_distance) + " m from the nearest lane");
    return best;
}

inline RouteLabeling derive_route_labeling(const TopologyGraph& graph, const Trajectory& traj,
                                           double threshold = kDefaultOffRoadThreshold)
{
    std::vector<std::uint8_t> labels(graph.vertex_count(), 0);
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const std::size_t v = map_point_to_vertex(graph, traj[i].x, traj[i].y, threshold);
        if (i == 0)
            labels[v] = 2;
        else if (labels[v] == 0)
            labels[v] = 1;
    }
    return RouteLabeling(std::move(labels));
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

namespace detail {

// Label-2 vertices must form one weakly connected region.
inline bool start_region_connected(const TopologyGraph& g, const RouteLabeling& r)
{
    const std::size_t n = g.vertex_count();
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack;
    for (std::size_t v = 0; v < n; ++v)
        if (r[v] == 2) {
            stack.push_back(v);
            seen[v] = 1;
            break;
        }
    while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        for (std::size_t w = 0; w < n; ++w)
            if (!seen[w] && r[w] == 2 && (g.edge_bits(u, w) || g.edge_bits(w, u))) {
                seen[w] = 1;
                stack.push_back(w);
            }
    }
    for (std::size_t v = 0; v < n; ++v)
        if (r[v] == 2 && !seen[v])
            return false;
    return true;
}

} // namespace detail

struct Scenario {
    InfrastructureImage image;
    Trajectory trajectory;
    TopologyGraph graph;
    RouteLabeling route;
    Category category = Category::SingleLane;

    Scenario() = default;

    Scenario(InfrastructureImage image_, Trajectory trajectory_, TopologyGraph graph_, RouteLabeling route_,
             Category category_)
        : image(std::move(image_)), trajectory(std::move(trajectory_)), graph(std::move(graph_)),
          route(std::move(route_)), category(category_)
    {
        require(route.size() == graph.vertex_count(), "route labeling length differs from graph vertex count");
        require(detail::start_region_connected(graph, route), "route start region is not connected");
        const std::size_t start = map_point_to_vertex(graph, trajectory[0].x, trajectory[0].y,
                                                      std::numeric_limits<double>::infinity());
        require(route[start] == 2, "trajectory start does not map to a start-labeled vertex");
    }

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

// ---------------------------------------------------------------------------
// Action sequence
// ---------------------------------------------------------------------------

struct ActionRow {
    double a_lat = 0.0;
    double a_lon = 0.0;
    double speed = 0.0;
};

struct ActionSequence {
    std::vector<ActionRow> rows;
    std::vector<double> headings;

    std::size_t size() const { return rows.size(); }
};

namespace detail {

// Derivative of a sampled series: central differences inside, one-sided at the ends.
inline std::vector<double> gradient(const std::vector<double>& v, const std::vector<double>& t)
{
    const std::size_t n = v.size();
    std::vector<double> out(n, 0.0);
    if (n < 2)
        return out;
    out[0] = (v[1] - v[0]) / (t[1] - t[0]);
    out[n - 1] = (v[n - 1] - v[n - 2]) / (t[n - 1] - t[n - 2]);
    for (std::size_t i = 1; i + 1 < n; ++i)
        out[i] = (v[i + 1] - v[i - 1]) / (t[i + 1] - t[i - 1]);
    return out;
}

} // namespace detail

/// Lateral/longitudinal acceleration and speed per interior timestamp.
/// Velocity uses central differences over the raw samples (trimming both
/// endpoints); speed and heading rate are then differentiated along the
/// interior series.
inline ActionSequence derive_action_sequence(const Trajectory& traj)
{
    const auto& pts = traj.points();
    if (pts.size() < 3)
        throw Error("trajectory too short: need at least 3 points, got " + std::to_string(pts.size()));
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (!(pts[i].t > pts[i - 1].t))
            throw Error("non-monotonic time at point " + std::to_string(i));

    const std::size_t m = pts.size() - 2;
    std::vector<double> speed(m), heading(m), time(m);
    for (std::size_t k = 0; k < m; ++k) {
        const auto& prev = pts[k];
        const auto& next = pts[k + 2];
        const double dt = static_cast<double>(next.t) - static_cast<double>(prev.t);
        const double vx = (static_cast<double>(next.x) - prev.x) / dt;
        const double vy = (static_cast<double>(next.y) - prev.y) / dt;
        speed[k] = std::hypot(vx, vy);
        heading[k] = std::atan2(vy, vx);
        time[k] = pts[k + 1].t;
    }

    const std::vector<double> a_lon = detail::gradient(speed, time);

    // Heading rate from wrapped heading increments.
    std::vector<double> yaw_rate(m, 0.0);
    if (m >= 2) {
        yaw_rate[0] = wrap_angle(heading[1] - heading[0]) / (time[1] - time[0]);
        yaw_rate[m - 1] = wrap_angle(heading[m - 1] - heading[m - 2]) / (time[m - 1] - time[m - 2]);
        for (std::size_t k = 1; k + 1 < m; ++k)
            yaw_rate[k] = wrap_angle(heading[k + 1] - heading[k - 1]) / (time[k + 1] - time[k - 1]);
    }

    ActionSequence out;
    out.rows.resize(m);
    out.headings = heading;
    for (std::size_t k = 0; k < m; ++k)
        out.rows[k] = {speed[k] * yaw_rate[k], a_lon[k], speed[k]};
    return out;
}

// ---------------------------------------------------------------------------
// Reconstruction target
// ---------------------------------------------------------------------------

/// Two-channel target, channel-major: index c*S*S + row*S + col.
struct ReconstructionTarget {
    int size = 0;
    std::vector<double> values;

    double at(int channel, int row, int col) const
    {
        return values[(static_cast<std::size_t>(channel) * size + row) * size + col];
    }
};

namespace detail {

/// Cells crossed by a segment in continuous grid coordinates (column, row),
/// enumerated by stepping through cell boundaries in order.
template <typename Visit>
void traverse_cells(double c0, double r0, double c1, double r1, Visit&& visit)
{
    int col = static_cast<int>(std::floor(c0));
    int row = static_cast<int>(std::floor(r0));
    const int end_col = static_cast<int>(std::floor(c1));
    const int end_row = static_cast<int>(std::floor(r1));
    const double dc = c1 - c0;
    const double dr = r1 - r0;
    const int step_c = dc > 0 ? 1 : (dc < 0 ? -1 : 0);
    const int step_r = dr > 0 ? 1 : (dr < 0 ? -1 : 0);
    constexpr double inf = std::numeric_limits<double>::infinity();
    const double delta_c = step_c != 0 ? std::abs(1.0 / dc) : inf;
    const double delta_r = step_r != 0 ? std::abs(1.0 / dr) : inf;
    double next_c = step_c > 0 ? (col + 1 - c0) / dc : (step_c < 0 ? (c0 - col) / -dc : inf);
    double next_r = step_r > 0 ? (row + 1 - r0) / dr : (step_r < 0 ? (r0 - row) / -dr : inf);
    visit(row, col);
    const int max_steps = std::abs(end_col - col) + std::abs(end_row - row);
    for (int i = 0; i < max_steps; ++i) {
        if (next_c < next_r) {
            col += step_c;
            next_c += delta_c;
        } else {
            row += step_r;
            next_r += delta_r;
        }
        visit(row, col);
    }
}

} // namespace detail

inline constexpr double kDefaultGraphMaskHalfWidthPx = 1.0;

/// Channel 0 keeps image pixels whose centre lies within `mask_half_width_px`
/// pixels of a graph lane; channel 1 marks every cell the trajectory polyline
/// passes through.
inline ReconstructionTarget build_reconstruction_target(const Scenario& s,
                                                        double mask_half_width_px = kDefaultGraphMaskHalfWidthPx)
{
    const auto& img = s.image;
    const int n = img.size();
    ReconstructionTarget target{n, std::vector<double>(2 * static_cast<std::size_t>(n) * n, 0.0)};
    const double radius = mask_half_width_px * img.meters_per_pixel();

    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const float v = img.at(r, c);
            if (v == 0.0f)
                continue;
            const Point2 centre = img.pixel_center(r, c);
            for (const auto& lane : s.graph.lanes())
                if (point_polyline_distance(centre, lane) <= radius) {
                    target.values[static_cast<std::size_t>(r) * n + c] = v;
                    break;
                }
        }

    const std::size_t offset = static_cast<std::size_t>(n) * n;
    const auto& traj = s.trajectory;
    std::vector<std::pair<double, double>> grid(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        grid[i] = img.world_to_grid(traj.position(i));
        const auto [gc, gr] = grid[i];
        if (!(gc >= 0.0 && gc < n && gr >= 0.0 && gr < n))
            throw Error("trajectory out of frame at point " + std::to_string(i));
    }
    auto mark = [&](int row, int col) {
        if (row >= 0 && row < n && col >= 0 && col < n)
            target.values[offset + static_cast<std::size_t>(row) * n + col] = 1.0;
    };
    if (grid.size() == 1)
        mark(static_cast<int>(grid[0].second), static_cast<int>(grid[0].first));
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
        detail::traverse_cells(grid[i].first, grid[i].second, grid[i + 1].first, grid[i + 1].second, mark);
    return target;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

enum class GroupLevel { C, G, R };

inline std::string_view group_level_name(GroupLevel l)
{
    switch (l) {
    case GroupLevel::C: return "C";
    case GroupLevel::G: return "G";
    case GroupLevel::R: return "R";
    }
    return "?";
}

/// Dense group ids per scenario at the category / graph-class / route-class level.
struct GroupIndex {
    std::vector<int> category;
    std::vector<int> graph;
    std::vector<int> route;

    const std::vector<int>& level(GroupLevel l) const
    {
        switch (l) {
        case GroupLevel::C: return category;
        case GroupLevel::G: return graph;
        case GroupLevel::R: return route;
        }
        return category;
    }

    friend bool operator==(const GroupIndex&, const GroupIndex&) = default;
};

inline int group_count(const std::vector<int>& ids)
{
    int count = 0;
    for (int id : ids)
        count = std::max(count, id + 1);
    return count;
}

/// Maps arbitrary keys to dense ids in order of first appearance.
template <typename Key>
std::vector<int> dense_ids(const std::vector<Key>& keys)
{
    std::vector<int> ids(keys.size());
    std::vector<Key> seen;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        auto it = std::find(seen.begin(), seen.end(), keys[i]);
        if (it == seen.end()) {
            ids[i] = static_cast<int>(seen.size());
            seen.push_back(keys[i]);
        } else {
            ids[i] = static_cast<int>(it - seen.begin());
        }
    }
    return ids;
}

struct Dataset {
    std::vector<Scenario> entries;
    GroupIndex groups;

    std::size_t size() const { return entries.size(); }
    const Scenario& operator[](std::size_t i) const { return entries[i]; }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

} // namespace scenemetric
