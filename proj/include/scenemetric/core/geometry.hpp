#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace scenemetric {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

using Polyline = std::vector<Point2>;

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double point_segment_distance(Point2 p, Point2 a, Point2 b)
{
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    if (len2 == 0.0)
        return distance(p, a);
    const double u = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
    return distance(p, Point2{a.x + u * dx, a.y + u * dy});
}

/// Distance to a polyline; +inf for an empty polyline.
inline double point_polyline_distance(Point2 p, const Polyline& line)
{
    if (line.empty())
        return std::numeric_limits<double>::infinity();
    if (line.size() == 1)
        return distance(p, line.front());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < line.size(); ++i)
        best = std::min(best, point_segment_distance(p, line[i], line[i + 1]));
    return best;
}

inline double polyline_length(const Polyline& line)
{
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < line.size(); ++i)
        total += distance(line[i], line[i + 1]);
    return total;
}

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a <= -std::numbers::pi)
        a += two_pi;
    else if (a > std::numbers::pi)
        a -= two_pi;
    return a;
}

/// Arc-length parameterized view of a polyline.
class ArcLengthPath {
public:
    ArcLengthPath() = default;
    explicit ArcLengthPath(Polyline points) : points_(std::move(points))
    {
        cumulative_.reserve(points_.size());
        double s = 0.0;
        for (std::size_t i = 0; i < points_.size(); ++i) {
            if (i > 0)
                s += distance(points_[i - 1], points_[i]);
            cumulative_.push_back(s);
        }
    }

    double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
    const Polyline& points() const { return points_; }

    Point2 at(double s) const
    {
        if (points_.empty())
            return {};
        if (s <= 0.0)
            return points_.front();
        if (s >= length())
            return points_.back();
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
        const std::size_t hi = static_cast<std::size_t>(it - cumulative_.begin());
        const std::size_t lo = hi - 1;
        const double span = cumulative_[hi] - cumulative_[lo];
        const double u = span > 0.0 ? (s - cumulative_[lo]) / span : 0.0;
        return {points_[lo].x + u * (points_[hi].x - points_[lo].x),
                points_[lo].y + u * (points_[hi].y - points_[lo].y)};
    }

private:
    Polyline points_;
    std::vector<double> cumulative_;
};

} // namespace scenemetric
