#pragma once

#include <cmath>

namespace vlcuav {

/// Ground-plane coordinate in metres.
struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

inline double squared_distance(Point2 a, Point2 b)
{
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return dx * dx + dy * dy;
}

inline double distance(Point2 a, Point2 b) { return std::sqrt(squared_distance(a, b)); }

} // namespace vlcuav
