#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "triwave/common.hpp"

namespace triwave {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// Planar cross-section to be extruded along z. Loops are simple polygons over
// the shared vertex list: counter-clockwise loops are material and carry a
// region tag, clockwise loops are holes cut out of the material.
struct CrossSection2D {
    std::vector<Vec2> vertices;

    struct Loop {
        std::vector<int> vertex_ids;
        std::string tag; // spring | anchor | electrode | mass (ignored for holes)
    };
    std::vector<Loop> loops;
};

// Twice the signed area of a loop (positive for counter-clockwise).
inline double loop_signed_area2(const CrossSection2D& cs, const CrossSection2D::Loop& loop) {
    double a2 = 0.0;
    const auto& ids = loop.vertex_ids;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const Vec2& p = cs.vertices[static_cast<std::size_t>(ids[i])];
        const Vec2& q = cs.vertices[static_cast<std::size_t>(ids[(i + 1) % ids.size()])];
        a2 += p.x() * q.y() - q.x() * p.y();
    }
    return a2;
}

inline bool loop_is_hole(const CrossSection2D& cs, const CrossSection2D::Loop& loop) {
    return loop_signed_area2(cs, loop) < 0.0;
}

// Even-odd point-in-polygon test for a single loop.
inline bool point_in_loop(const CrossSection2D& cs, const CrossSection2D::Loop& loop, const Vec2& p) {
    bool inside = false;
    const auto& ids = loop.vertex_ids;
    std::size_t n = ids.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = cs.vertices[static_cast<std::size_t>(ids[i])];
        const Vec2& b = cs.vertices[static_cast<std::size_t>(ids[j])];
        if ((a.y() > p.y()) != (b.y() > p.y())) {
            double x_cross = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
            if (p.x() < x_cross) inside = !inside;
        }
    }
    return inside;
}

inline bool segments_intersect_properly(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    auto cross = [](const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); };
    double d1 = cross(b - a, c - a);
    double d2 = cross(b - a, d - a);
    double d3 = cross(d - c, a - c);
    double d4 = cross(d - c, b - c);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

// Checks loop simplicity, orientation conventions and tag coverage.
// `min_area` rejects degenerate loops (reported by loop index).
inline void validate_section(const CrossSection2D& cs, double min_area) {
    require(!cs.loops.empty(), "cross-section has no loops");
    for (std::size_t li = 0; li < cs.loops.size(); ++li) {
        const auto& loop = cs.loops[li];
        require(loop.vertex_ids.size() >= 3, "loop ", li, " has fewer than 3 vertices");
        for (int id : loop.vertex_ids)
            require(id >= 0 && static_cast<std::size_t>(id) < cs.vertices.size(),
                    "loop ", li, " references invalid vertex ", id);
        double area = 0.5 * std::abs(loop_signed_area2(cs, loop));
        require(area >= min_area, "degenerate polygon ", li, " (area ", area, " below tolerance ",
                min_area, ")");
        if (!loop_is_hole(cs, loop))
            require(!loop.tag.empty(), "material loop ", li, " has no region tag");
        // simplicity: no proper intersection between non-adjacent edges
        const auto& ids = loop.vertex_ids;
        std::size_t n = ids.size();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                std::size_t i2 = (i + 1) % n, j2 = (j + 1) % n;
                if (i == j || i2 == j || j2 == i) continue;
                const Vec2& a = cs.vertices[static_cast<std::size_t>(ids[i])];
                const Vec2& b = cs.vertices[static_cast<std::size_t>(ids[i2])];
                const Vec2& c = cs.vertices[static_cast<std::size_t>(ids[j])];
                const Vec2& d = cs.vertices[static_cast<std::size_t>(ids[j2])];
                require(!segments_intersect_properly(a, b, c, d), "loop ", li,
                        " is self-intersecting between edges ", i, " and ", j);
            }
        }
    }
}

// True if p lies in material: inside some CCW loop and not inside any hole.
// Returns the tag of the last containing material loop via `tag`.
inline bool point_in_material(const CrossSection2D& cs, const Vec2& p, std::string* tag = nullptr) {
    bool in_material = false;
    for (const auto& loop : cs.loops) {
        if (loop_is_hole(cs, loop)) continue;
        if (point_in_loop(cs, loop, p)) {
            in_material = true;
            if (tag) *tag = loop.tag;
        }
    }
    if (!in_material) return false;
    for (const auto& loop : cs.loops) {
        if (!loop_is_hole(cs, loop)) continue;
        if (point_in_loop(cs, loop, p)) return false;
    }
    return true;
}

// Convenience builder: axis-aligned rectangle loop (CCW when tag material,
// CW when used as a hole).
inline void add_rect(CrossSection2D& cs, const Vec2& lo, const Vec2& hi, const std::string& tag,
                     bool hole = false) {
    int base = static_cast<int>(cs.vertices.size());
    cs.vertices.push_back({lo.x(), lo.y()});
    cs.vertices.push_back({hi.x(), lo.y()});
    cs.vertices.push_back({hi.x(), hi.y()});
    cs.vertices.push_back({lo.x(), hi.y()});
    CrossSection2D::Loop loop;
    if (hole)
        loop.vertex_ids = {base, base + 3, base + 2, base + 1};
    else
        loop.vertex_ids = {base, base + 1, base + 2, base + 3};
    loop.tag = tag;
    cs.loops.push_back(std::move(loop));
}

} // namespace triwave
