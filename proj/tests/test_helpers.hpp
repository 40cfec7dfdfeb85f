#pragma once

#include <catch2/catch_amalgamated.hpp>

#include "triwave/mesh.hpp"

namespace twtest {

inline constexpr double um = 1e-6;

// Anchor block with a straight spring of the given width attached to its
// right side; the canonical fixture for boundary/offset/width tests.
inline triwave::CrossSection2D anchored_strip(double spring_len = 12 * um,
                                              double spring_width = 1.5 * um) {
    using triwave::Vec2;
    triwave::CrossSection2D cs;
    double ah = 3 * um; // anchor height
    triwave::add_rect(cs, Vec2(0, 0), Vec2(2 * um, ah), "anchor");
    double y0 = 0.5 * (ah - spring_width);
    triwave::add_rect(cs, Vec2(2 * um, y0), Vec2(2 * um + spring_len, y0 + spring_width), "spring");
    return cs;
}

// Quarter-symmetric cross: center mass with four arms.
inline triwave::CrossSection2D cross_section() {
    using triwave::Vec2;
    triwave::CrossSection2D cs;
    triwave::add_rect(cs, Vec2(-3 * um, -3 * um), Vec2(3 * um, 3 * um), "anchor");
    triwave::add_rect(cs, Vec2(-9 * um, -1 * um), Vec2(-3 * um, 1 * um), "spring");
    triwave::add_rect(cs, Vec2(3 * um, -1 * um), Vec2(9 * um, 1 * um), "spring");
    triwave::add_rect(cs, Vec2(-1 * um, 3 * um), Vec2(1 * um, 9 * um), "spring");
    triwave::add_rect(cs, Vec2(-1 * um, -9 * um), Vec2(1 * um, -3 * um), "spring");
    return cs;
}

// Measures the y-extent of the spring of anchored_strip() at the column of
// boundary nodes closest to x.
inline std::pair<double, double> strip_extent_at(const triwave::ExtrudedMesh& mesh, double x,
                                                 double tol) {
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < mesh.nodes_per_plane; ++i) {
        if (!mesh.exterior2d[i]) continue;
        if (std::abs(mesh.nodes[i].x() - x) > tol) continue;
        lo = std::min(lo, mesh.nodes[i].y());
        hi = std::max(hi, mesh.nodes[i].y());
    }
    return {lo, hi};
}

} // namespace twtest
