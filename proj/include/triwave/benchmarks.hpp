#pragma once

#include "triwave/mesh.hpp"

namespace triwave {
namespace benchmarks {

// Clamped-clamped rectangular beam: length along x, width along y, extruded
// to `thickness` along z. Both end faces are fully clamped (every node of the
// x = 0 and x = length planes), the textbook Euler-Bernoulli configuration.
inline ExtrudedMesh clamped_beam(double length, double width, double thickness, int layers,
                                 double edge) {
    CrossSection2D cs;
    // end slices tagged anchor so the mesh carries the fixture roles; the
    // clamp below overrides the default bottom-face rule
    add_rect(cs, Vec2(0, 0), Vec2(edge, width), "anchor");
    add_rect(cs, Vec2(edge, 0), Vec2(length - edge, width), "spring");
    add_rect(cs, Vec2(length - edge, 0), Vec2(length, width), "anchor");
    auto mesh = extrude(cs, thickness, layers, edge);

    std::vector<int> fixed;
    double tol = 1e-12 * length;
    for (int i = 0; i < static_cast<int>(mesh.nodes.size()); ++i) {
        double x = mesh.nodes[i].x();
        if (x < tol || x > length - tol) fixed.push_back(i);
    }
    mesh.fixed_nodes = fixed;
    return mesh;
}

// Spring clamped between two bottom-anchored blocks. The spring sits off the
// anchor midline and the anchors clamp only at the substrate, so the low
// modes mix in-plane, out-of-plane and torsional content and carry generic
// 3-wave couplings; the workhorse fixture for coupling and sensitivity tests.
inline ExtrudedMesh coupled_strip(int layers = 2, double edge = 0.25e-6) {
    const double um = 1e-6;
    CrossSection2D cs;
    add_rect(cs, Vec2(0, 0), Vec2(2 * um, 3 * um), "anchor");
    add_rect(cs, Vec2(2 * um, 1.0 * um), Vec2(14 * um, 2.5 * um), "spring");
    add_rect(cs, Vec2(7 * um, 1.0 * um), Vec2(9 * um, 2.5 * um), "electrode"); // sensing patch
    add_rect(cs, Vec2(14 * um, 0), Vec2(16 * um, 3 * um), "anchor");
    return extrude(cs, 1 * um, layers, edge);
}

// Fundamental clamped-clamped frequency in Hz from Euler-Bernoulli theory:
// f1 = (4.7300407...)^2 sqrt(E I / (rho A L^4)) / (2 pi).
inline double clamped_beam_analytic_f1(double e_mod, double density, double length,
                                       double width_bending, double width_other) {
    double second_moment = width_other * std::pow(width_bending, 3) / 12.0;
    double area = width_other * width_bending;
    double lam = 4.730040744862704; // first root of cos(x)cosh(x) = 1
    return lam * lam * std::sqrt(e_mod * second_moment / (density * area)) /
           (length * length * 2.0 * kPi);
}

} // namespace benchmarks
} // namespace triwave
