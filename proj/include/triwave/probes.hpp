#pragma once

#include "triwave/mesh.hpp"
#include "triwave/morph.hpp"

namespace triwave {

// Manufacturability probes. A site sits on a movable boundary node and casts
// a ray along its frozen design normal: inward for the structure width,
// outward for the gap to the next structure. Sites and directions never
// change during optimization; only the node positions feeding the ray
// origins and the hit segments do, so the measured distance is an exact
// piecewise-linear function of the design.
struct Probe {
    int node2d = -1;
    Vec2 direction = Vec2::Zero();
    bool is_width = true;
};

struct ProbeSet {
    std::vector<Probe> probes;
    double width_horizon = 0;
    double gap_horizon = 0;
};

struct ProbeHit {
    bool valid = false;
    double distance = 0;
    int seg_a = -1, seg_b = -1; // boundary nodes of the hit segment
    double s = 0;               // hit parameter along the segment a->b
};

inline ProbeSet build_probes(const ExtrudedMesh& mesh,
                             const std::set<std::string>& movable_regions, double min_width,
                             double min_gap) {
    ProbeSet set;
    set.width_horizon = 10.0 * min_width;
    set.gap_horizon = 10.0 * std::max(min_gap, min_width);
    auto movable = movable_nodes2d(mesh, movable_regions);
    for (int i = 0; i < mesh.nodes_per_plane; ++i) {
        if (!mesh.exterior2d[i] || !movable[i]) continue;
        const Vec2& n = mesh.boundary_normal[i];
        require(n.norm() > 0.5, "probes: exterior node ", i, " has no normal");
        set.probes.push_back({i, -n, true});
        set.probes.push_back({i, n, false});
    }
    return set;
}

// Nearest boundary intersection of the probe ray on the current geometry.
inline ProbeHit cast_probe(const ExtrudedMesh& mesh, const Probe& probe, double horizon) {
    ProbeHit best;
    best.distance = horizon;
    Vec2 origin = mesh.pos2d(probe.node2d);
    for (const auto& loop : mesh.boundary_loops) {
        int n = static_cast<int>(loop.size());
        for (int k = 0; k < n; ++k) {
            int a = loop[k], b = loop[(k + 1) % n];
            if (a == probe.node2d || b == probe.node2d) continue;
            Vec2 pa = mesh.pos2d(a), pb = mesh.pos2d(b);
            // origin + t dir = pa + s (pb - pa)
            double det = probe.direction.x() * (pa.y() - pb.y()) -
                         probe.direction.y() * (pa.x() - pb.x());
            if (std::abs(det) < 1e-30) continue; // parallel
            Vec2 rhs = pa - origin;
            double t = (rhs.x() * (pa.y() - pb.y()) - rhs.y() * (pa.x() - pb.x())) / det;
            double s = (probe.direction.x() * rhs.y() - probe.direction.y() * rhs.x()) / det;
            if (s < 0.0 || s > 1.0) continue;
            if (t <= 1e-15 || t >= best.distance) continue;
            best.valid = true;
            best.distance = t;
            best.seg_a = a;
            best.seg_b = b;
            best.s = s;
        }
    }
    return best;
}

struct ProbeMeasurement {
    int probe = -1;
    ProbeHit hit;
};

// All probe distances on the current geometry; unhit sites are reported as
// skipped (ray left the domain or nothing within the horizon).
inline std::vector<ProbeMeasurement> measure_probes(const ExtrudedMesh& mesh, const ProbeSet& set,
                                                    std::vector<int>* skipped = nullptr) {
    std::vector<ProbeMeasurement> out;
    for (std::size_t k = 0; k < set.probes.size(); ++k) {
        const Probe& probe = set.probes[k];
        double horizon = probe.is_width ? set.width_horizon : set.gap_horizon;
        ProbeHit hit = cast_probe(mesh, probe, horizon);
        if (!hit.valid) {
            if (skipped) skipped->push_back(static_cast<int>(k));
            continue;
        }
        out.push_back({static_cast<int>(k), hit});
    }
    return out;
}

// d(distance)/dp_j from the linear motion of the ray origin and the hit
// segment endpoints: with A = [dir | a - b],
//   dt = e1^T A^-1 ((1-s) da + s db - dx0).
inline double probe_distance_sensitivity(const ExtrudedMesh& mesh, const Probe& probe,
                                         const ProbeHit& hit, const Vec2& origin_velocity,
                                         const Vec2& a_velocity, const Vec2& b_velocity) {
    Vec2 pa = mesh.pos2d(hit.seg_a), pb = mesh.pos2d(hit.seg_b);
    Eigen::Matrix2d a_mat;
    a_mat.col(0) = probe.direction;
    a_mat.col(1) = pa - pb;
    Vec2 rhs = (1.0 - hit.s) * a_velocity + hit.s * b_velocity - origin_velocity;
    return (a_mat.inverse() * rhs)(0);
}

} // namespace triwave
