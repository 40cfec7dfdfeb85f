#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "triwave/geometry.hpp"
#include "triwave/hex8.hpp"

namespace triwave {

// Hexahedral mesh obtained by extruding a planar cross-section along z.
// Node ids are column-ordered: node = plane * nodes_per_plane + node2d with
// plane in [0, layers]. Element ids are layer-ordered the same way, so every
// xy-column of nodes and every stack of elements share a 2D index.
struct ExtrudedMesh {
    std::vector<Vec3> nodes;
    std::vector<std::array<int, 8>> elements;
    int layers = 0;
    int nodes_per_plane = 0;
    int cells_per_layer = 0;
    double thickness = 0.0;

    std::vector<std::array<int, 4>> cells2d;        // CCW quads of the cross-section
    std::vector<std::vector<int>> boundary_loops;   // 2D node loops, material on the left
    std::vector<char> exterior2d;                   // per 2D node
    std::vector<Vec2> boundary_normal;              // per 2D node, zero if interior
    std::vector<int> fixed_nodes;                   // sorted 3D node ids
    std::map<std::string, std::vector<int>> regions; // tag -> sorted element ids

    int planes() const { return layers + 1; }
    int node_id(int plane, int i2d) const { return plane * nodes_per_plane + i2d; }
    int node2d_of(int node) const { return node % nodes_per_plane; }
    int plane_of(int node) const { return node / nodes_per_plane; }
    int cell2d_of(int element) const { return element % cells_per_layer; }

    Vec2 pos2d(int node2d) const { return {nodes[node2d].x(), nodes[node2d].y()}; }

    std::vector<int> exterior_node_ids() const {
        std::vector<int> out;
        for (int i = 0; i < nodes_per_plane; ++i) {
            if (!exterior2d[i]) continue;
            for (int p = 0; p <= layers; ++p) out.push_back(node_id(p, i));
        }
        return out;
    }

    const std::string* region_of_element(int element) const {
        for (const auto& [tag, ids] : regions)
            if (std::binary_search(ids.begin(), ids.end(), element)) return &tag;
        return nullptr;
    }

    std::uint64_t content_hash() const {
        Fnv1a h;
        h.update(static_cast<std::int64_t>(nodes.size()));
        h.update(static_cast<std::int64_t>(elements.size()));
        for (const auto& p : nodes) {
            h.update(p.x());
            h.update(p.y());
            h.update(p.z());
        }
        for (const auto& e : elements)
            for (int n : e) h.update(static_cast<std::int64_t>(n));
        for (int n : fixed_nodes) h.update(static_cast<std::int64_t>(n));
        return h.digest();
    }
};

inline Eigen::Matrix<double, 8, 3> element_coords(const ExtrudedMesh& mesh, int element) {
    Eigen::Matrix<double, 8, 3> x;
    for (int a = 0; a < 8; ++a) x.row(a) = mesh.nodes[mesh.elements[element][a]].transpose();
    return x;
}

// Checks det(J) > 0 at every quadrature point; returns offending element ids.
inline std::vector<int> find_inverted_elements(const ExtrudedMesh& mesh) {
    std::vector<int> bad;
    Eigen::Matrix<double, 3, 8> dn;
    for (int e = 0; e < static_cast<int>(mesh.elements.size()); ++e) {
        auto coords = element_coords(mesh, e);
        for (const auto& xi : hex8::gauss_points()) {
            hex8::shape_gradients(xi, dn);
            if (hex8::jacobian(coords, dn).determinant() <= 0.0) {
                bad.push_back(e);
                break;
            }
        }
    }
    return bad;
}

inline void require_valid_elements(const ExtrudedMesh& mesh, const char* context) {
    auto bad = find_inverted_elements(mesh);
    if (!bad.empty()) {
        std::string ids;
        for (std::size_t i = 0; i < bad.size() && i < 10; ++i)
            ids += (i ? ", " : "") + std::to_string(bad[i]);
        fail(context, ": inverted element(s) [", ids, bad.size() > 10 ? ", ...]" : "]");
    }
}

namespace detail {

// Chains directed boundary edges (quad edges without a reverse partner) into
// loops with material on the left.
inline std::vector<std::vector<int>> trace_boundary_loops(
    const std::vector<std::array<int, 4>>& cells) {
    std::set<std::pair<int, int>> directed;
    for (const auto& c : cells)
        for (int k = 0; k < 4; ++k) directed.insert({c[k], c[(k + 1) % 4]});

    std::map<int, int> next; // boundary successor per node
    for (const auto& [a, b] : directed) {
        if (directed.count({b, a})) continue; // interior edge
        auto [it, inserted] = next.emplace(a, b);
        if (!inserted) fail("non-manifold cross-section boundary at node ", a);
    }

    std::vector<std::vector<int>> loops;
    std::set<int> visited;
    for (const auto& [start, first] : next) { // deterministic: ascending start node
        if (visited.count(start)) continue;
        std::vector<int> loop;
        int cur = start;
        do {
            loop.push_back(cur);
            visited.insert(cur);
            auto it = next.find(cur);
            require(it != next.end(), "open cross-section boundary at node ", cur);
            cur = it->second;
        } while (cur != start);
        loops.push_back(std::move(loop));
    }
    return loops;
}

} // namespace detail

// Recomputes per-node outward normals from the current boundary polygons.
// Each normal is the normalized average of the two adjacent edge normals
// (angle bisector). When the two edge normals cancel (a 180-degree spike) the
// node is returned as flagged and the longer edge supplies the normal.
inline std::vector<int> compute_boundary_normals(ExtrudedMesh& mesh) {
    require(!mesh.boundary_loops.empty(), "mesh has no boundary topology");
    std::vector<int> flagged;
    mesh.boundary_normal.assign(mesh.nodes_per_plane, Vec2::Zero());
    for (const auto& loop : mesh.boundary_loops) {
        int n = static_cast<int>(loop.size());
        for (int k = 0; k < n; ++k) {
            int prev = loop[(k + n - 1) % n];
            int node = loop[k];
            int nxt = loop[(k + 1) % n];
            Vec2 e_in = mesh.pos2d(node) - mesh.pos2d(prev);
            Vec2 e_out = mesh.pos2d(nxt) - mesh.pos2d(node);
            // material on the left => outward is the right-hand rotation
            Vec2 n_in = Vec2(e_in.y(), -e_in.x()).normalized();
            Vec2 n_out = Vec2(e_out.y(), -e_out.x()).normalized();
            Vec2 sum = n_in + n_out;
            if (sum.norm() < 1e-12) {
                flagged.push_back(node);
                sum = (e_in.norm() >= e_out.norm()) ? n_in : n_out;
            }
            mesh.boundary_normal[node] = sum.normalized();
        }
    }
    return flagged;
}

// Builds an extruded hexahedral mesh from the cross-section on a structured
// grid with pitch ~target_edge_length (snapped per axis so the grid spans the
// bounding box exactly). Cells whose center lies in material are kept and
// tagged by their containing loop; anchor cells fix their bottom-face nodes.
inline ExtrudedMesh extrude(const CrossSection2D& section, double thickness, int layers,
                            double target_edge_length) {
    require(layers >= 1, "extrude: layers must be >= 1");
    require(thickness > 0, "extrude: thickness must be positive");
    require(target_edge_length > 0, "extrude: target edge length must be positive");
    validate_section(section, 1e-3 * target_edge_length * target_edge_length);

    Vec2 lo(section.vertices[0]), hi(section.vertices[0]);
    for (const auto& v : section.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    Vec2 span = hi - lo;
    int nx = std::max(1, static_cast<int>(std::lround(span.x() / target_edge_length)));
    int ny = std::max(1, static_cast<int>(std::lround(span.y() / target_edge_length)));
    double dx = span.x() / nx, dy = span.y() / ny;

    // select material cells
    std::vector<int> cell_grid(static_cast<std::size_t>(nx) * ny, -1);
    std::vector<std::string> cell_tag;
    std::vector<std::array<int, 2>> cell_ij;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            Vec2 center(lo.x() + (i + 0.5) * dx, lo.y() + (j + 0.5) * dy);
            std::string tag;
            if (!point_in_material(section, center, &tag)) continue;
            cell_grid[static_cast<std::size_t>(j) * nx + i] = static_cast<int>(cell_tag.size());
            cell_tag.push_back(tag);
            cell_ij.push_back({i, j});
        }
    }
    require(!cell_tag.empty(), "extrude: no material cells at this edge length");

    // compact 2D node numbering over used grid vertices (row-major scan)
    std::vector<int> vert_id(static_cast<std::size_t>(nx + 1) * (ny + 1), -1);
    auto vidx = [&](int i, int j) { return static_cast<std::size_t>(j) * (nx + 1) + i; };
    std::vector<Vec2> coords2d;
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            bool used = false;
            for (int cj = j - 1; cj <= j && !used; ++cj)
                for (int ci = i - 1; ci <= i && !used; ++ci)
                    if (ci >= 0 && cj >= 0 && ci < nx && cj < ny &&
                        cell_grid[static_cast<std::size_t>(cj) * nx + ci] >= 0)
                        used = true;
            if (!used) continue;
            vert_id[vidx(i, j)] = static_cast<int>(coords2d.size());
            coords2d.push_back(Vec2(lo.x() + i * dx, lo.y() + j * dy));
        }
    }

    ExtrudedMesh mesh;
    mesh.layers = layers;
    mesh.thickness = thickness;
    mesh.nodes_per_plane = static_cast<int>(coords2d.size());
    mesh.cells_per_layer = static_cast<int>(cell_tag.size());

    mesh.cells2d.resize(cell_tag.size());
    for (std::size_t c = 0; c < cell_tag.size(); ++c) {
        auto [i, j] = cell_ij[c];
        mesh.cells2d[c] = {vert_id[vidx(i, j)], vert_id[vidx(i + 1, j)],
                           vert_id[vidx(i + 1, j + 1)], vert_id[vidx(i, j + 1)]};
    }

    mesh.nodes.reserve(coords2d.size() * (layers + 1));
    for (int p = 0; p <= layers; ++p) {
        double z = thickness * p / layers;
        for (const auto& v : coords2d) mesh.nodes.push_back(Vec3(v.x(), v.y(), z));
    }

    mesh.elements.reserve(cell_tag.size() * layers);
    for (int l = 0; l < layers; ++l) {
        for (std::size_t c = 0; c < cell_tag.size(); ++c) {
            const auto& q = mesh.cells2d[c];
            std::array<int, 8> hex;
            for (int k = 0; k < 4; ++k) hex[k] = mesh.node_id(l, q[k]);
            for (int k = 0; k < 4; ++k) hex[4 + k] = mesh.node_id(l + 1, q[k]);
            int eid = static_cast<int>(mesh.elements.size());
            mesh.elements.push_back(hex);
            mesh.regions[cell_tag[c]].push_back(eid);
        }
    }

    // anchors clamp at the substrate: bottom-face nodes of anchor cells
    std::set<int> fixed;
    if (auto it = mesh.regions.find("anchor"); it != mesh.regions.end()) {
        for (int eid : it->second) {
            if (eid >= mesh.cells_per_layer) continue; // bottom layer only
            for (int k = 0; k < 4; ++k) fixed.insert(mesh.elements[eid][k]);
        }
    }
    mesh.fixed_nodes.assign(fixed.begin(), fixed.end());
    require(!mesh.fixed_nodes.empty(), "extrude: no anchor region, mesh has no fixed nodes");

    mesh.boundary_loops = detail::trace_boundary_loops(mesh.cells2d);
    mesh.exterior2d.assign(mesh.nodes_per_plane, 0);
    for (const auto& loop : mesh.boundary_loops)
        for (int n : loop) mesh.exterior2d[n] = 1;
    compute_boundary_normals(mesh);

    require_valid_elements(mesh, "extrude");
    return mesh;
}

// Moves every exterior node by `delta` along the current outward boundary
// normal (recomputed from the present geometry, not the frozen design
// normals). Interior nodes stay put. Positive delta dilates the structure.
inline ExtrudedMesh offset_boundary(const ExtrudedMesh& mesh, double delta) {
    ExtrudedMesh out = mesh;
    compute_boundary_normals(out);
    for (int i = 0; i < out.nodes_per_plane; ++i) {
        if (!out.exterior2d[i]) continue;
        Vec2 step = delta * out.boundary_normal[i];
        for (int p = 0; p <= out.layers; ++p) {
            auto& x = out.nodes[out.node_id(p, i)];
            x.x() += step.x();
            x.y() += step.y();
        }
    }
    compute_boundary_normals(out); // normals of the offset geometry
    require_valid_elements(out, "offset_boundary");
    return out;
}

// Mirror-image bookkeeping for quarter- or half-symmetric designs. Reflections
// are about axes through the bounding-box center. Image maps cover all 2D
// nodes (morphing needs interior images too); masters are the exterior nodes
// of the closed positive quadrant.
struct SymmetryMap {
    bool about_x_axis = false; // reflection y -> 2cy - y
    bool about_y_axis = false; // reflection x -> 2cx - x
    Vec2 center = Vec2::Zero();
    std::vector<int> reflect_x; // per 2D node: image under the x-axis reflection
    std::vector<int> reflect_y;

    bool any() const { return about_x_axis || about_y_axis; }

    bool in_master_quadrant(const Vec2& p, double tol = 1e-12) const {
        if (about_y_axis && p.x() < center.x() - tol) return false;
        if (about_x_axis && p.y() < center.y() - tol) return false;
        return true;
    }
};

inline SymmetryMap detect_symmetry(const ExtrudedMesh& mesh, bool about_x_axis, bool about_y_axis,
                                   double tol = 1e-9) {
    SymmetryMap map;
    map.about_x_axis = about_x_axis;
    map.about_y_axis = about_y_axis;

    Vec2 lo = mesh.pos2d(0), hi = lo;
    for (int i = 0; i < mesh.nodes_per_plane; ++i) {
        lo = lo.cwiseMin(mesh.pos2d(i));
        hi = hi.cwiseMax(mesh.pos2d(i));
    }
    map.center = 0.5 * (lo + hi);

    // nodes sorted by x for windowed nearest lookup
    std::vector<int> order(mesh.nodes_per_plane);
    for (int i = 0; i < mesh.nodes_per_plane; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return mesh.nodes[a].x() < mesh.nodes[b].x(); });
    std::vector<double> xs(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) xs[k] = mesh.nodes[order[k]].x();

    auto find_node = [&](const Vec2& p) -> int {
        auto first = std::lower_bound(xs.begin(), xs.end(), p.x() - tol);
        for (auto it = first; it != xs.end() && *it <= p.x() + tol; ++it) {
            int id = order[it - xs.begin()];
            if (std::abs(mesh.nodes[id].y() - p.y()) <= tol) return id;
        }
        return -1;
    };

    auto build_map = [&](bool flip_x, bool flip_y, std::vector<int>& out) {
        out.assign(mesh.nodes_per_plane, -1);
        for (int i = 0; i < mesh.nodes_per_plane; ++i) {
            Vec2 p = mesh.pos2d(i);
            Vec2 q(flip_x ? 2 * map.center.x() - p.x() : p.x(),
                   flip_y ? 2 * map.center.y() - p.y() : p.y());
            int img = find_node(q);
            if (img < 0)
                fail("detect_symmetry: node ", i, " at (", p.x(), ", ", p.y(),
                     ") has no mirror image within ", tol, " m");
            out[i] = img;
        }
    };
    if (about_x_axis) build_map(false, true, map.reflect_x);
    if (about_y_axis) build_map(true, false, map.reflect_y);

    for (int i = 0; i < mesh.nodes_per_plane; ++i) {
        if (about_x_axis)
            require(map.reflect_x[map.reflect_x[i]] == i,
                    "detect_symmetry: x-axis map is not an involution at node ", i);
        if (about_y_axis)
            require(map.reflect_y[map.reflect_y[i]] == i,
                    "detect_symmetry: y-axis map is not an involution at node ", i);
    }
    return map;
}

// Exterior master-quadrant nodes of a symmetry map (all exterior nodes when
// the map has no active reflections).
inline std::vector<int> master_exterior_nodes(const ExtrudedMesh& mesh, const SymmetryMap& sym) {
    std::vector<int> out;
    for (int i = 0; i < mesh.nodes_per_plane; ++i) {
        if (!mesh.exterior2d[i]) continue;
        if (sym.in_master_quadrant(mesh.pos2d(i))) out.push_back(i);
    }
    return out;
}

} // namespace triwave
