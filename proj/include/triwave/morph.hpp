#pragma once

#include <deque>
#include <fstream>
#include <set>

#include "triwave/mesh.hpp"

namespace triwave {

// One scalar per movable master exterior node, in meters of outward-normal
// offset, plus box limits.
struct DesignVector {
    Eigen::VectorXd p;
    Eigen::VectorXd box_lower;
    Eigen::VectorXd box_upper;

    int size() const { return static_cast<int>(p.size()); }

    void require_in_box() const {
        for (int j = 0; j < size(); ++j)
            require(p(j) >= box_lower(j) - 1e-18 && p(j) <= box_upper(j) + 1e-18,
                    "design parameter ", j, " = ", p(j), " violates its box [", box_lower(j), ", ",
                    box_upper(j), "]");
    }
};

// Constant linear map from design parameters to in-plane node displacements:
// X(p) = X0 + G p. Each parameter shifts its master exterior node along the
// frozen outward normal, drags boundary neighbors within `decay_radius` hops
// along their own normals with weights 1 - hop/(radius+1), drags nearby
// movable interior nodes through the 2D mesh graph with the same weights
// along the master normal, and mirrors everything onto symmetry images with
// reflected displacement components. Normals are frozen at the design this
// operator was built on, which keeps the map linear and sensitivities exact.
class MorphOperator {
public:
    struct Term {
        int node2d;
        Vec2 displacement; // per unit parameter value
    };

    std::vector<std::vector<Term>> columns; // per parameter, sorted by node2d
    std::vector<int> parameter_node;        // parameter -> master exterior 2D node
    int decay_radius = 3;

    int parameter_count() const { return static_cast<int>(columns.size()); }

    const std::vector<Term>& column(int j) const { return columns[j]; }

    // 2D node displacement field for a full design vector
    std::vector<Vec2> displacement_field(int nodes_per_plane, const Eigen::VectorXd& p) const {
        std::vector<Vec2> disp(nodes_per_plane, Vec2::Zero());
        require(p.size() == parameter_count(), "morph: design vector has ", p.size(),
                " entries, operator expects ", parameter_count());
        for (int j = 0; j < parameter_count(); ++j) {
            if (p(j) == 0.0) continue;
            for (const auto& t : columns[j]) disp[t.node2d] += p(j) * t.displacement;
        }
        return disp;
    }
};

namespace detail {

// weights 1 - hop/(radius+1) over an adjacency graph, expanding only through
// permitted nodes
inline std::map<int, double> decay_weights(int start, int radius,
                                           const std::vector<std::vector<int>>& adjacency,
                                           const std::vector<char>& allowed) {
    std::map<int, double> weight;
    std::map<int, int> hop;
    std::deque<int> queue;
    hop[start] = 0;
    queue.push_back(start);
    while (!queue.empty()) {
        int node = queue.front();
        queue.pop_front();
        int h = hop[node];
        if (allowed[node]) weight[node] = 1.0 - static_cast<double>(h) / (radius + 1);
        if (h == radius) continue;
        if (!allowed[node] && node != start) continue; // no expansion through frozen nodes
        for (int nb : adjacency[node])
            if (!hop.count(nb)) {
                hop[nb] = h + 1;
                queue.push_back(nb);
            }
    }
    return weight;
}

} // namespace detail

// Movable 2D nodes: every adjacent cross-section cell carries one of the
// movable region tags (junction nodes shared with anchors or masses stay
// put, matching the physical attachment).
inline std::vector<char> movable_nodes2d(const ExtrudedMesh& mesh,
                                         const std::set<std::string>& movable_regions) {
    std::vector<char> cell_movable(mesh.cells_per_layer, 0);
    for (const auto& [tag, ids] : mesh.regions) {
        if (!movable_regions.count(tag)) continue;
        for (int e : ids)
            if (e < mesh.cells_per_layer) cell_movable[e] = 1;
    }
    std::vector<char> movable(mesh.nodes_per_plane, 1);
    std::vector<char> touched(mesh.nodes_per_plane, 0);
    for (int c = 0; c < mesh.cells_per_layer; ++c)
        for (int k = 0; k < 4; ++k) {
            int n = mesh.cells2d[c][k];
            touched[n] = 1;
            if (!cell_movable[c]) movable[n] = 0;
        }
    for (int i = 0; i < mesh.nodes_per_plane; ++i)
        if (!touched[i]) movable[i] = 0;
    return movable;
}

inline MorphOperator build_morph_operator(const ExtrudedMesh& mesh, const SymmetryMap& sym,
                                          const std::set<std::string>& movable_regions,
                                          int decay_radius) {
    require(decay_radius >= 0, "morph: decay radius must be non-negative");
    for (const auto& tag : movable_regions)
        require(mesh.regions.count(tag), "morph: mesh has no region '", tag, "'");

    auto movable = movable_nodes2d(mesh, movable_regions);

    // boundary adjacency (loop neighbors) and 2D mesh adjacency (quad edges)
    std::vector<std::vector<int>> boundary_adj(mesh.nodes_per_plane);
    for (const auto& loop : mesh.boundary_loops) {
        int n = static_cast<int>(loop.size());
        for (int k = 0; k < n; ++k) {
            boundary_adj[loop[k]].push_back(loop[(k + 1) % n]);
            boundary_adj[loop[(k + 1) % n]].push_back(loop[k]);
        }
    }
    std::vector<std::set<int>> mesh_adj_sets(mesh.nodes_per_plane);
    for (const auto& c : mesh.cells2d)
        for (int k = 0; k < 4; ++k) {
            mesh_adj_sets[c[k]].insert(c[(k + 1) % 4]);
            mesh_adj_sets[c[(k + 1) % 4]].insert(c[k]);
        }
    std::vector<std::vector<int>> mesh_adj(mesh.nodes_per_plane);
    for (int i = 0; i < mesh.nodes_per_plane; ++i)
        mesh_adj[i].assign(mesh_adj_sets[i].begin(), mesh_adj_sets[i].end());

    // master parameter sites
    MorphOperator morph;
    morph.decay_radius = decay_radius;
    for (int i = 0; i < mesh.nodes_per_plane; ++i) {
        if (!mesh.exterior2d[i] || !movable[i]) continue;
        if (sym.any() && !sym.in_master_quadrant(mesh.pos2d(i))) continue;
        morph.parameter_node.push_back(i);
    }
    require(!morph.parameter_node.empty(), "morph: no movable exterior nodes in regions");

    auto master_field = [&](int site) {
        std::map<int, Vec2> field;
        require(mesh.boundary_normal[site].norm() > 0.5, "morph: movable node ", site,
                " has no boundary normal");
        // boundary neighbours move along their own normals
        for (const auto& [node, w] : detail::decay_weights(site, decay_radius, boundary_adj, movable)) {
            require(mesh.boundary_normal[node].norm() > 0.5, "morph: movable node ", node,
                    " has no boundary normal");
            field[node] = w * mesh.boundary_normal[node];
        }
        // movable interior nodes follow the master normal through the mesh graph
        Vec2 master_dir = mesh.boundary_normal[site];
        for (const auto& [node, w] : detail::decay_weights(site, decay_radius, mesh_adj, movable)) {
            if (mesh.exterior2d[node]) continue;
            field[node] = w * master_dir;
        }
        return field;
    };

    morph.columns.resize(morph.parameter_node.size());
    parallel_blocks(morph.parameter_node.size(), [&](std::size_t j0, std::size_t j1) {
        for (std::size_t j = j0; j < j1; ++j) {
            auto field = master_field(morph.parameter_node[j]);

            std::map<int, Vec2> total(field.begin(), field.end());
            auto add_image = [&](bool rx, bool ry) {
                for (const auto& [node, d] : field) {
                    int img = node;
                    if (rx) img = sym.reflect_x[img];
                    if (ry) img = sym.reflect_y[img];
                    Vec2 dr(ry ? -d.x() : d.x(), rx ? -d.y() : d.y());
                    auto [it, inserted] = total.try_emplace(img, Vec2::Zero());
                    it->second += dr;
                }
            };
            if (sym.about_x_axis) add_image(true, false);
            if (sym.about_y_axis) add_image(false, true);
            if (sym.about_x_axis && sym.about_y_axis) add_image(true, true);

            auto& col = morph.columns[j];
            col.reserve(total.size());
            for (const auto& [node, d] : total) col.push_back({node, d});
        }
    });
    return morph;
}

// X = X0 + G p, broadcast down each extrusion column; frozen normals are
// carried over unchanged. Fails listing the parameters with the largest
// influence on any inverted element.
inline ExtrudedMesh apply_design(const ExtrudedMesh& initial, const MorphOperator& morph,
                                 const Eigen::VectorXd& p) {
    ExtrudedMesh out = initial;
    auto disp = morph.displacement_field(initial.nodes_per_plane, p);
    for (int i = 0; i < initial.nodes_per_plane; ++i) {
        if (disp[i].x() == 0.0 && disp[i].y() == 0.0) continue;
        for (int plane = 0; plane <= initial.layers; ++plane) {
            auto& x = out.nodes[out.node_id(plane, i)];
            x.x() += disp[i].x();
            x.y() += disp[i].y();
        }
    }

    auto bad = find_inverted_elements(out);
    if (!bad.empty()) {
        // blame: parameters with the largest displacement contribution on the
        // offending elements
        std::set<int> bad_nodes;
        for (int e : bad)
            for (int k = 0; k < 4; ++k) bad_nodes.insert(initial.cells2d[initial.cell2d_of(e)][k]);
        std::vector<std::pair<double, int>> blame;
        for (int j = 0; j < morph.parameter_count(); ++j) {
            double mass = 0;
            for (const auto& t : morph.column(j))
                if (bad_nodes.count(t.node2d)) mass += std::abs(p(j)) * t.displacement.norm();
            if (mass > 0) blame.push_back({mass, j});
        }
        std::sort(blame.rbegin(), blame.rend());
        std::string who;
        for (std::size_t k = 0; k < blame.size() && k < 5; ++k)
            who += (k ? ", " : "") + std::to_string(blame[k].second);
        fail("apply_design: ", bad.size(), " element(s) inverted (element ", bad.front(),
             " first); largest-influence parameters: [", who, "]");
    }
    return out;
}

// Exact column d(X2d)/dp_j of the morph map (constant in p, z rows zero).
inline const std::vector<MorphOperator::Term>& node_position_sensitivity(const MorphOperator& morph,
                                                                         int j) {
    require(j >= 0 && j < morph.parameter_count(), "morph: no parameter ", j);
    return morph.column(j);
}

// --------------------------------------------------------------------------
// Design vector checkpoints: "designvec 1" header then "p <j> <value>" lines.

inline void write_design_vector(const Eigen::VectorXd& p, std::ostream& os) {
    os << "designvec 1\n";
    for (int j = 0; j < p.size(); ++j) os << "p " << j << ' ' << num_str(p(j)) << '\n';
}

inline void write_design_vector_file(const Eigen::VectorXd& p, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "cannot open design vector file for writing: ", path);
    write_design_vector(p, os);
}

inline Eigen::VectorXd read_design_vector(std::istream& is, const std::string& origin) {
    std::string line;
    int lineno = 0;
    std::vector<double> values;
    bool header_seen = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (!header_seen) {
            int version = 0;
            require(kw == "designvec" && (ls >> version) && version == 1, origin, ":", lineno,
                    ": expected header 'designvec 1'");
            header_seen = true;
            continue;
        }
        long j;
        double v;
        require(kw == "p" && (ls >> j >> v), origin, ":", lineno, ": malformed parameter record");
        require(j == static_cast<long>(values.size()), origin, ":", lineno,
                ": non-dense parameter id");
        values.push_back(v);
    }
    require(header_seen, origin, ": empty design vector file");
    return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<int>(values.size()));
}

inline Eigen::VectorXd read_design_vector_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "cannot open design vector file: ", path);
    return read_design_vector(is, path);
}

} // namespace triwave
