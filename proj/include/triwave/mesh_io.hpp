#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "triwave/mesh.hpp"

namespace triwave {

// Line-oriented mesh interchange format, all coordinates in meters:
//   meshformat 1
//   node <id> <x> <y> <z>
//   hex <id> <n1> ... <n8>
//   fixed <node-id>
//   region <tag> <element-id...>
//   exterior <node-id> <nx> <ny>
// Ids are dense and zero-based. Exterior records carry the stored boundary
// normals, so frozen design normals survive a round trip.

inline void write_mesh(const ExtrudedMesh& mesh, std::ostream& os) {
    os << "meshformat 1\n";
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
        const Vec3& p = mesh.nodes[i];
        os << "node " << i << ' ' << num_str(p.x()) << ' ' << num_str(p.y()) << ' '
           << num_str(p.z()) << '\n';
    }
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        os << "hex " << e;
        for (int n : mesh.elements[e]) os << ' ' << n;
        os << '\n';
    }
    for (int n : mesh.fixed_nodes) os << "fixed " << n << '\n';
    for (const auto& [tag, ids] : mesh.regions) {
        os << "region " << tag;
        for (int e : ids) os << ' ' << e;
        os << '\n';
    }
    for (int i = 0; i < mesh.nodes_per_plane; ++i) {
        if (!mesh.exterior2d[i]) continue;
        const Vec2& n = mesh.boundary_normal[i];
        for (int p = 0; p <= mesh.layers; ++p)
            os << "exterior " << mesh.node_id(p, i) << ' ' << num_str(n.x()) << ' '
               << num_str(n.y()) << '\n';
    }
}

inline void write_mesh_file(const ExtrudedMesh& mesh, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "cannot open mesh file for writing: ", path);
    write_mesh(mesh, os);
    require(os.good(), "error while writing mesh file: ", path);
}

inline ExtrudedMesh read_mesh(std::istream& is, const std::string& origin = "<stream>") {
    ExtrudedMesh mesh;
    std::string line;
    int lineno = 0;

    auto parse_fail = [&](const std::string& what) {
        fail(origin, ":", lineno, ": ", what);
    };

    std::vector<std::pair<int, Vec2>> exterior_records;

    bool header_seen = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (!header_seen) {
            int version = 0;
            if (kw != "meshformat" || !(ls >> version) || version != 1)
                parse_fail("expected header 'meshformat 1'");
            header_seen = true;
            continue;
        }
        if (kw == "node") {
            long id;
            double x, y, z;
            if (!(ls >> id >> x >> y >> z)) parse_fail("malformed node record");
            if (id != static_cast<long>(mesh.nodes.size())) parse_fail("non-dense node id");
            mesh.nodes.push_back(Vec3(x, y, z));
        } else if (kw == "hex") {
            long id;
            std::array<int, 8> n;
            if (!(ls >> id)) parse_fail("malformed hex record");
            for (int k = 0; k < 8; ++k)
                if (!(ls >> n[k])) parse_fail("malformed hex record");
            if (id != static_cast<long>(mesh.elements.size())) parse_fail("non-dense element id");
            mesh.elements.push_back(n);
        } else if (kw == "fixed") {
            int id;
            if (!(ls >> id)) parse_fail("malformed fixed record");
            mesh.fixed_nodes.push_back(id);
        } else if (kw == "region") {
            std::string tag;
            if (!(ls >> tag)) parse_fail("malformed region record");
            int e;
            auto& ids = mesh.regions[tag];
            while (ls >> e) ids.push_back(e);
        } else if (kw == "exterior") {
            int id;
            double nx, ny;
            if (!(ls >> id >> nx >> ny)) parse_fail("malformed exterior record");
            exterior_records.push_back({id, Vec2(nx, ny)});
        } else {
            parse_fail("unknown record '" + kw + "'");
        }
    }
    require(header_seen, origin, ": empty mesh file");
    require(!mesh.nodes.empty(), origin, ": mesh has no nodes");
    require(!mesh.elements.empty(), origin, ": mesh has no elements");

    for (const auto& e : mesh.elements)
        for (int n : e)
            require(n >= 0 && n < static_cast<int>(mesh.nodes.size()), origin,
                    ": element references invalid node ", n);

    // recover the extrusion layout: planes are groups of equal z in id order
    double z0 = mesh.nodes[0].z();
    int n2d = 0;
    while (n2d < static_cast<int>(mesh.nodes.size()) && mesh.nodes[n2d].z() == z0) ++n2d;
    require(n2d > 0 && mesh.nodes.size() % n2d == 0, origin,
            ": node layout is not plane-grouped");
    int planes = static_cast<int>(mesh.nodes.size()) / n2d;
    require(planes >= 2, origin, ": extruded mesh needs at least 2 node planes");
    mesh.nodes_per_plane = n2d;
    mesh.layers = planes - 1;
    for (int p = 0; p < planes; ++p) {
        double zp = mesh.nodes[static_cast<std::size_t>(p) * n2d].z();
        for (int i = 0; i < n2d; ++i) {
            const Vec3& x = mesh.nodes[static_cast<std::size_t>(p) * n2d + i];
            require(x.z() == zp, origin, ": node ", p * n2d + i, " breaks plane grouping");
            require(x.x() == mesh.nodes[i].x() && x.y() == mesh.nodes[i].y(), origin, ": node ",
                    p * n2d + i, " breaks the xy-column alignment");
        }
        if (p > 0)
            require(zp > mesh.nodes[static_cast<std::size_t>(p - 1) * n2d].z(), origin,
                    ": planes not sorted by z");
    }
    mesh.thickness = mesh.nodes.back().z() - z0;

    require(mesh.elements.size() % mesh.layers == 0, origin, ": element count not layer-grouped");
    mesh.cells_per_layer = static_cast<int>(mesh.elements.size()) / mesh.layers;
    mesh.cells2d.resize(mesh.cells_per_layer);
    for (int c = 0; c < mesh.cells_per_layer; ++c) {
        const auto& hex = mesh.elements[c];
        for (int k = 0; k < 4; ++k) {
            require(hex[k] < n2d && hex[k + 4] == hex[k] + n2d, origin, ": element ", c,
                    " is not an extruded prism of the bottom plane");
            mesh.cells2d[c][k] = hex[k];
        }
    }
    for (int l = 1; l < mesh.layers; ++l) {
        for (int c = 0; c < mesh.cells_per_layer; ++c) {
            const auto& hex = mesh.elements[static_cast<std::size_t>(l) * mesh.cells_per_layer + c];
            for (int k = 0; k < 4; ++k)
                require(hex[k] == mesh.cells2d[c][k] + l * n2d && hex[k + 4] == hex[k] + n2d,
                        origin, ": element stack ", c, " broken in layer ", l);
        }
    }

    std::sort(mesh.fixed_nodes.begin(), mesh.fixed_nodes.end());
    mesh.fixed_nodes.erase(std::unique(mesh.fixed_nodes.begin(), mesh.fixed_nodes.end()),
                           mesh.fixed_nodes.end());
    require(!mesh.fixed_nodes.empty(), origin, ": mesh has no fixed nodes");
    for (auto& [tag, ids] : mesh.regions) {
        std::sort(ids.begin(), ids.end());
        for (int e : ids)
            require(e >= 0 && e < static_cast<int>(mesh.elements.size()), origin, ": region ", tag,
                    " references invalid element ", e);
    }

    mesh.boundary_loops = detail::trace_boundary_loops(mesh.cells2d);
    mesh.exterior2d.assign(n2d, 0);
    for (const auto& loop : mesh.boundary_loops)
        for (int n : loop) mesh.exterior2d[n] = 1;

    if (exterior_records.empty()) {
        compute_boundary_normals(mesh);
    } else {
        mesh.boundary_normal.assign(n2d, Vec2::Zero());
        for (const auto& [id, nrm] : exterior_records) {
            require(id >= 0 && id < static_cast<int>(mesh.nodes.size()), origin,
                    ": exterior record for invalid node ", id);
            int i2d = mesh.node2d_of(id);
            require(mesh.exterior2d[i2d], origin, ": exterior record for interior node ", id);
            mesh.boundary_normal[i2d] = nrm;
        }
        for (int i = 0; i < n2d; ++i)
            require(!mesh.exterior2d[i] || mesh.boundary_normal[i].norm() > 0.5, origin,
                    ": exterior node ", i, " has no normal record");
    }

    require_valid_elements(mesh, "read_mesh");
    return mesh;
}

inline ExtrudedMesh read_mesh_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "cannot open mesh file: ", path);
    return read_mesh(is, path);
}

} // namespace triwave
