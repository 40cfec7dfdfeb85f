#include <sstream>

#include "test_helpers.hpp"
#include "triwave/mesh_io.hpp"

using namespace triwave;
using twtest::um;
using Catch::Approx;

TEST_CASE("extrude: unit square gives a single hexahedron") {
    CrossSection2D cs;
    add_rect(cs, Vec2(0, 0), Vec2(1, 1), "anchor");
    auto mesh = extrude(cs, 1.0, 1, 1.0);
    CHECK(mesh.elements.size() == 1);
    CHECK(mesh.nodes.size() == 8);
    CHECK(mesh.fixed_nodes.size() == 4);
    CHECK(mesh.regions.at("anchor").size() == 1);
}

TEST_CASE("extrude: structured grid counts") {
    CrossSection2D cs;
    add_rect(cs, Vec2(0, 0), Vec2(10 * um, 2 * um), "anchor");
    auto mesh = extrude(cs, 5 * um, 2, 1 * um);
    CHECK(mesh.elements.size() == 40); // 10 * 2 * 2
    CHECK(mesh.nodes.size() == 99);    // 11 * 3 * 3
    CHECK(mesh.cells_per_layer == 20);
    CHECK(mesh.nodes_per_plane == 33);
}

TEST_CASE("extrude: L-shaped section with hole is valid and normals are in-plane") {
    CrossSection2D cs;
    add_rect(cs, Vec2(0, 0), Vec2(10 * um, 4 * um), "anchor");
    add_rect(cs, Vec2(0, 4 * um), Vec2(4 * um, 10 * um), "mass");
    add_rect(cs, Vec2(1 * um, 1 * um), Vec2(3 * um, 3 * um), "", true); // hole
    auto mesh = extrude(cs, 2 * um, 2, 0.5 * um);
    CHECK(find_inverted_elements(mesh).empty());
    CHECK(mesh.boundary_loops.size() == 2); // outline + hole
    int checked = 0;
    for (int i = 0; i < mesh.nodes_per_plane; ++i) {
        if (!mesh.exterior2d[i]) continue;
        CHECK(mesh.boundary_normal[i].norm() == Approx(1.0).epsilon(1e-12));
        ++checked;
    }
    CHECK(checked > 0);
}

TEST_CASE("extrude: degenerate polygon is rejected with its loop index") {
    CrossSection2D cs;
    add_rect(cs, Vec2(0, 0), Vec2(4 * um, 4 * um), "anchor");
    add_rect(cs, Vec2(5 * um, 0), Vec2(5 * um + 1e-12, 1e-12), "spring"); // degenerate
    CHECK_THROWS_WITH(extrude(cs, 1 * um, 1, 1 * um),
                      Catch::Matchers::ContainsSubstring("degenerate polygon 1"));
}

TEST_CASE("boundary normals: flat edges and corners") {
    CrossSection2D cs;
    add_rect(cs, Vec2(0, 0), Vec2(4 * um, 2 * um), "anchor");
    auto mesh = extrude(cs, 1 * um, 1, 0.5 * um);

    auto normal_at = [&](double x, double y) {
        for (int i = 0; i < mesh.nodes_per_plane; ++i) {
            if (!mesh.exterior2d[i]) continue;
            if (std::abs(mesh.nodes[i].x() - x) < 1e-12 && std::abs(mesh.nodes[i].y() - y) < 1e-12)
                return mesh.boundary_normal[i];
        }
        FAIL("no exterior node at requested position");
        return Vec2(0, 0);
    };

    // right edge midspan
    Vec2 n_mid = normal_at(4 * um, 1 * um);
    CHECK(n_mid.x() == Approx(1.0).margin(1e-12));
    CHECK(n_mid.y() == Approx(0.0).margin(1e-12));
    // convex corner: bisector
    Vec2 n_corner = normal_at(4 * um, 2 * um);
    CHECK(n_corner.x() == Approx(std::sqrt(0.5)).margin(1e-12));
    CHECK(n_corner.y() == Approx(std::sqrt(0.5)).margin(1e-12));
}

TEST_CASE("boundary normals: 64-gon ring stays radial") {
    // hand-built annulus: one element layer between a 64-gon at radius r_out
    // and a scaled copy at r_in
    const int n = 64;
    const double r_out = 10 * um, r_in = 8 * um, t = 1 * um;
    ExtrudedMesh mesh;
    mesh.layers = 1;
    mesh.nodes_per_plane = 2 * n;
    mesh.cells_per_layer = n;
    mesh.thickness = t;
    for (int p = 0; p <= 1; ++p)
        for (int ring = 0; ring < 2; ++ring)
            for (int i = 0; i < n; ++i) {
                double r = ring == 0 ? r_out : r_in;
                double a = 2.0 * triwave::kPi * i / n;
                mesh.nodes.push_back(Vec3(r * std::cos(a), r * std::sin(a), p * t));
            }
    for (int i = 0; i < n; ++i) {
        int j = (i + 1) % n;
        mesh.cells2d.push_back({i, j, n + j, n + i});
        std::array<int, 8> hex;
        for (int k = 0; k < 4; ++k) hex[k] = mesh.cells2d[i][k];
        for (int k = 0; k < 4; ++k) hex[4 + k] = mesh.cells2d[i][k] + 2 * n;
        mesh.elements.push_back(hex);
    }
    mesh.fixed_nodes = {n, n + 1}; // arbitrary, unused here
    mesh.boundary_loops = detail::trace_boundary_loops(mesh.cells2d);
    mesh.exterior2d.assign(mesh.nodes_per_plane, 0);
    for (const auto& loop : mesh.boundary_loops)
        for (int id : loop) mesh.exterior2d[id] = 1;

    auto flagged = compute_boundary_normals(mesh);
    CHECK(flagged.empty());
    REQUIRE(find_inverted_elements(mesh).empty());

    double worst_deg = 0.0;
    for (int i = 0; i < 2 * n; ++i) {
        Vec2 radial = mesh.pos2d(i).normalized();
        if (i >= n) radial = -radial; // inner boundary: outward points to the center
        double c = std::clamp(mesh.boundary_normal[i].dot(radial), -1.0, 1.0);
        worst_deg = std::max(worst_deg, std::acos(c) * 180.0 / triwave::kPi);
    }
    CHECK(worst_deg < 3.0);
}

TEST_CASE("offset_boundary: identity, widths, round trip") {
    auto mesh = extrude(twtest::anchored_strip(), 2 * um, 2, 0.25 * um);

    SECTION("delta = 0 keeps coordinates") {
        auto same = offset_boundary(mesh, 0.0);
        for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
            CHECK((same.nodes[i] - mesh.nodes[i]).norm() == 0.0);
    }

    SECTION("+-50 nm changes a 1.5 um spring to 1.6 / 1.4 um") {
        auto [lo0, hi0] = twtest::strip_extent_at(mesh, 8 * um, 0.13 * um);
        CHECK(hi0 - lo0 == Approx(1.5 * um).epsilon(1e-12));

        auto dilated = offset_boundary(mesh, 50e-9);
        auto [lo1, hi1] = twtest::strip_extent_at(dilated, 8 * um, 0.13 * um);
        CHECK(hi1 - lo1 == Approx(1.6 * um).epsilon(1e-12));

        auto eroded = offset_boundary(mesh, -50e-9);
        auto [lo2, hi2] = twtest::strip_extent_at(eroded, 8 * um, 0.13 * um);
        CHECK(hi2 - lo2 == Approx(1.4 * um).epsilon(1e-12));
    }

    SECTION("offset then inverse offset restores straight-edge nodes") {
        // straight-edge subset: node and both loop neighbors share one normal
        // (nodes next to a corner pick up the corner's bisector stretch)
        auto round = offset_boundary(offset_boundary(mesh, 40e-9), -40e-9);
        int checked = 0;
        for (const auto& loop : mesh.boundary_loops) {
            int n = static_cast<int>(loop.size());
            for (int k = 0; k < n; ++k) {
                int prev = loop[(k + n - 1) % n], node = loop[k], nxt = loop[(k + 1) % n];
                if ((mesh.boundary_normal[prev] - mesh.boundary_normal[node]).norm() > 1e-12)
                    continue;
                if ((mesh.boundary_normal[nxt] - mesh.boundary_normal[node]).norm() > 1e-12)
                    continue;
                CHECK((round.nodes[node] - mesh.nodes[node]).norm() < 1e-12);
                ++checked;
            }
        }
        CHECK(checked > 10);
    }

    SECTION("column alignment survives offsets") {
        auto moved = offset_boundary(mesh, 50e-9);
        for (int i = 0; i < moved.nodes_per_plane; ++i)
            for (int p = 1; p <= moved.layers; ++p) {
                CHECK(moved.nodes[moved.node_id(p, i)].x() == moved.nodes[i].x());
                CHECK(moved.nodes[moved.node_id(p, i)].y() == moved.nodes[i].y());
            }
    }

    SECTION("too large offset reports inverted elements") {
        CHECK_THROWS_WITH(offset_boundary(mesh, -0.8 * um),
                          Catch::Matchers::ContainsSubstring("inverted element"));
    }
}

TEST_CASE("detect_symmetry on a quarter-symmetric cross") {
    auto mesh = extrude(twtest::cross_section(), 1 * um, 1, 0.5 * um);
    auto sym = detect_symmetry(mesh, true, true);

    auto masters = master_exterior_nodes(mesh, sym);
    int n_ext = 0;
    for (int i = 0; i < mesh.nodes_per_plane; ++i)
        if (mesh.exterior2d[i]) ++n_ext;
    // roughly a quarter (axis nodes are shared between quadrants)
    CHECK(masters.size() >= static_cast<std::size_t>(n_ext) / 4);
    CHECK(masters.size() <= static_cast<std::size_t>(n_ext) / 4 + 20);

    SECTION("images mirror coordinates exactly") {
        for (int m : masters) {
            int ix = sym.reflect_x[m];
            CHECK(mesh.nodes[ix].x() == Approx(mesh.nodes[m].x()).margin(1e-15));
            CHECK(mesh.nodes[ix].y() ==
                  Approx(2 * sym.center.y() - mesh.nodes[m].y()).margin(1e-15));
            int iy = sym.reflect_y[m];
            CHECK(mesh.nodes[iy].y() == Approx(mesh.nodes[m].y()).margin(1e-15));
            CHECK(mesh.nodes[iy].x() ==
                  Approx(2 * sym.center.x() - mesh.nodes[m].x()).margin(1e-15));
        }
    }

    SECTION("node on the x-axis maps to itself") {
        int on_axis = -1;
        for (int i = 0; i < mesh.nodes_per_plane; ++i)
            if (mesh.exterior2d[i] && std::abs(mesh.nodes[i].y() - sym.center.y()) < 1e-15)
                on_axis = i;
        REQUIRE(on_axis >= 0);
        CHECK(sym.reflect_x[on_axis] == on_axis);
    }

    SECTION("perturbed node rejects symmetry naming the node") {
        auto bad = mesh;
        int victim = masters.front();
        for (int p = 0; p <= bad.layers; ++p) bad.nodes[bad.node_id(p, victim)].x() += 1 * um;
        CHECK_THROWS_WITH(detect_symmetry(bad, true, true),
                          Catch::Matchers::ContainsSubstring("no mirror image"));
    }
}

TEST_CASE("mesh file round trip") {
    auto mesh = extrude(twtest::anchored_strip(), 2 * um, 2, 0.5 * um);
    std::stringstream buf;
    write_mesh(mesh, buf);
    auto back = read_mesh(buf, "<buffer>");

    REQUIRE(back.nodes.size() == mesh.nodes.size());
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
        CHECK((back.nodes[i] - mesh.nodes[i]).norm() == 0.0);
    CHECK(back.elements == mesh.elements);
    CHECK(back.fixed_nodes == mesh.fixed_nodes);
    CHECK(back.regions == mesh.regions);
    CHECK(back.layers == mesh.layers);
    CHECK(back.nodes_per_plane == mesh.nodes_per_plane);
    for (int i = 0; i < mesh.nodes_per_plane; ++i)
        CHECK((back.boundary_normal[i] - mesh.boundary_normal[i]).norm() == 0.0);

    SECTION("second write is byte-identical") {
        std::stringstream buf2;
        write_mesh(back, buf2);
        std::stringstream buf3;
        write_mesh(mesh, buf3);
        CHECK(buf2.str() == buf3.str());
    }
}

TEST_CASE("mesh reader reports malformed input with line numbers") {
    std::stringstream buf("meshformat 1\nnode 0 0 0 0\nnode 1 oops 0 0\n");
    CHECK_THROWS_WITH(read_mesh(buf, "<buffer>"),
                      Catch::Matchers::ContainsSubstring("<buffer>:3"));

    std::stringstream buf2("meshfmt 2\n");
    CHECK_THROWS_WITH(read_mesh(buf2, "<buffer>"),
                      Catch::Matchers::ContainsSubstring("meshformat 1"));
}
