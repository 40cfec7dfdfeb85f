#include <random>

#include "test_helpers.hpp"
#include "triwave/fem.hpp"

using namespace triwave;
using twtest::um;
using Catch::Approx;

namespace {

ExtrudedMesh unit_cube_mesh() {
    CrossSection2D cs;
    add_rect(cs, Vec2(0, 0), Vec2(1, 1), "anchor");
    return extrude(cs, 1.0, 1, 1.0);
}

// ---------------------------------------------------------------------------
// Independent element oracle for the unit cube: trilinear shape functions
// written directly in physical coordinates (no isoparametric mapping) and
// integrated with a 3-point Gauss rule per axis. Both integrands are
// polynomial, so oracle and implementation must agree to round-off.

double shape_phys(int a, double x, double y, double z) {
    double fx = hex8::kNodeXi[a] > 0 ? x : 1 - x;
    double fy = hex8::kNodeEta[a] > 0 ? y : 1 - y;
    double fz = hex8::kNodeZeta[a] > 0 ? z : 1 - z;
    return fx * fy * fz;
}

Eigen::Vector3d shape_phys_grad(int a, double x, double y, double z) {
    double fx = hex8::kNodeXi[a] > 0 ? x : 1 - x;
    double fy = hex8::kNodeEta[a] > 0 ? y : 1 - y;
    double fz = hex8::kNodeZeta[a] > 0 ? z : 1 - z;
    double dx = hex8::kNodeXi[a] > 0 ? 1 : -1;
    double dy = hex8::kNodeEta[a] > 0 ? 1 : -1;
    double dz = hex8::kNodeZeta[a] > 0 ? 1 : -1;
    return {dx * fy * fz, fx * dy * fz, fx * fy * dz};
}

template <class F>
double gauss3_cube(F f) {
    const double p[3] = {0.5 * (1 - std::sqrt(0.6)), 0.5, 0.5 * (1 + std::sqrt(0.6))};
    const double w[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    double total = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) total += w[i] * w[j] * w[k] * f(p[i], p[j], p[k]);
    return total;
}

Eigen::MatrixXd oracle_unit_cube_stiffness(const Material& mat) {
    auto d = mat.elasticity();
    Eigen::MatrixXd ke = Eigen::MatrixXd::Zero(24, 24);
    for (int i = 0; i < 24; ++i) {
        for (int j = 0; j < 24; ++j) {
            int a = i / 3, da = i % 3, b = j / 3, db = j % 3;
            ke(i, j) = gauss3_cube([&](double x, double y, double z) {
                Eigen::Vector3d ga = shape_phys_grad(a, x, y, z);
                Eigen::Vector3d gb = shape_phys_grad(b, x, y, z);
                // strain vectors of unit displacements (a, da) and (b, db)
                Vec6 ea = Vec6::Zero(), eb = Vec6::Zero();
                auto fill = [](Vec6& e, int dir, const Eigen::Vector3d& g) {
                    e(dir) += g(dir);
                    if (dir == 1) e(3) += g(2);
                    if (dir == 2) e(3) += g(1);
                    if (dir == 0) e(4) += g(2);
                    if (dir == 2) e(4) += g(0);
                    if (dir == 0) e(5) += g(1);
                    if (dir == 1) e(5) += g(0);
                };
                fill(ea, da, ga);
                fill(eb, db, gb);
                return ea.dot(d * eb);
            });
        }
    }
    return ke;
}

Eigen::MatrixXd oracle_unit_cube_mass(double rho) {
    Eigen::MatrixXd me = Eigen::MatrixXd::Zero(24, 24);
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) {
            double v = gauss3_cube(
                [&](double x, double y, double z) { return shape_phys(a, x, y, z) * shape_phys(b, x, y, z); });
            for (int dcomp = 0; dcomp < 3; ++dcomp) me(3 * a + dcomp, 3 * b + dcomp) = rho * v;
        }
    return me;
}

} // namespace

TEST_CASE("element kinematics: undistorted and affine elements") {
    auto mesh = unit_cube_mesh();
    auto data = element_kinematics(mesh, 0);
    for (const auto& q : data.qp) {
        CHECK((q.jac - 0.5 * Eigen::Matrix3d::Identity()).norm() < 1e-14);
        CHECK(q.det_jac == Approx(0.125).epsilon(1e-14));
    }

    SECTION("scaling x by 2 scales det J") {
        auto scaled = mesh;
        for (auto& p : scaled.nodes) p.x() *= 2.0;
        auto d2 = element_kinematics(scaled, 0);
        for (const auto& q : d2.qp) CHECK(q.det_jac == Approx(0.25).epsilon(1e-14));
    }
}

TEST_CASE("element kinematics: inverted element is reported") {
    auto mesh = unit_cube_mesh();
    std::swap(mesh.nodes[0], mesh.nodes[1]); // tangle the bottom face
    CHECK_THROWS_WITH(element_kinematics(mesh, 0),
                      Catch::Matchers::ContainsSubstring("inverted"));
}

TEST_CASE("linear strain operator annihilates rigid translations") {
    auto mesh = unit_cube_mesh();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.15, 0.15);
    for (auto& p : mesh.nodes)
        p += Vec3(u(rng), u(rng), u(rng));
    REQUIRE(find_inverted_elements(mesh).empty());
    auto data = element_kinematics(mesh, 0);

    for (int dir = 0; dir < 3; ++dir) {
        Vec24 trans = Vec24::Zero();
        for (int a = 0; a < 8; ++a) trans(3 * a + dir) = 1.0;
        for (const auto& q : data.qp) CHECK((q.b_eps * trans).norm() < 1e-12);
    }
}

TEST_CASE("element stiffness annihilates rigid translations (all elements)") {
    auto mesh = extrude(twtest::anchored_strip(), 2 * um, 2, 0.5 * um);
    ElementCache cache(mesh);
    Material mat;
    auto d = mat.elasticity();
    for (int e = 0; e < cache.size(); ++e) {
        auto ke = element_stiffness(cache[e], d);
        double knorm = ke.norm();
        for (int dir = 0; dir < 3; ++dir) {
            Vec24 trans = Vec24::Zero();
            for (int a = 0; a < 8; ++a) trans(3 * a + dir) = 1.0;
            CHECK((ke * trans).norm() < 1e-9 * knorm);
        }
    }
}

TEST_CASE("assembly matches the direct quadrature oracle on one element") {
    auto mesh = unit_cube_mesh(); // bottom face fixed by the anchor rule
    Material mat;
    mat.youngs_modulus = 1.0;
    mat.poisson_ratio = 0.0;
    mat.density = 1.0;
    ElementCache cache(mesh);
    auto sys = assemble_system(mesh, mat, cache);
    REQUIRE(sys.dofs.free_count == 12); // top 4 nodes

    auto ke = oracle_unit_cube_stiffness(mat);
    auto me = oracle_unit_cube_mass(mat.density);

    Eigen::MatrixXd kd = Eigen::MatrixXd(sys.stiffness);
    Eigen::MatrixXd md = Eigen::MatrixXd(sys.mass);
    for (int a = 0; a < 8; ++a)
        for (int da = 0; da < 3; ++da)
            for (int b = 0; b < 8; ++b)
                for (int db = 0; db < 3; ++db) {
                    int gi = sys.dofs(mesh.elements[0][a], da);
                    int gj = sys.dofs(mesh.elements[0][b], db);
                    if (gi < 0 || gj < 0) continue;
                    double ko = ke(3 * a + da, 3 * b + db);
                    double mo = me(3 * a + da, 3 * b + db);
                    CHECK(kd(gi, gj) == Approx(ko).epsilon(1e-12).margin(1e-15));
                    CHECK(md(gi, gj) == Approx(mo).epsilon(1e-12).margin(1e-15));
                }
}

TEST_CASE("assembly: fully fixed element leaves an empty free system") {
    auto mesh = unit_cube_mesh();
    mesh.fixed_nodes = {0, 1, 2, 3, 4, 5, 6, 7};
    ElementCache cache(mesh);
    auto sys = assemble_system(mesh, Material{}, cache);
    CHECK(sys.dofs.free_count == 0);
}

TEST_CASE("assembly invariants on a real mesh") {
    auto mesh = extrude(twtest::anchored_strip(), 2 * um, 2, 0.5 * um);
    Material mat;
    ElementCache cache(mesh);
    auto sys = assemble_system(mesh, mat, cache);

    SECTION("exact symmetry") {
        SparseMat kt = SparseMat(sys.stiffness.transpose());
        SparseMat mt = SparseMat(sys.mass.transpose());
        CHECK((sys.stiffness - kt).norm() == 0.0);
        CHECK((sys.mass - mt).norm() == 0.0);
    }

    SECTION("mass positive definite on random vectors") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> g;
        for (int rep = 0; rep < 5; ++rep) {
            Eigen::VectorXd u(sys.dofs.free_count);
            for (int i = 0; i < u.size(); ++i) u(i) = g(rng);
            CHECK(u.dot(sys.mass * u) > 0.0);
        }
    }

    SECTION("translation energy of element masses equals rho V") {
        double v_expected = mesh_volume(mesh, cache);
        // anchored_strip: 2x3 anchor + 12x1.5 spring, extruded 2 um
        double v_analytic = (2.0 * 3.0 + 12.0 * 1.5) * um * um * 2 * um;
        CHECK(v_expected == Approx(v_analytic).epsilon(1e-12));
        double sum = 0;
        for (int e = 0; e < cache.size(); ++e) {
            auto me = element_mass(cache[e], mat.density);
            Vec24 tx = Vec24::Zero();
            for (int a = 0; a < 8; ++a) tx(3 * a) = 1.0;
            sum += tx.dot(me * tx);
        }
        CHECK(sum == Approx(mat.density * v_analytic).epsilon(1e-10));
    }
}

TEST_CASE("nonlinear strain operator") {
    auto mesh = unit_cube_mesh();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto& p : mesh.nodes)
        p += Vec3(u(rng), u(rng), u(rng));
    auto data = element_kinematics(mesh, 0);
    const auto& q = data.qp[3];

    SECTION("rigid translation has zero gradient and zero operator") {
        Mat3x8 ue;
        for (int a = 0; a < 8; ++a) ue.col(a) = Vec3(0.3, -0.2, 0.9);
        auto h = displacement_gradient(ue, q.dndx);
        CHECK(h.norm() < 1e-12);
        CHECK(nonlinear_strain_matrix(h, q.dndx).norm() < 1e-12);
    }

    SECTION("symmetry property b_eta(a) b = b_eta(b) a") {
        std::normal_distribution<double> g;
        for (int rep = 0; rep < 10; ++rep) {
            Mat3x8 ua, ub;
            for (int a = 0; a < 8; ++a)
                for (int dcomp = 0; dcomp < 3; ++dcomp) {
                    ua(dcomp, a) = g(rng);
                    ub(dcomp, a) = g(rng);
                }
            auto ha = displacement_gradient(ua, q.dndx);
            auto hb = displacement_gradient(ub, q.dndx);
            Vec24 va = Eigen::Map<Vec24>(ua.data());
            Vec24 vb = Eigen::Map<Vec24>(ub.data());
            Vec6 r1 = nonlinear_strain_matrix(ha, q.dndx) * vb;
            Vec6 r2 = nonlinear_strain_matrix(hb, q.dndx) * va;
            CHECK((r1 - r2).norm() < 1e-12 * std::max(1.0, r1.norm()));
            // and the direct evaluation agrees with the operator route
            Vec6 eta = cross_quadratic_strain(ha, hb);
            CHECK((0.5 * r1 - eta).norm() < 1e-12 * std::max(1.0, eta.norm()));
        }
    }

    SECTION("uniaxial stretch gives the quadratic Green-Lagrange term") {
        double c = 0.37;
        Mat3x8 ue = Mat3x8::Zero();
        auto coords = element_coords(mesh, 0);
        for (int a = 0; a < 8; ++a) ue(0, a) = c * coords(a, 0);
        auto h = displacement_gradient(ue, q.dndx);
        CHECK((h - c * (Eigen::Matrix3d() << 1, 0, 0, 0, 0, 0, 0, 0, 0).finished()).norm() < 1e-12);
        Vec6 eta = cross_quadratic_strain(h, h);
        CHECK(eta(0) == Approx(0.5 * c * c).epsilon(1e-12));
        CHECK(eta.tail<5>().norm() < 1e-14);
    }
}

TEST_CASE("strain energy") {
    auto mesh = extrude(twtest::anchored_strip(), 2 * um, 1, 0.5 * um);
    Material mat;
    ElementCache cache(mesh);
    auto sys = assemble_system(mesh, mat, cache);
    int n = sys.dofs.free_count;

    SECTION("zero displacement, zero energy") {
        CHECK(strain_energy(mesh, mat, cache, sys.dofs, Eigen::VectorXd::Zero(n)) == 0.0);
    }

    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    Eigen::VectorXd u(n);
    for (int i = 0; i < n; ++i) u(i) = g(rng);

    SECTION("linear measure equals quadratic form for any amplitude") {
        Eigen::VectorXd big = 1e-3 * u; // huge strains, still exact
        double e_lin = strain_energy(mesh, mat, cache, sys.dofs, big, StrainMeasure::linear);
        double quad = 0.5 * big.dot(sys.stiffness * big);
        CHECK(e_lin == Approx(quad).epsilon(1e-12));
    }

    SECTION("full measure approaches the quadratic form as amplitude shrinks") {
        // U(s u) = (s^2/2) u^T K u + O(s^3): the relative deviation is O(s)
        double dev1 = 0, dev2 = 0;
        for (double s : {1e-9, 1e-10}) {
            Eigen::VectorXd v = s * u;
            double e_full = strain_energy(mesh, mat, cache, sys.dofs, v);
            double quad = 0.5 * v.dot(sys.stiffness * v);
            double dev = std::abs(e_full - quad) / quad;
            if (s == 1e-9)
                dev1 = dev;
            else
                dev2 = dev;
        }
        CHECK(dev2 < 0.2 * dev1); // shrinks linearly with s
        CHECK(dev1 < 1e-4);
    }
}
