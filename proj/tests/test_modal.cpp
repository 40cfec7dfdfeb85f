#include <random>

#include "test_helpers.hpp"
#include "triwave/benchmarks.hpp"
#include "triwave/modal.hpp"

using namespace triwave;
using twtest::um;
using Catch::Approx;

namespace {

SystemMatrices two_dof_system(double k11) {
    SystemMatrices sys;
    sys.stiffness.resize(2, 2);
    sys.mass.resize(2, 2);
    std::vector<Eigen::Triplet<double>> tk = {{0, 0, k11}, {0, 1, -1.0}, {1, 0, -1.0}, {1, 1, 2.0}};
    std::vector<Eigen::Triplet<double>> tm = {{0, 0, 1.0}, {1, 1, 1.0}};
    sys.stiffness.setFromTriplets(tk.begin(), tk.end());
    sys.mass.setFromTriplets(tm.begin(), tm.end());
    sys.dofs.free_count = 2;
    return sys;
}

ExtrudedMesh small_beam() { return benchmarks::clamped_beam(10 * um, 2 * um, 1 * um, 1, 1 * um); }

ModalBasis solve_mesh(const ExtrudedMesh& mesh, int count,
                      EigenSolverKind kind = EigenSolverKind::automatic) {
    ElementCache cache(mesh);
    auto sys = assemble_system(mesh, Material{}, cache);
    auto basis = solve_modes(sys, count, kind);
    basis.mesh_hash = mesh.content_hash();
    return basis;
}

std::vector<TrackedLabel> all_labels(const ModalBasis& basis) {
    std::vector<TrackedLabel> labels;
    for (int i = 0; i < basis.count(); ++i)
        labels.push_back({"m" + std::to_string(i + 1), i, i});
    return labels;
}

} // namespace

TEST_CASE("solve_modes: 2-DOF hand-computed eigenvalues") {
    auto sys = two_dof_system(2.0);
    for (auto kind : {EigenSolverKind::dense, EigenSolverKind::shift_invert}) {
        auto basis = solve_modes(sys, 2, kind);
        CHECK(basis.omega(0) * basis.omega(0) == Approx(1.0).epsilon(1e-10));
        CHECK(basis.omega(1) * basis.omega(1) == Approx(3.0).epsilon(1e-10));
        for (int j = 0; j < 2; ++j)
            CHECK(basis.shapes.col(j).dot(sys.mass * basis.shapes.col(j)) ==
                  Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("solve_modes: sparse path matches the dense oracle below 300 DOFs") {
    auto mesh = small_beam();
    ElementCache cache(mesh);
    auto sys = assemble_system(mesh, Material{}, cache);
    REQUIRE(sys.dofs.free_count <= 300);

    auto dense = solve_modes(sys, 6, EigenSolverKind::dense);
    auto sparse = solve_modes(sys, 6, EigenSolverKind::shift_invert);
    for (int j = 0; j < 6; ++j) {
        CHECK(sparse.frequencies(j) == Approx(dense.frequencies(j)).epsilon(1e-8));
        CHECK((sys.stiffness * sparse.shapes.col(j) -
               sparse.omega(j) * sparse.omega(j) * (sys.mass * sparse.shapes.col(j)))
                  .norm() <= 1e-8 * (sys.stiffness * sparse.shapes.col(j)).norm());
    }
}

TEST_CASE("solve_modes: clamped-clamped beam fundamental vs Euler-Bernoulli") {
    Material mat;
    double length = 40 * um, width = 2 * um, thickness = 3 * um;
    auto mesh = benchmarks::clamped_beam(length, width, thickness, 6, 0.5 * um);
    auto basis = solve_mesh(mesh, 3);
    double analytic = benchmarks::clamped_beam_analytic_f1(mat.youngs_modulus, mat.density, length,
                                                           width, thickness);
    CHECK(std::abs(basis.frequencies(0) - analytic) / analytic < 0.03);
}

TEST_CASE("solve_modes: deterministic across repeated solves") {
    auto mesh = small_beam();
    ElementCache cache(mesh);
    auto sys = assemble_system(mesh, Material{}, cache);
    auto a = solve_modes(sys, 5, EigenSolverKind::shift_invert);
    auto b = solve_modes(sys, 5, EigenSolverKind::shift_invert);
    CHECK(a.frequencies == b.frequencies);
    CHECK(a.shapes == b.shapes);
}

TEST_CASE("modal basis invariants") {
    auto mesh = small_beam();
    ElementCache cache(mesh);
    auto sys = assemble_system(mesh, Material{}, cache);
    auto basis = solve_modes(sys, 6);

    SECTION("frequencies ascend and shapes are M-orthonormal") {
        for (int j = 1; j < basis.count(); ++j)
            CHECK(basis.frequencies(j) >= basis.frequencies(j - 1));
        for (int i = 0; i < basis.count(); ++i)
            for (int j = 0; j < basis.count(); ++j) {
                double mij = basis.shapes.col(i).dot(sys.mass * basis.shapes.col(j));
                if (i == j)
                    CHECK(mij == Approx(1.0).margin(1e-10));
                else if (!basis.is_degenerate(i) && !basis.is_degenerate(j))
                    CHECK(std::abs(mij) < 1e-8);
            }
    }

    SECTION("Cholesky factor identity (R u) . (R v) = u^T M v") {
        std::mt19937_64 rng(17);
        std::normal_distribution<double> g;
        int n = sys.dofs.free_count;
        for (int rep = 0; rep < 5; ++rep) {
            Eigen::VectorXd u(n), v(n);
            for (int i = 0; i < n; ++i) {
                u(i) = g(rng);
                v(i) = g(rng);
            }
            double direct = u.dot(sys.mass * v);
            double via_r = basis.mass_factor->apply(u).col(0).dot(basis.mass_factor->apply(v).col(0));
            CHECK(via_r == Approx(direct).epsilon(1e-10).margin(1e-12));
        }
    }
}

TEST_CASE("track_modes") {
    auto mesh = small_beam();
    auto basis = solve_mesh(mesh, 5);
    auto labels = all_labels(basis);

    SECTION("identity assignment when nothing changed") {
        auto tracked = track_modes(basis, basis, basis, labels);
        for (int i = 0; i < 5; ++i) CHECK(tracked[i].index == i);
    }

    SECTION("swapped modes swap labels") {
        ModalBasis swapped = basis;
        swapped.shapes.col(2).swap(swapped.shapes.col(3));
        std::swap(swapped.frequencies(2), swapped.frequencies(3));
        std::swap(swapped.omega(2), swapped.omega(3));
        auto tracked = track_modes(swapped, basis, basis, labels);
        CHECK(tracked[2].index == 3);
        CHECK(tracked[3].index == 2);
        CHECK(tracked[0].index == 0);
        CHECK(tracked[4].index == 4);
    }

    SECTION("sign flips do not change the assignment") {
        ModalBasis flipped = basis;
        flipped.shapes.col(1) *= -1.0;
        flipped.shapes.col(4) *= -1.0;
        auto tracked = track_modes(flipped, basis, basis, labels);
        for (int i = 0; i < 5; ++i) CHECK(tracked[i].index == i);
    }

    SECTION("unrelated random basis reports a lost mode") {
        ModalBasis junk = basis;
        std::mt19937_64 rng(23);
        std::normal_distribution<double> g;
        for (int i = 0; i < junk.shapes.rows(); ++i)
            for (int j = 0; j < junk.shapes.cols(); ++j) junk.shapes(i, j) = g(rng);
        CHECK_THROWS_WITH(track_modes(junk, basis, basis, labels),
                          Catch::Matchers::ContainsSubstring("lost"));
    }
}
