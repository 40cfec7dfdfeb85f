#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

#include "triwave/material.hpp"
#include "triwave/mesh.hpp"

namespace triwave {

using SparseMat = Eigen::SparseMatrix<double>;
using Mat6x24 = Eigen::Matrix<double, 6, 24>;
using Mat3x8 = Eigen::Matrix<double, 3, 8>;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec24 = Eigen::Matrix<double, 24, 1>;

// Per-quadrature-point kinematics of one element.
struct QuadPoint {
    Mat3x8 dndx;      // spatial shape-function gradients, row k = d/dX_k
    Mat6x24 b_eps;    // linear strain-displacement operator
    Eigen::Matrix3d jac;
    Eigen::Matrix3d jac_inv;
    double det_jac = 0.0;
    double weight = 1.0;
};

struct ElementData {
    std::array<int, 8> nodes;
    std::array<QuadPoint, 8> qp;
};

inline Mat6x24 linear_strain_matrix(const Mat3x8& dndx) {
    Mat6x24 b = Mat6x24::Zero();
    for (int a = 0; a < 8; ++a) {
        double gx = dndx(0, a), gy = dndx(1, a), gz = dndx(2, a);
        int c = 3 * a;
        b(0, c + 0) = gx;
        b(1, c + 1) = gy;
        b(2, c + 2) = gz;
        b(3, c + 1) = gz;
        b(3, c + 2) = gy;
        b(4, c + 0) = gz;
        b(4, c + 2) = gx;
        b(5, c + 0) = gy;
        b(5, c + 1) = gx;
    }
    return b;
}

// Nonlinear strain-displacement operator of the finite (Green-Lagrange)
// theory, bilinear in the displacement gradient H and the shape-function
// gradients: (1/2) b_eta(H_m, dndx) phi_l is the cross quadratic strain of
// fields m and l, and b_eta(phi_a) phi_b = b_eta(phi_b) phi_a.
inline Mat6x24 nonlinear_strain_matrix(const Eigen::Matrix3d& h, const Mat3x8& dndx) {
    Mat6x24 b = Mat6x24::Zero();
    for (int a = 0; a < 8; ++a) {
        double gx = dndx(0, a), gy = dndx(1, a), gz = dndx(2, a);
        for (int j = 0; j < 3; ++j) {
            int c = 3 * a + j;
            double hx = h(j, 0), hy = h(j, 1), hz = h(j, 2);
            b(0, c) = hx * gx;
            b(1, c) = hy * gy;
            b(2, c) = hz * gz;
            b(3, c) = hy * gz + hz * gy;
            b(4, c) = hx * gz + hz * gx;
            b(5, c) = hx * gy + hy * gx;
        }
    }
    return b;
}

// Displacement gradient H(i,k) = du_i/dX_k from the 3x8 nodal block.
inline Eigen::Matrix3d displacement_gradient(const Mat3x8& nodal_u, const Mat3x8& dndx) {
    return nodal_u * dndx.transpose();
}

// Quadratic Green-Lagrange strain of two displacement fields in Voigt form
// (engineering shear): equals (1/2) b_eta(H_m) u_l evaluated directly.
inline Vec6 cross_quadratic_strain(const Eigen::Matrix3d& hm, const Eigen::Matrix3d& hl) {
    Vec6 eta;
    eta(0) = 0.5 * hm.col(0).dot(hl.col(0));
    eta(1) = 0.5 * hm.col(1).dot(hl.col(1));
    eta(2) = 0.5 * hm.col(2).dot(hl.col(2));
    eta(3) = 0.5 * (hm.col(1).dot(hl.col(2)) + hm.col(2).dot(hl.col(1)));
    eta(4) = 0.5 * (hm.col(0).dot(hl.col(2)) + hm.col(2).dot(hl.col(0)));
    eta(5) = 0.5 * (hm.col(0).dot(hl.col(1)) + hm.col(1).dot(hl.col(0)));
    return eta;
}

// Kinematic data at all 8 Gauss points of one element.
inline ElementData element_kinematics(const ExtrudedMesh& mesh, int element) {
    ElementData data;
    data.nodes = mesh.elements[element];
    auto coords = element_coords(mesh, element);
    const auto& pts = hex8::gauss_points();
    Mat3x8 dn_ref;
    for (int p = 0; p < 8; ++p) {
        hex8::shape_gradients(pts[p], dn_ref);
        QuadPoint& q = data.qp[p];
        q.jac = hex8::jacobian(coords, dn_ref);
        q.det_jac = q.jac.determinant();
        if (q.det_jac <= 0.0)
            fail("element_kinematics: element ", element, " inverted at quadrature point ", p,
                 " (det J = ", q.det_jac, ")");
        q.jac_inv = q.jac.inverse();
        q.dndx = q.jac_inv.transpose() * dn_ref;
        q.b_eps = linear_strain_matrix(q.dndx);
        q.weight = 1.0;
    }
    return data;
}

// Kinematics of every element, evaluated in parallel.
class ElementCache {
public:
    ElementCache() = default;
    explicit ElementCache(const ExtrudedMesh& mesh) { build(mesh); }

    void build(const ExtrudedMesh& mesh) {
        data_.resize(mesh.elements.size());
        parallel_blocks(mesh.elements.size(), [&](std::size_t e0, std::size_t e1) {
            for (std::size_t e = e0; e < e1; ++e) data_[e] = element_kinematics(mesh, static_cast<int>(e));
        });
    }

    const ElementData& operator[](int e) const { return data_[e]; }
    int size() const { return static_cast<int>(data_.size()); }

private:
    std::vector<ElementData> data_;
};

// Node*direction -> free-DOF index map; fixed DOFs map to -1.
struct DofMap {
    std::vector<int> index; // size 3 * nodes
    int free_count = 0;

    int operator()(int node, int dir) const { return index[3 * node + dir]; }
};

inline DofMap build_dof_map(const ExtrudedMesh& mesh) {
    DofMap map;
    map.index.assign(3 * mesh.nodes.size(), 0);
    std::vector<char> fixed(mesh.nodes.size(), 0);
    for (int n : mesh.fixed_nodes) fixed[n] = 1;
    int next = 0;
    for (std::size_t n = 0; n < mesh.nodes.size(); ++n)
        for (int d = 0; d < 3; ++d) map.index[3 * n + d] = fixed[n] ? -1 : next++;
    map.free_count = next;
    return map;
}

struct SystemMatrices {
    SparseMat stiffness;
    SparseMat mass;
    DofMap dofs;
};

// Element eigen/displacement gather: fixed DOFs read as zero.
inline Vec24 gather_element_vector(const Eigen::VectorXd& free_vec, const DofMap& dofs,
                                   const std::array<int, 8>& nodes) {
    Vec24 u;
    for (int a = 0; a < 8; ++a)
        for (int d = 0; d < 3; ++d) {
            int g = dofs(nodes[a], d);
            u(3 * a + d) = g >= 0 ? free_vec(g) : 0.0;
        }
    return u;
}

// 3x8 nodal block of the same gather (column a = displacement of node a).
inline Mat3x8 gather_element_block(const Eigen::VectorXd& free_vec, const DofMap& dofs,
                                   const std::array<int, 8>& nodes) {
    Mat3x8 u;
    for (int a = 0; a < 8; ++a)
        for (int d = 0; d < 3; ++d) {
            int g = dofs(nodes[a], d);
            u(d, a) = g >= 0 ? free_vec(g) : 0.0;
        }
    return u;
}

namespace detail {

// Interpolation matrices N(xi) for the consistent mass, fixed per Gauss point.
inline const std::array<Eigen::Matrix<double, 3, 24>, 8>& mass_interpolation() {
    static const std::array<Eigen::Matrix<double, 3, 24>, 8> tables = [] {
        std::array<Eigen::Matrix<double, 3, 24>, 8> t;
        Eigen::Matrix<double, 8, 1> n;
        for (int p = 0; p < 8; ++p) {
            hex8::shape_values(hex8::gauss_points()[p], n);
            t[p].setZero();
            for (int a = 0; a < 8; ++a)
                for (int d = 0; d < 3; ++d) t[p](d, 3 * a + d) = n(a);
        }
        return t;
    }();
    return tables;
}

} // namespace detail

inline Eigen::Matrix<double, 24, 24> element_stiffness(const ElementData& elem,
                                                       const Eigen::Matrix<double, 6, 6>& d) {
    Eigen::Matrix<double, 24, 24> ke = Eigen::Matrix<double, 24, 24>::Zero();
    for (const auto& q : elem.qp) ke += q.b_eps.transpose() * d * q.b_eps * (q.det_jac * q.weight);
    return ke;
}

inline Eigen::Matrix<double, 24, 24> element_mass(const ElementData& elem, double density) {
    Eigen::Matrix<double, 24, 24> me = Eigen::Matrix<double, 24, 24>::Zero();
    const auto& ntab = detail::mass_interpolation();
    for (int p = 0; p < 8; ++p) {
        const auto& q = elem.qp[p];
        me += ntab[p].transpose() * ntab[p] * (density * q.det_jac * q.weight);
    }
    return me;
}

// Assembles K and M on free DOFs with anchors eliminated. Triplets are
// produced per element block in index order, so the result does not depend
// on the thread count; both matrices are symmetrized exactly.
inline SystemMatrices assemble_system(const ExtrudedMesh& mesh, const Material& material,
                                      const ElementCache& cache) {
    require(!mesh.fixed_nodes.empty(), "assemble_system: fixedNodeSet is empty");
    SystemMatrices sys;
    sys.dofs = build_dof_map(mesh);
    int n = sys.dofs.free_count;

    const auto d = material.elasticity();
    std::size_t ne = mesh.elements.size();
    std::vector<Eigen::Matrix<double, 24, 24>> ke(ne), me(ne);
    parallel_blocks(ne, [&](std::size_t e0, std::size_t e1) {
        for (std::size_t e = e0; e < e1; ++e) {
            ke[e] = element_stiffness(cache[static_cast<int>(e)], d);
            me[e] = element_mass(cache[static_cast<int>(e)], material.density);
        }
    });

    std::vector<Eigen::Triplet<double>> tk, tm;
    tk.reserve(ne * 24 * 24 / 2);
    tm.reserve(ne * 24 * 24 / 2);
    for (std::size_t e = 0; e < ne; ++e) {
        const auto& nodes = mesh.elements[e];
        int g[24];
        for (int a = 0; a < 8; ++a)
            for (int dcomp = 0; dcomp < 3; ++dcomp) g[3 * a + dcomp] = sys.dofs(nodes[a], dcomp);
        for (int i = 0; i < 24; ++i) {
            if (g[i] < 0) continue;
            for (int j = 0; j < 24; ++j) {
                if (g[j] < 0) continue;
                tk.emplace_back(g[i], g[j], ke[e](i, j));
                tm.emplace_back(g[i], g[j], me[e](i, j));
            }
        }
    }
    sys.stiffness.resize(n, n);
    sys.mass.resize(n, n);
    sys.stiffness.setFromTriplets(tk.begin(), tk.end());
    sys.mass.setFromTriplets(tm.begin(), tm.end());
    // enforce exact symmetry
    sys.stiffness = 0.5 * (SparseMat(sys.stiffness.transpose()) + sys.stiffness);
    sys.mass = 0.5 * (SparseMat(sys.mass.transpose()) + sys.mass);
    return sys;
}

enum class StrainMeasure { linear, green_lagrange };

// Strain energy (1/2) integral of S : E over the undeformed body, evaluated
// with the assembly quadrature. With the full Green-Lagrange measure the
// result is an exact quartic polynomial in the displacement amplitudes; the
// linear measure reproduces (1/2) u^T K u and serves as a cross-check.
inline double strain_energy(const ExtrudedMesh& mesh, const Material& material,
                            const ElementCache& cache, const DofMap& dofs,
                            const Eigen::VectorXd& u,
                            StrainMeasure measure = StrainMeasure::green_lagrange) {
    const auto d = material.elasticity();
    return parallel_sum(mesh.elements.size(), [&](std::size_t e) {
        const ElementData& elem = cache[static_cast<int>(e)];
        Mat3x8 ue = gather_element_block(u, dofs, elem.nodes);
        Vec24 uv = Eigen::Map<const Vec24>(ue.data());
        double energy = 0.0;
        for (const auto& q : elem.qp) {
            Vec6 strain = q.b_eps * uv;
            if (measure == StrainMeasure::green_lagrange) {
                Eigen::Matrix3d h = displacement_gradient(ue, q.dndx);
                strain += cross_quadratic_strain(h, h);
            }
            energy += 0.5 * strain.dot(d * strain) * q.det_jac * q.weight;
        }
        return energy;
    });
}

// Total mass of the unconstrained body: x-translation energy of M extended
// over fixed DOFs equals rho * V; used by tests and mass sanity checks.
inline double mesh_volume(const ExtrudedMesh& mesh, const ElementCache& cache) {
    return parallel_sum(mesh.elements.size(), [&](std::size_t e) {
        double v = 0.0;
        for (const auto& q : cache[static_cast<int>(e)].qp) v += q.det_jac * q.weight;
        return v;
    });
}

} // namespace triwave
