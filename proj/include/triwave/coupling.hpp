#pragma once

#include <array>
#include <map>
#include <vector>

#include "triwave/modal.hpp"

namespace triwave {

using Triple = std::array<int, 3>;

// Fingerprint binding a modal basis to the mesh it was solved on; coupling
// values computed against a stale basis are rejected by this hash.
inline std::uint64_t basis_identity(const ModalBasis& basis) {
    Fnv1a h;
    h.update(static_cast<std::int64_t>(basis.mesh_hash));
    for (int i = 0; i < basis.count(); ++i) h.update(basis.frequencies(i));
    for (int j = 0; j < basis.shapes.cols(); ++j)
        for (int i = 0; i < basis.shapes.rows(); ++i) h.update(basis.shapes(i, j));
    return h.digest();
}

// Sparse collection of 3-wave coefficients. Keys are canonical in the last
// two slots (the nonlinear strain is symmetric in them), so alpha(n, m, l)
// and alpha(n, l, m) are the same stored value.
struct CouplingTensor {
    std::map<Triple, double> entries;
    std::uint64_t basis_hash = 0;

    static Triple canonical(int n, int m, int l) { return {n, std::min(m, l), std::max(m, l)}; }

    bool has(int n, int m, int l) const { return entries.count(canonical(n, m, l)) > 0; }

    double at(int n, int m, int l) const {
        auto it = entries.find(canonical(n, m, l));
        if (it == entries.end())
            fail("coupling tensor is missing alpha(", n, ", ", m, ", ", l, ")");
        return it->second;
    }
};

namespace detail {

// Per-quadrature-point mode data reused across the triples of one element.
struct ModeStrains {
    Eigen::Matrix3d grad;
    Vec6 eps;
};

inline Vec6 linear_strain_from_gradient(const Eigen::Matrix3d& h) {
    Vec6 e;
    e(0) = h(0, 0);
    e(1) = h(1, 1);
    e(2) = h(2, 2);
    e(3) = h(1, 2) + h(2, 1);
    e(4) = h(0, 2) + h(2, 0);
    e(5) = h(0, 1) + h(1, 0);
    return e;
}

} // namespace detail

// Alpha contributions of every element for one mode triple:
//   alpha_e = sum_p eps_n^T D eta_(m,l) det(J) W_p.
inline Eigen::VectorXd alpha_per_element(const ExtrudedMesh& mesh, const Material& material,
                                         const ElementCache& cache, const DofMap& dofs,
                                         const ModalBasis& basis, int n, int m, int l) {
    require(n >= 0 && n < basis.count() && m >= 0 && m < basis.count() && l >= 0 &&
                l < basis.count(),
            "alpha: mode index out of range");
    require(basis.mesh_hash == mesh.content_hash(),
            "alpha: modal basis is stale for this mesh (hash mismatch)");
    const auto d = material.elasticity();
    Eigen::VectorXd per_element(mesh.elements.size());
    parallel_blocks(mesh.elements.size(), [&](std::size_t e0, std::size_t e1) {
        for (std::size_t e = e0; e < e1; ++e) {
            const ElementData& elem = cache[static_cast<int>(e)];
            Mat3x8 pn = gather_element_block(basis.shapes.col(n), dofs, elem.nodes);
            Mat3x8 pm = gather_element_block(basis.shapes.col(m), dofs, elem.nodes);
            Mat3x8 pl = gather_element_block(basis.shapes.col(l), dofs, elem.nodes);
            double acc = 0;
            for (const auto& q : elem.qp) {
                Eigen::Matrix3d hn = displacement_gradient(pn, q.dndx);
                Eigen::Matrix3d hm = displacement_gradient(pm, q.dndx);
                Eigen::Matrix3d hl = displacement_gradient(pl, q.dndx);
                Vec6 eps_n = detail::linear_strain_from_gradient(hn);
                Vec6 eta = cross_quadratic_strain(hm, hl);
                acc += eps_n.dot(d * eta) * q.det_jac * q.weight;
            }
            per_element(e) = acc;
        }
    });
    return per_element;
}

// Batch of coefficients in one element sweep with deterministic block sums.
inline CouplingTensor compute_coupling(const ExtrudedMesh& mesh, const Material& material,
                                       const ElementCache& cache, const DofMap& dofs,
                                       const ModalBasis& basis, const std::vector<Triple>& triples) {
    require(basis.mesh_hash == mesh.content_hash(),
            "compute_coupling: modal basis is stale for this mesh (hash mismatch)");

    std::vector<Triple> canon;
    std::vector<int> modes;
    for (const auto& t : triples) {
        for (int idx : t)
            require(idx >= 0 && idx < basis.count(), "compute_coupling: mode index ", idx,
                    " out of range");
        Triple c = CouplingTensor::canonical(t[0], t[1], t[2]);
        if (std::find(canon.begin(), canon.end(), c) == canon.end()) canon.push_back(c);
        for (int idx : t)
            if (std::find(modes.begin(), modes.end(), idx) == modes.end()) modes.push_back(idx);
    }
    std::sort(modes.begin(), modes.end());
    auto mode_slot = [&](int idx) {
        return static_cast<int>(std::find(modes.begin(), modes.end(), idx) - modes.begin());
    };

    const auto d = material.elasticity();
    std::size_t ne = mesh.elements.size();
    const std::size_t block = 256;
    std::size_t nblocks = (ne + block - 1) / block;
    Eigen::MatrixXd partial = Eigen::MatrixXd::Zero(static_cast<int>(canon.size()),
                                                    static_cast<int>(nblocks));

    parallel_blocks(
        ne,
        [&](std::size_t e0, std::size_t e1) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<int>(canon.size()));
            std::vector<Mat3x8> nodal(modes.size());
            std::vector<detail::ModeStrains> qp_modes(modes.size());
            for (std::size_t e = e0; e < e1; ++e) {
                const ElementData& elem = cache[static_cast<int>(e)];
                for (std::size_t s = 0; s < modes.size(); ++s)
                    nodal[s] = gather_element_block(basis.shapes.col(modes[s]), dofs, elem.nodes);
                for (const auto& q : elem.qp) {
                    for (std::size_t s = 0; s < modes.size(); ++s) {
                        qp_modes[s].grad = displacement_gradient(nodal[s], q.dndx);
                        qp_modes[s].eps = detail::linear_strain_from_gradient(qp_modes[s].grad);
                    }
                    double scale = q.det_jac * q.weight;
                    for (std::size_t c = 0; c < canon.size(); ++c) {
                        const auto& [tn, tm, tl] = canon[c];
                        Vec6 eta = cross_quadratic_strain(qp_modes[mode_slot(tm)].grad,
                                                          qp_modes[mode_slot(tl)].grad);
                        acc(c) += qp_modes[mode_slot(tn)].eps.dot(d * eta) * scale;
                    }
                }
            }
            partial.col(static_cast<int>(e0 / block)) = acc;
        },
        block);

    CouplingTensor tensor;
    tensor.basis_hash = basis_identity(basis);
    for (std::size_t c = 0; c < canon.size(); ++c) {
        double sum = 0;
        for (int b = 0; b < partial.cols(); ++b) sum += partial(static_cast<int>(c), b);
        tensor.entries[canon[c]] = sum;
    }
    return tensor;
}

inline double alpha(const ExtrudedMesh& mesh, const Material& material, const ElementCache& cache,
                    const DofMap& dofs, const ModalBasis& basis, int n, int m, int l) {
    auto tensor = compute_coupling(mesh, material, cache, dofs, basis, {{n, m, l}});
    return tensor.at(n, m, l);
}

// alpha~(n,m,l): all couplings proportional to q_m q_l in the equation of
// motion of mode n.
inline double alpha_tilde(const CouplingTensor& tensor, int n, int m, int l) {
    return tensor.at(n, m, l) + tensor.at(l, n, m) + tensor.at(m, l, n);
}

// alpha-bar(d,a,b): every 3-wave coupling proportional to q_d q_a q_b.
inline double alpha_bar(const CouplingTensor& tensor, int d, int a, int b) {
    return alpha_tilde(tensor, d, a, b) + alpha_tilde(tensor, d, b, a);
}

inline void add_tilde_triples(std::vector<Triple>& triples, int n, int m, int l) {
    triples.push_back({n, m, l});
    triples.push_back({l, n, m});
    triples.push_back({m, l, n});
}

inline void add_bar_triples(std::vector<Triple>& triples, int d, int a, int b) {
    add_tilde_triples(triples, d, a, b);
    add_tilde_triples(triples, d, b, a);
}

} // namespace triwave
