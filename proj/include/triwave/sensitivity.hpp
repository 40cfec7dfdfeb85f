#pragma once

#include <Eigen/SparseLU>
#include <functional>
#include <memory>

#include "triwave/coupling.hpp"
#include "triwave/morph.hpp"

namespace triwave {

// ---------------------------------------------------------------------------
// Geometric sensitivities through the isoparametric map. For a parameter j
// the node velocities are the (constant) morph column; per quadrature point
//   dJ      = sum_a dX_a (grad_ref N_a)^T
//   d det J = det J * tr(J^-1 dJ)
//   d dndx  = -J^-T dJ^T dndx
// and the strain operator and element matrix derivatives follow.

struct QpGeomSens {
    Mat3x8 d_dndx;
    double d_det = 0;
};

struct ElementGeomSens {
    int element = -1;
    Eigen::Matrix<double, 8, 3> node_velocity; // dX_a/dp_j, z rows zero
    std::array<QpGeomSens, 8> qp;
};

// Element-level matrix sensitivities of one parameter, restricted to the
// support of its morph column.
struct ParameterSensitivity {
    int parameter = -1;
    std::vector<ElementGeomSens> geometry;
    std::vector<Eigen::Matrix<double, 24, 24>> dk;
    std::vector<Eigen::Matrix<double, 24, 24>> dm;
};

// Per-design context resolving morph columns into element supports.
class ShapeSensitivity {
public:
    ShapeSensitivity(const ExtrudedMesh& mesh, const Material& material, const ElementCache& cache,
                     const MorphOperator& morph)
        : mesh_(mesh), material_(material), cache_(cache), morph_(morph) {
        std::vector<std::vector<int>> node_cells(mesh.nodes_per_plane);
        for (int c = 0; c < mesh.cells_per_layer; ++c)
            for (int k = 0; k < 4; ++k) node_cells[mesh.cells2d[c][k]].push_back(c);
        support_.resize(morph.parameter_count());
        for (int j = 0; j < morph.parameter_count(); ++j) {
            std::set<int> cells;
            for (const auto& t : morph.column(j))
                for (int c : node_cells[t.node2d]) cells.insert(c);
            for (int c : cells)
                for (int l = 0; l < mesh.layers; ++l)
                    support_[j].push_back(l * mesh.cells_per_layer + c);
            std::sort(support_[j].begin(), support_[j].end());
        }
    }

    const std::vector<int>& support(int j) const { return support_[j]; }
    int parameter_count() const { return morph_.parameter_count(); }
    const MorphOperator& morph() const { return morph_; }
    const ExtrudedMesh& mesh() const { return mesh_; }

    ParameterSensitivity matrix_sensitivity(int j, bool with_matrices = true) const {
        ParameterSensitivity out;
        out.parameter = j;
        std::map<int, Vec2> velocity;
        for (const auto& t : morph_.column(j)) velocity[t.node2d] = t.displacement;

        const auto d = material_.elasticity();
        const auto& ntab = detail::mass_interpolation();
        Mat3x8 dn_ref;
        for (int e : support_[j]) {
            const ElementData& elem = cache_[e];
            ElementGeomSens gs;
            gs.element = e;
            gs.node_velocity.setZero();
            for (int a = 0; a < 8; ++a) {
                auto it = velocity.find(mesh_.node2d_of(elem.nodes[a]));
                if (it != velocity.end()) {
                    gs.node_velocity(a, 0) = it->second.x();
                    gs.node_velocity(a, 1) = it->second.y();
                }
            }
            const auto& pts = hex8::gauss_points();
            for (int p = 0; p < 8; ++p) {
                const QuadPoint& q = elem.qp[p];
                hex8::shape_gradients(pts[p], dn_ref);
                Eigen::Matrix3d djac = (dn_ref * gs.node_velocity).transpose();
                gs.qp[p].d_det = q.det_jac * (q.jac_inv * djac).trace();
                gs.qp[p].d_dndx = -q.jac_inv.transpose() * djac.transpose() * q.dndx;
            }
            if (with_matrices) {
                Eigen::Matrix<double, 24, 24> dke = Eigen::Matrix<double, 24, 24>::Zero();
                Eigen::Matrix<double, 24, 24> dme = Eigen::Matrix<double, 24, 24>::Zero();
                for (int p = 0; p < 8; ++p) {
                    const QuadPoint& q = elem.qp[p];
                    Mat6x24 dbeps = linear_strain_matrix(gs.qp[p].d_dndx);
                    Eigen::Matrix<double, 24, 24> sym_part =
                        dbeps.transpose() * d * q.b_eps * (q.det_jac * q.weight);
                    dke += sym_part + sym_part.transpose() +
                           q.b_eps.transpose() * d * q.b_eps * (gs.qp[p].d_det * q.weight);
                    dme += ntab[p].transpose() * ntab[p] *
                           (material_.density * gs.qp[p].d_det * q.weight);
                }
                out.dk.push_back(dke);
                out.dm.push_back(dme);
            }
            out.geometry.push_back(std::move(gs));
        }
        return out;
    }

private:
    const ExtrudedMesh& mesh_;
    const Material& material_;
    const ElementCache& cache_;
    const MorphOperator& morph_;
    std::vector<std::vector<int>> support_;
};

// d(omega_i^2)/dp for mass-normalized modes given global matrix derivatives.
inline double omega2_sensitivity(const Eigen::VectorXd& phi, double omega2, const SparseMat& dk,
                                 const SparseMat& dm) {
    return phi.dot(dk * phi) - omega2 * phi.dot(dm * phi);
}

// Same through element-level sensitivities of one parameter.
inline double omega2_sensitivity(const ExtrudedMesh& mesh, const DofMap& dofs,
                                 const ModalBasis& basis, int mode,
                                 const ParameterSensitivity& ps) {
    double acc = 0;
    double omega2 = basis.omega(mode) * basis.omega(mode);
    for (std::size_t k = 0; k < ps.geometry.size(); ++k) {
        const auto& nodes = mesh.elements[ps.geometry[k].element];
        Vec24 pe = gather_element_vector(basis.shapes.col(mode), dofs, nodes);
        acc += pe.dot(ps.dk[k] * pe) - omega2 * pe.dot(ps.dm[k] * pe);
    }
    return acc;
}

// df_i/dp_j = d(omega^2)/dp / (8 pi^2 f_i).
inline double frequency_sensitivity(const ExtrudedMesh& mesh, const DofMap& dofs,
                                    const ModalBasis& basis, int mode,
                                    const ParameterSensitivity& ps) {
    require(!basis.is_degenerate(mode), "frequency_sensitivity: mode ", mode,
            " is degenerate (repeated eigenvalue)");
    return omega2_sensitivity(mesh, dofs, basis, mode, ps) /
           (8.0 * kPi * kPi * basis.frequencies(mode));
}

// ---------------------------------------------------------------------------
// Partial derivatives of a scalar c(p, f_i, phi_i): everything the adjoint
// method needs. dp_explicit accumulates the explicit geometric dependence for
// one parameter from its element-level sensitivities (null when absent).

struct ScalarPartials {
    double value = 0;
    std::vector<int> modes;
    std::vector<Eigen::VectorXd> dphi; // per involved mode
    std::vector<double> dfreq;         // per involved mode
    std::function<double(const ParameterSensitivity&)> dp_explicit;
};

// Partials of one 3-wave coefficient alpha(n, m, l) at fixed design:
// d alpha/df_i = 0, d alpha/dphi_i gathers the three delta-selected element
// terms, and the explicit d alpha/dp_j runs over the quadrature of the
// parameter's support elements.
inline ScalarPartials alpha_partials(const ExtrudedMesh& mesh, const Material& material,
                                     const ElementCache& cache, const DofMap& dofs,
                                     const ModalBasis& basis, int n, int m, int l) {
    require(basis.mesh_hash == mesh.content_hash(),
            "alpha_partials: modal basis is stale for this mesh (hash mismatch)");
    ScalarPartials out;
    out.modes = {n};
    if (std::find(out.modes.begin(), out.modes.end(), m) == out.modes.end()) out.modes.push_back(m);
    if (std::find(out.modes.begin(), out.modes.end(), l) == out.modes.end()) out.modes.push_back(l);
    out.dfreq.assign(out.modes.size(), 0.0); // alpha has no frequency dependence
    out.dphi.assign(out.modes.size(), Eigen::VectorXd::Zero(basis.shapes.rows()));

    const auto d = material.elasticity();
    auto slot_of = [&](int mode) {
        return static_cast<int>(std::find(out.modes.begin(), out.modes.end(), mode) -
                                out.modes.begin());
    };

    out.value = 0;
    for (int e = 0; e < cache.size(); ++e) {
        const ElementData& elem = cache[e];
        Mat3x8 pn = gather_element_block(basis.shapes.col(n), dofs, elem.nodes);
        Mat3x8 pm = gather_element_block(basis.shapes.col(m), dofs, elem.nodes);
        Mat3x8 pl = gather_element_block(basis.shapes.col(l), dofs, elem.nodes);
        Vec24 g_n = Vec24::Zero(), g_m = Vec24::Zero(), g_l = Vec24::Zero();
        for (const auto& q : elem.qp) {
            Eigen::Matrix3d hn = displacement_gradient(pn, q.dndx);
            Eigen::Matrix3d hm = displacement_gradient(pm, q.dndx);
            Eigen::Matrix3d hl = displacement_gradient(pl, q.dndx);
            Vec6 eps_n = detail::linear_strain_from_gradient(hn);
            Vec6 eta = cross_quadratic_strain(hm, hl);
            double scale = q.det_jac * q.weight;
            out.value += eps_n.dot(d * eta) * scale;
            g_n += q.b_eps.transpose() * (d * eta) * scale;
            Vec6 d_eps = d * eps_n;
            g_m += 0.5 * nonlinear_strain_matrix(hl, q.dndx).transpose() * d_eps * scale;
            g_l += 0.5 * nonlinear_strain_matrix(hm, q.dndx).transpose() * d_eps * scale;
        }
        auto scatter = [&](int slot, const Vec24& ge) {
            auto& dst = out.dphi[slot];
            for (int a = 0; a < 8; ++a)
                for (int dir = 0; dir < 3; ++dir) {
                    int g = dofs(elem.nodes[a], dir);
                    if (g >= 0) dst(g) += ge(3 * a + dir);
                }
        };
        scatter(slot_of(n), g_n);
        scatter(slot_of(m), g_m);
        scatter(slot_of(l), g_l);
    }

    out.dp_explicit = [&mesh, &material, &cache, &dofs, &basis, n, m, l,
                       d](const ParameterSensitivity& ps) {
        double acc = 0;
        for (const auto& gs : ps.geometry) {
            const ElementData& elem = cache[gs.element];
            Mat3x8 pn = gather_element_block(basis.shapes.col(n), dofs, elem.nodes);
            Mat3x8 pm = gather_element_block(basis.shapes.col(m), dofs, elem.nodes);
            Mat3x8 pl = gather_element_block(basis.shapes.col(l), dofs, elem.nodes);
            for (int p = 0; p < 8; ++p) {
                const QuadPoint& q = elem.qp[p];
                Eigen::Matrix3d hn = displacement_gradient(pn, q.dndx);
                Eigen::Matrix3d hm = displacement_gradient(pm, q.dndx);
                Eigen::Matrix3d hl = displacement_gradient(pl, q.dndx);
                Eigen::Matrix3d dhn = displacement_gradient(pn, gs.qp[p].d_dndx);
                Eigen::Matrix3d dhm = displacement_gradient(pm, gs.qp[p].d_dndx);
                Eigen::Matrix3d dhl = displacement_gradient(pl, gs.qp[p].d_dndx);
                Vec6 eps_n = detail::linear_strain_from_gradient(hn);
                Vec6 d_eps_n = detail::linear_strain_from_gradient(dhn);
                Vec6 eta = cross_quadratic_strain(hm, hl);
                Vec6 d_eta = cross_quadratic_strain(dhm, hl) + cross_quadratic_strain(hm, dhl);
                acc += (d_eps_n.dot(d * eta) + eps_n.dot(d * d_eta)) * q.det_jac * q.weight;
                acc += eps_n.dot(d * eta) * gs.qp[p].d_det * q.weight;
            }
        }
        return acc;
    };
    return out;
}

// Electrode-region x/y DOF masks of the drive-mode shape constraint.
struct ElectrodeMask {
    std::vector<int> x_dofs;
    std::vector<int> y_dofs;
};

inline ElectrodeMask electrode_mask(const ExtrudedMesh& mesh, const DofMap& dofs,
                                    const std::string& region_tag = "electrode") {
    auto it = mesh.regions.find(region_tag);
    require(it != mesh.regions.end(), "electrode_mask: mesh has no region '", region_tag, "'");
    std::set<int> nodes;
    for (int e : it->second)
        for (int a = 0; a < 8; ++a) nodes.insert(mesh.elements[e][a]);
    ElectrodeMask mask;
    for (int node : nodes) {
        if (dofs(node, 0) >= 0) mask.x_dofs.push_back(dofs(node, 0));
        if (dofs(node, 1) >= 0) mask.y_dofs.push_back(dofs(node, 1));
    }
    require(!mask.y_dofs.empty(), "electrode_mask: region has no free y DOFs");
    return mask;
}

// Ratio ||phi_x|| / ||phi_y|| over the electrode DOFs and its partials. The
// ratio has no explicit frequency or geometry dependence; the gradient w.r.t.
// the mode is masked outside the electrode region. The x-norm is floored to
// keep the 0/0 limit of a perfectly y-directed mode well defined (gradient
// taken as zero there).
inline ScalarPartials eigvec_ratio_partials(const ModalBasis& basis, int drive_mode,
                                            const ElectrodeMask& mask) {
    const Eigen::VectorXd& phi = basis.shapes.col(drive_mode);
    double nx2 = 0, ny2 = 0;
    for (int g : mask.x_dofs) nx2 += phi(g) * phi(g);
    for (int g : mask.y_dofs) ny2 += phi(g) * phi(g);
    double nx = std::sqrt(nx2), ny = std::sqrt(ny2);
    require(ny > 1e-30, "eigvec ratio: drive mode has no y content in the electrode region");

    ScalarPartials out;
    out.modes = {drive_mode};
    out.dfreq = {0.0};
    out.value = nx / ny;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(basis.shapes.rows());
    if (nx > 1e-30) {
        for (int g : mask.x_dofs) grad(g) += phi(g) / (nx * ny);
        for (int g : mask.y_dofs) grad(g) -= phi(g) * nx / (ny * ny * ny);
    }
    out.dphi = {std::move(grad)};
    return out;
}

// ---------------------------------------------------------------------------
// Adjoint engine (Nelson's method). For each involved mode i of a scalar c:
//   eta_i = -phi_i^T dc/dphi_i
//   (K - omega_i^2 M) lambda_i = -dc/dphi_i - eta_i M phi_i
//   phi_i^T M lambda_i = dc/df_i / (4 pi omega_i)
// The singular system is solved by pinning the DOF of largest |phi_i|: the
// pinned factorization is cached and shared by every scalar involving the
// same mode. The total gradient follows from
//   dc/dp_j = dc/dp_j|expl + sum_i [lambda_i^T (dK - omega_i^2 dM) phi_i
//                                   + (eta_i/2) phi_i^T dM phi_i].

class AdjointEngine {
public:
    AdjointEngine(const ExtrudedMesh& mesh, const SystemMatrices& sys, const ModalBasis& basis,
                  const ShapeSensitivity& shape)
        : mesh_(mesh), sys_(sys), basis_(basis), shape_(shape) {}

    struct AdjointPair {
        Eigen::VectorXd lambda;
        double eta = 0;
    };

    // Adjoint variables of one scalar for one involved mode.
    AdjointPair solve_adjoint(const ScalarPartials& c, std::size_t slot) {
        int mode = c.modes[slot];
        require(!basis_.is_degenerate(mode), "adjoint: mode ", mode,
                " has a repeated eigenvalue; refusing to differentiate");
        const Eigen::VectorXd& phi = basis_.shapes.col(mode);

        AdjointPair pair;
        pair.eta = -phi.dot(c.dphi[slot]);
        Eigen::VectorXd rhs = -c.dphi[slot] - pair.eta * (sys_.mass * phi);
        // orthogonality cosine against the mode direction
        double scale = phi.norm() * std::max(rhs.norm(), 1e-300);
        require(std::abs(phi.dot(rhs)) <= 1e-9 * scale,
                "adjoint: right-hand side not orthogonal to the mode (cosine ",
                std::abs(phi.dot(rhs)) / scale, ")");

        double target = c.dfreq[slot] / (4.0 * kPi * basis_.omega(mode));
        pair.lambda = nelson_solve(mode, rhs, target);
        return pair;
    }

    // Gradient rows for a batch of scalars; matrix sensitivities per
    // parameter are computed once and consumed by every row.
    Eigen::MatrixXd gradients(const std::vector<ScalarPartials>& scalars) {
        int np = shape_.parameter_count();
        int rows = static_cast<int>(scalars.size());
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, np);

        std::vector<std::vector<AdjointPair>> adjoints(scalars.size());
        for (std::size_t r = 0; r < scalars.size(); ++r)
            for (std::size_t s = 0; s < scalars[r].modes.size(); ++s)
                adjoints[r].push_back(solve_adjoint(scalars[r], s));

        for (int j = 0; j < np; ++j) {
            auto ps = shape_.matrix_sensitivity(j);
            for (std::size_t r = 0; r < scalars.size(); ++r) {
                double g = scalars[r].dp_explicit ? scalars[r].dp_explicit(ps) : 0.0;
                for (std::size_t s = 0; s < scalars[r].modes.size(); ++s) {
                    int mode = scalars[r].modes[s];
                    double omega2 = basis_.omega(mode) * basis_.omega(mode);
                    const auto& pair = adjoints[r][s];
                    for (std::size_t k = 0; k < ps.geometry.size(); ++k) {
                        const auto& nodes = mesh_.elements[ps.geometry[k].element];
                        Vec24 pe = gather_element_vector(basis_.shapes.col(mode), sys_.dofs, nodes);
                        Vec24 le = gather_element_vector(pair.lambda, sys_.dofs, nodes);
                        g += le.dot(ps.dk[k] * pe) - omega2 * le.dot(ps.dm[k] * pe);
                        g += 0.5 * pair.eta * pe.dot(ps.dm[k] * pe);
                    }
                }
                out(r, j) = g;
            }
        }
        return out;
    }

    Eigen::VectorXd gradient(const ScalarPartials& c) {
        return gradients({c}).row(0).transpose();
    }

    // (K - omega_i^2 M) lambda = rhs subject to phi^T M lambda = target.
    Eigen::VectorXd nelson_solve(int mode, const Eigen::VectorXd& rhs, double target) {
        auto& f = factor(mode);
        Eigen::VectorXd pinned_rhs = rhs;
        pinned_rhs(f.pivot) = 0.0;
        Eigen::VectorXd v = f.lu.solve(pinned_rhs);
        require(f.lu.info() == Eigen::Success, "nelson: pinned solve failed for mode ", mode);

        const Eigen::VectorXd& phi = basis_.shapes.col(mode);
        double s = target - phi.dot(sys_.mass * v);
        Eigen::VectorXd lambda = v + s * phi;

        // post-checks on both defining equations
        double omega2 = basis_.omega(mode) * basis_.omega(mode);
        Eigen::VectorXd resid = sys_.stiffness * lambda - omega2 * (sys_.mass * lambda) - rhs;
        double scale = std::max(rhs.norm(), 1e-300);
        require(resid.norm() <= 1e-8 * std::max(scale, lambda.norm() * omega2),
                "nelson: adjoint system residual ", resid.norm() / scale, " exceeds 1e-8");
        double lambda_m = std::sqrt(std::max(lambda.dot(sys_.mass * lambda), 0.0));
        require(std::abs(phi.dot(sys_.mass * lambda) - target) <= 1e-10 * std::max(lambda_m, 1e-300),
                "nelson: mass-projection constraint violated");
        return lambda;
    }

private:
    struct PinnedFactor {
        Eigen::SparseLU<SparseMat> lu;
        int pivot = -1;
    };

    PinnedFactor& factor(int mode) {
        auto it = factors_.find(mode);
        if (it != factors_.end()) return *it->second;

        require(!basis_.is_degenerate(mode), "nelson: mode ", mode,
                " has a repeated eigenvalue; refusing to differentiate");
        auto f = std::make_unique<PinnedFactor>();
        const Eigen::VectorXd& phi = basis_.shapes.col(mode);
        int pivot = 0;
        double best = 0;
        for (int i = 0; i < phi.size(); ++i)
            if (std::abs(phi(i)) > best) {
                best = std::abs(phi(i));
                pivot = i;
            }
        f->pivot = pivot;

        double omega2 = basis_.omega(mode) * basis_.omega(mode);
        SparseMat a = sys_.stiffness - omega2 * sys_.mass;
        double diag_scale = std::abs(a.coeff(pivot, pivot));
        if (diag_scale == 0) diag_scale = 1.0;

        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(a.nonZeros() + 1);
        for (int k = 0; k < a.outerSize(); ++k)
            for (SparseMat::InnerIterator iter(a, k); iter; ++iter) {
                if (iter.row() == pivot || iter.col() == pivot) continue;
                trip.emplace_back(iter.row(), iter.col(), iter.value());
            }
        trip.emplace_back(pivot, pivot, diag_scale);
        SparseMat pinned(a.rows(), a.cols());
        pinned.setFromTriplets(trip.begin(), trip.end());

        f->lu.compute(pinned);
        require(f->lu.info() == Eigen::Success,
                "nelson: factorization of the pinned system failed for mode ", mode,
                " (truly degenerate?)");
        auto [pos, inserted] = factors_.emplace(mode, std::move(f));
        return *pos->second;
    }

    const ExtrudedMesh& mesh_;
    const SystemMatrices& sys_;
    const ModalBasis& basis_;
    const ShapeSensitivity& shape_;
    std::map<int, std::unique_ptr<PinnedFactor>> factors_;
};

} // namespace triwave
