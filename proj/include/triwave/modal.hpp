#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "triwave/fem.hpp"

namespace triwave {

// Cholesky factor R with M = R^T R (permutation folded in); applying R turns
// mass-weighted inner products into plain dot products across meshes that
// share a DOF layout.
class MassCholesky {
public:
    explicit MassCholesky(const SparseMat& mass) {
        llt_.compute(mass);
        require(llt_.info() == Eigen::Success, "mass matrix Cholesky failed (M not SPD?)");
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& v) const {
        Eigen::MatrixXd pv = llt_.permutationP() * v;
        return llt_.matrixL().transpose() * pv;
    }

private:
    Eigen::SimplicialLLT<SparseMat> llt_;
};

// Mass-normalized modes of (K - omega^2 M) phi = 0, ascending frequencies.
struct ModalBasis {
    Eigen::VectorXd frequencies;   // Hz
    Eigen::VectorXd omega;         // rad/s
    Eigen::MatrixXd shapes;        // free DOFs x modes, phi^T M phi = 1
    std::shared_ptr<const MassCholesky> mass_factor;
    std::uint64_t mesh_hash = 0;

    int count() const { return static_cast<int>(frequencies.size()); }

    // clusters of numerically repeated eigenvalues (relative gap < 1e-6)
    std::vector<std::pair<int, int>> degenerate_groups() const {
        std::vector<std::pair<int, int>> groups;
        int k = count();
        int start = 0;
        for (int i = 1; i <= k; ++i) {
            bool split = i == k || (omega(i) - omega(i - 1)) > 1e-6 * std::max(omega(i), 1e-300);
            if (split) {
                if (i - start > 1) groups.push_back({start, i});
                start = i;
            }
        }
        return groups;
    }

    bool is_degenerate(int mode) const {
        for (auto [a, b] : degenerate_groups())
            if (mode >= a && mode < b) return true;
        return false;
    }
};

enum class EigenSolverKind { automatic, dense, shift_invert };

namespace detail {

inline void mass_orthonormalize(Eigen::MatrixXd& v, const SparseMat& m) {
    // modified Gram-Schmidt in the M inner product (two passes), with the
    // M-products maintained incrementally
    Eigen::MatrixXd mv = m * v;
    for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < v.cols(); ++j) {
            for (int i = 0; i < j; ++i) {
                double c = v.col(i).dot(mv.col(j));
                v.col(j) -= c * v.col(i);
                mv.col(j) -= c * mv.col(i);
            }
            double nrm = std::sqrt(v.col(j).dot(mv.col(j)));
            require(nrm > 1e-300, "eigensolver: subspace collapsed");
            v.col(j) /= nrm;
            mv.col(j) /= nrm;
        }
    }
}

inline void fix_mode_signs(Eigen::MatrixXd& shapes) {
    for (int j = 0; j < shapes.cols(); ++j) {
        int idx = 0;
        double best = 0.0;
        for (int i = 0; i < shapes.rows(); ++i) {
            double a = std::abs(shapes(i, j));
            if (a > best) {
                best = a;
                idx = i;
            }
        }
        if (shapes(idx, j) < 0) shapes.col(j) = -shapes.col(j);
    }
}

} // namespace detail

// Lowest `count` modes of the generalized symmetric eigenproblem. Dense path
// below 500 DOFs, otherwise shift-invert subspace iteration around zero with
// a sparse Cholesky of K. Deterministic: fixed seed, fixed reduction order,
// sign convention = largest-magnitude entry positive.
inline ModalBasis solve_modes(const SystemMatrices& sys, int count,
                              EigenSolverKind kind = EigenSolverKind::automatic,
                              double tol = 1e-9, int max_iterations = 300) {
    int n = static_cast<int>(sys.stiffness.rows());
    require(count >= 1, "solve_modes: count must be >= 1");
    require(count <= n, "solve_modes: requested ", count, " modes of a ", n, "-DOF system");

    if (kind == EigenSolverKind::automatic)
        kind = n <= 500 ? EigenSolverKind::dense : EigenSolverKind::shift_invert;

    ModalBasis basis;
    basis.mass_factor = std::make_shared<MassCholesky>(sys.mass);

    if (kind == EigenSolverKind::dense) {
        Eigen::MatrixXd kd = Eigen::MatrixXd(sys.stiffness);
        Eigen::MatrixXd md = Eigen::MatrixXd(sys.mass);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(kd, md);
        require(es.info() == Eigen::Success, "dense generalized eigensolver failed");
        basis.shapes = es.eigenvectors().leftCols(count);
        Eigen::VectorXd lambda = es.eigenvalues().head(count);
        basis.omega = lambda.cwiseMax(0.0).cwiseSqrt();
    } else {
        Eigen::SimplicialLDLT<SparseMat> kinv(sys.stiffness);
        require(kinv.info() == Eigen::Success,
                "shift-invert factorization failed (K singular? missing anchors?)");

        int q = std::min(n, count + std::max(6, count / 2));
        std::mt19937_64 rng(0x5eed5eedULL);
        std::normal_distribution<double> gauss(0.0, 1.0);
        Eigen::MatrixXd v(n, q);
        for (int j = 0; j < q; ++j)
            for (int i = 0; i < n; ++i) v(i, j) = gauss(rng);
        detail::mass_orthonormalize(v, sys.mass);

        Eigen::VectorXd theta = Eigen::VectorXd::Zero(q);
        bool converged = false;
        double worst_resid = 1.0, best_resid = 1e300;
        int stalled = 0;
        const double stall_accept = 1e-8; // matches the modal residual contract
        for (int it = 0; it < max_iterations && !converged; ++it) {
            Eigen::MatrixXd w = kinv.solve(sys.mass * v);
            detail::mass_orthonormalize(w, sys.mass);
            Eigen::MatrixXd kr = w.transpose() * (sys.stiffness * w);
            kr = 0.5 * (kr + kr.transpose());
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(kr);
            v = w * small.eigenvectors();
            theta = small.eigenvalues();

            converged = true;
            worst_resid = 0.0;
            for (int j = 0; j < count; ++j) {
                Eigen::VectorXd kv = sys.stiffness * v.col(j);
                double r = (kv - theta(j) * (sys.mass * v.col(j))).norm() / kv.norm();
                worst_resid = std::max(worst_resid, r);
                if (r > tol) converged = false;
            }
            // accept a round-off plateau once it is inside the modal contract
            if (worst_resid < 0.7 * best_resid) {
                best_resid = worst_resid;
                stalled = 0;
            } else if (++stalled >= 10 && worst_resid <= stall_accept) {
                converged = true;
            }
        }
        if (!converged)
            fail("shift-invert iteration did not converge: worst relative residual ", worst_resid,
                 " after ", max_iterations, " iterations");
        basis.shapes = v.leftCols(count);
        basis.omega = theta.head(count).cwiseMax(0.0).cwiseSqrt();
    }

    // exact mass normalization on top of the solver's scaling
    for (int j = 0; j < count; ++j) {
        double mn = std::sqrt(basis.shapes.col(j).dot(sys.mass * basis.shapes.col(j)));
        basis.shapes.col(j) /= mn;
    }
    detail::fix_mode_signs(basis.shapes);
    basis.frequencies = basis.omega / (2.0 * kPi);
    return basis;
}

// ---------------------------------------------------------------------------
// Mode tracking with a mass-weighted modal assurance criterion:
//   MAC_ij = A (R_k phi_i)^T (R_{k-1} phi_j) + B (R_k phi_i)^T (R_0 phi_j)
// where each basis supplies its own Cholesky factor. Per tracked label, the
// current mode with the largest |MAC| wins; collisions are resolved greedily
// by descending magnitude with every current mode used at most once.

struct TrackingConfig {
    double weight_previous = 0.1; // A
    double weight_initial = 0.9;  // B
    double lost_threshold = 0.3;
};

// Raised when no current mode scores above the lost threshold for a label.
class ModeLostError : public Error {
public:
    using Error::Error;
};

struct TrackedLabel {
    std::string name;
    int initial_index = -1; // mode index in the initial basis
    int index = -1;         // mode index in the basis being tracked
};

inline std::vector<TrackedLabel> track_modes(const ModalBasis& current,
                                             const ModalBasis& previous,
                                             const ModalBasis& initial,
                                             const std::vector<TrackedLabel>& labels,
                                             const TrackingConfig& cfg = {}) {
    require(current.mass_factor && previous.mass_factor && initial.mass_factor,
            "track_modes: bases lack mass factors");
    int nc = current.count();
    int nl = static_cast<int>(labels.size());
    require(nl >= 1, "track_modes: no labels to track");

    Eigen::MatrixXd rc = current.mass_factor->apply(current.shapes);
    Eigen::MatrixXd rp = previous.mass_factor->apply(previous.shapes);
    Eigen::MatrixXd r0 = initial.mass_factor->apply(initial.shapes);

    Eigen::MatrixXd mac(nc, nl);
    for (int l = 0; l < nl; ++l) {
        require(labels[l].index >= 0 && labels[l].index < previous.count(),
                "track_modes: label ", labels[l].name, " has no valid previous index");
        require(labels[l].initial_index >= 0 && labels[l].initial_index < initial.count(),
                "track_modes: label ", labels[l].name, " has no valid initial index");
        mac.col(l) = cfg.weight_previous * (rc.transpose() * rp.col(labels[l].index)) +
                     cfg.weight_initial * (rc.transpose() * r0.col(labels[l].initial_index));
    }

    // repeated-eigenvalue clusters score by their subspace projection
    Eigen::MatrixXd score = mac.cwiseAbs();
    for (auto [a, b] : current.degenerate_groups()) {
        for (int l = 0; l < nl; ++l) {
            double s = mac.block(a, l, b - a, 1).norm();
            for (int i = a; i < b; ++i) score(i, l) = s;
        }
    }

    struct Entry {
        double s;
        double tie; // |mac| breaks ties inside degenerate clusters
        int i, l;
    };
    std::vector<Entry> entries;
    entries.reserve(static_cast<std::size_t>(nc) * nl);
    for (int i = 0; i < nc; ++i)
        for (int l = 0; l < nl; ++l) entries.push_back({score(i, l), std::abs(mac(i, l)), i, l});
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.s != b.s) return a.s > b.s;
        if (a.tie != b.tie) return a.tie > b.tie;
        if (a.i != b.i) return a.i < b.i;
        return a.l < b.l;
    });

    std::vector<TrackedLabel> out = labels;
    std::vector<char> mode_used(nc, 0), label_done(nl, 0);
    int assigned = 0;
    for (const auto& e : entries) {
        if (assigned == nl) break;
        if (mode_used[e.i] || label_done[e.l]) continue;
        if (e.s < cfg.lost_threshold)
            throw ModeLostError("track_modes: mode '" + labels[e.l].name + "' lost (best |MAC| = " +
                                num_str(e.s) + " below threshold " + num_str(cfg.lost_threshold) +
                                ")");
        mode_used[e.i] = 1;
        label_done[e.l] = 1;
        out[e.l].index = e.i;
        ++assigned;
    }
    require(assigned == nl, "track_modes: could not assign all labels");
    return out;
}

} // namespace triwave
