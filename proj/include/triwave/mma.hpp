#pragma once

#include <Eigen/Dense>

#include "triwave/common.hpp"

namespace triwave {

// Method of moving asymptotes. Each outer update builds the separable convex
// approximation around the current iterate with per-variable asymptotes
// (initialized at half the box span, shrunk on oscillation, grown on
// monotone progress) and solves the subproblem with a damped primal-dual
// Newton method driven to a KKT tolerance. Constraints enter as g_k(x) <= 0
// with elastic slack variables, so temporarily infeasible problems remain
// well posed.
struct MmaOptions {
    double asymptote_init = 0.5;
    double asymptote_shrink = 0.7;
    double asymptote_grow = 1.2;
    double move_limit = 0.1;     // fraction of the box span per iteration
    double kkt_tolerance = 1e-9; // subproblem interior-point target
    double constraint_penalty = 1000.0;
};

class MmaSolver {
public:
    MmaSolver(int n_vars, int n_cons, Eigen::VectorXd box_lower, Eigen::VectorXd box_upper,
              MmaOptions options = {})
        : n_(n_vars), m_(n_cons), xmin_(std::move(box_lower)), xmax_(std::move(box_upper)),
          opt_(options) {
        require(n_ >= 1 && m_ >= 0, "mma: invalid problem dimensions");
        require(xmin_.size() == n_ && xmax_.size() == n_, "mma: box size mismatch");
        low_.resize(n_);
        upp_.resize(n_);
    }

    const Eigen::VectorXd& asymptote_lower() const { return low_; }
    const Eigen::VectorXd& asymptote_upper() const { return upp_; }
    int iteration() const { return iter_; }

    // Moves the asymptotes to the new expansion point; call once per outer
    // iteration before propose().
    void advance(const Eigen::VectorXd& x) {
        require(x.size() == n_, "mma: iterate size mismatch");
        ++iter_;
        Eigen::VectorXd span = xmax_ - xmin_;
        if (iter_ <= 2) {
            low_ = x - opt_.asymptote_init * span;
            upp_ = x + opt_.asymptote_init * span;
        } else {
            for (int i = 0; i < n_; ++i) {
                double osc = (x(i) - xold1_(i)) * (xold1_(i) - xold2_(i));
                double factor =
                    osc > 0 ? opt_.asymptote_grow : (osc < 0 ? opt_.asymptote_shrink : 1.0);
                low_(i) = x(i) - factor * (xold1_(i) - low_(i));
                upp_(i) = x(i) + factor * (upp_(i) - xold1_(i));
                low_(i) = std::clamp(low_(i), x(i) - 10.0 * span(i), x(i) - 0.01 * span(i));
                upp_(i) = std::clamp(upp_(i), x(i) + 0.01 * span(i), x(i) + 10.0 * span(i));
            }
        }
        xold2_ = iter_ >= 2 ? xold1_ : x;
        xold1_ = x;
    }

    // Solves the subproblem around x; re-callable with a smaller move
    // fraction when the caller rejects the step (mesh validity backtracking).
    // Throws on dual failure after one automatic move-limit retry.
    Eigen::VectorXd propose(const Eigen::VectorXd& x, const Eigen::VectorXd& df,
                            const Eigen::VectorXd& g, const Eigen::MatrixXd& dg,
                            double move_fraction) const {
        require(x.size() == n_ && df.size() == n_, "mma: gradient size mismatch");
        require(g.size() == m_ && dg.rows() == m_ && dg.cols() == n_,
                "mma: constraint size mismatch");
        require(df.allFinite() && g.allFinite() && dg.allFinite(), "mma: non-finite inputs");
        for (int attempt = 0;; ++attempt) {
            try {
                return solve_subproblem(x, df, g, dg, move_fraction);
            } catch (const Error&) {
                if (attempt >= 1) throw;
                move_fraction *= 0.5; // one retry with a tighter trust region
            }
        }
    }

    // One design update with the configured move limit.
    Eigen::VectorXd update(const Eigen::VectorXd& x, const Eigen::VectorXd& df,
                           const Eigen::VectorXd& g, const Eigen::MatrixXd& dg) {
        advance(x);
        return propose(x, df, g, dg, opt_.move_limit);
    }

    // Restart support: asymptotes and the two previous iterates.
    struct State {
        int iteration = 0;
        Eigen::VectorXd low, upp, xold1, xold2;
    };
    State state() const { return {iter_, low_, upp_, xold1_, xold2_}; }
    void restore(const State& s) {
        iter_ = s.iteration;
        low_ = s.low;
        upp_ = s.upp;
        xold1_ = s.xold1;
        xold2_ = s.xold2;
    }

private:
    struct Subproblem {
        Eigen::VectorXd alpha, beta; // variable bounds
        Eigen::VectorXd p0, q0;      // objective numerators
        Eigen::MatrixXd p, q;        // constraint numerators
        Eigen::VectorXd b;
    };

    Eigen::VectorXd solve_subproblem(const Eigen::VectorXd& x, const Eigen::VectorXd& df,
                                     const Eigen::VectorXd& g, const Eigen::MatrixXd& dg,
                                     double move) const {
        Eigen::VectorXd span = xmax_ - xmin_;
        Subproblem sp;
        sp.alpha.resize(n_);
        sp.beta.resize(n_);
        for (int i = 0; i < n_; ++i) {
            sp.alpha(i) =
                std::max({xmin_(i), low_(i) + 0.1 * (x(i) - low_(i)), x(i) - move * span(i)});
            sp.beta(i) =
                std::min({xmax_(i), upp_(i) - 0.1 * (upp_(i) - x(i)), x(i) + move * span(i)});
            require(sp.alpha(i) < sp.beta(i), "mma: empty trust region for variable ", i);
        }

        Eigen::VectorXd ux = upp_ - x, xl = x - low_;
        Eigen::VectorXd ux2 = ux.cwiseProduct(ux), xl2 = xl.cwiseProduct(xl);
        sp.p0.resize(n_);
        sp.q0.resize(n_);
        sp.p.resize(m_, n_);
        sp.q.resize(m_, n_);
        for (int i = 0; i < n_; ++i) {
            double dfp = std::max(df(i), 0.0), dfm = std::max(-df(i), 0.0);
            double reg = 1e-5 * (dfp + dfm) + 0.5e-8 / std::max(span(i), 1e-300);
            sp.p0(i) = (1.001 * dfp + 0.001 * dfm + reg) * ux2(i);
            sp.q0(i) = (0.001 * dfp + 1.001 * dfm + reg) * xl2(i);
            for (int k = 0; k < m_; ++k) {
                sp.p(k, i) = std::max(dg(k, i), 0.0) * ux2(i);
                sp.q(k, i) = std::max(-dg(k, i), 0.0) * xl2(i);
            }
        }
        sp.b.resize(m_);
        for (int k = 0; k < m_; ++k) {
            double r = g(k);
            for (int i = 0; i < n_; ++i) r -= sp.p(k, i) / ux(i) + sp.q(k, i) / xl(i);
            sp.b(k) = -r;
        }
        return subsolve(sp);
    }

    struct Point {
        Eigen::VectorXd x, y, lam, xi, eta, mu, s;
        double z = 1, zeta = 1;
    };

    // residuals of the perturbed KKT system at barrier parameter epsi
    Eigen::VectorXd residuals(const Subproblem& sp, const Point& pt, double epsi) const {
        Eigen::VectorXd ux = upp_ - pt.x, xl = pt.x - low_;
        Eigen::VectorXd plam = sp.p0, qlam = sp.q0;
        Eigen::VectorXd gi = Eigen::VectorXd::Zero(m_);
        for (int k = 0; k < m_; ++k) {
            plam += pt.lam(k) * sp.p.row(k).transpose();
            qlam += pt.lam(k) * sp.q.row(k).transpose();
            for (int i = 0; i < n_; ++i) gi(k) += sp.p(k, i) / ux(i) + sp.q(k, i) / xl(i);
        }
        Eigen::VectorXd res(3 * n_ + 4 * m_ + 2);
        int at = 0;
        for (int i = 0; i < n_; ++i)
            res(at++) = plam(i) / (ux(i) * ux(i)) - qlam(i) / (xl(i) * xl(i)) - pt.xi(i) + pt.eta(i);
        for (int k = 0; k < m_; ++k)
            res(at++) = opt_.constraint_penalty + pt.y(k) - pt.mu(k) - pt.lam(k);
        res(at++) = 1.0 - pt.zeta;
        for (int k = 0; k < m_; ++k) res(at++) = gi(k) - pt.y(k) + pt.s(k) - sp.b(k);
        for (int i = 0; i < n_; ++i) res(at++) = pt.xi(i) * (pt.x(i) - sp.alpha(i)) - epsi;
        for (int i = 0; i < n_; ++i) res(at++) = pt.eta(i) * (sp.beta(i) - pt.x(i)) - epsi;
        for (int k = 0; k < m_; ++k) res(at++) = pt.mu(k) * pt.y(k) - epsi;
        res(at++) = pt.zeta * pt.z - epsi;
        for (int k = 0; k < m_; ++k) res(at++) = pt.lam(k) * pt.s(k) - epsi;
        return res;
    }

    Eigen::VectorXd subsolve(const Subproblem& sp) const {
        Point pt;
        pt.x = 0.5 * (sp.alpha + sp.beta);
        pt.y = Eigen::VectorXd::Ones(m_);
        pt.lam = Eigen::VectorXd::Ones(m_);
        pt.xi = (pt.x - sp.alpha).cwiseInverse().cwiseMax(1.0);
        pt.eta = (sp.beta - pt.x).cwiseInverse().cwiseMax(1.0);
        pt.mu = Eigen::VectorXd::Constant(m_, std::max(1.0, 0.5 * opt_.constraint_penalty));
        pt.s = Eigen::VectorXd::Ones(m_);

        double epsi = 1.0;
        int total = 0;
        while (epsi >= opt_.kkt_tolerance) {
            for (int inner = 0;; ++inner) {
                require(++total < 4000, "mma: dual iteration limit reached");
                Eigen::VectorXd res = residuals(sp, pt, epsi);
                if (res.cwiseAbs().maxCoeff() < 0.9 * epsi) break;
                require(inner < 300, "mma: inner Newton stalled");

                Eigen::VectorXd ux = upp_ - pt.x, xl = pt.x - low_;
                Eigen::VectorXd ux2 = ux.cwiseProduct(ux), xl2 = xl.cwiseProduct(xl);
                Eigen::VectorXd ux3 = ux2.cwiseProduct(ux), xl3 = xl2.cwiseProduct(xl);
                Eigen::VectorXd xa = pt.x - sp.alpha, bx = sp.beta - pt.x;

                Eigen::VectorXd plam = sp.p0, qlam = sp.q0;
                Eigen::VectorXd gi = Eigen::VectorXd::Zero(m_);
                for (int k = 0; k < m_; ++k) {
                    plam += pt.lam(k) * sp.p.row(k).transpose();
                    qlam += pt.lam(k) * sp.q.row(k).transpose();
                    for (int i = 0; i < n_; ++i)
                        gi(k) += sp.p(k, i) / ux(i) + sp.q(k, i) / xl(i);
                }
                Eigen::VectorXd dpsi = plam.cwiseQuotient(ux2) - qlam.cwiseQuotient(xl2);
                Eigen::MatrixXd gmat(m_, n_);
                for (int k = 0; k < m_; ++k)
                    for (int i = 0; i < n_; ++i)
                        gmat(k, i) = sp.p(k, i) / ux2(i) - sp.q(k, i) / xl2(i);

                Eigen::VectorXd delx = dpsi - epsi * xa.cwiseInverse() + epsi * bx.cwiseInverse();
                Eigen::VectorXd dely = Eigen::VectorXd::Constant(m_, opt_.constraint_penalty) +
                                       pt.y - pt.lam - epsi * pt.y.cwiseInverse();
                Eigen::VectorXd dellam = gi - pt.y - sp.b + epsi * pt.lam.cwiseInverse();

                Eigen::VectorXd diagx = 2.0 * (plam.cwiseQuotient(ux3) + qlam.cwiseQuotient(xl3)) +
                                        pt.xi.cwiseQuotient(xa) + pt.eta.cwiseQuotient(bx);
                Eigen::VectorXd diagy =
                    Eigen::VectorXd::Ones(m_) + pt.mu.cwiseQuotient(pt.y); // d_k = 1
                Eigen::VectorXd diaglamyi =
                    pt.s.cwiseQuotient(pt.lam) + diagy.cwiseInverse();

                Eigen::VectorXd dlam(m_), dx(n_);
                if (m_ > 0) {
                    Eigen::MatrixXd alam = Eigen::MatrixXd(diaglamyi.asDiagonal());
                    alam += gmat * diagx.cwiseInverse().asDiagonal() * gmat.transpose();
                    Eigen::VectorXd blam = dellam + dely.cwiseQuotient(diagy) -
                                           gmat * delx.cwiseQuotient(diagx);
                    dlam = alam.ldlt().solve(blam);
                } else {
                    dlam.resize(0);
                }
                dx = -delx.cwiseQuotient(diagx);
                if (m_ > 0) dx -= (gmat.transpose() * dlam).cwiseQuotient(diagx);

                Eigen::VectorXd dy = (dlam - dely).cwiseQuotient(diagy);
                // z decouples (no constraint uses it): -zeta/z dz = delz
                double dz = (epsi - pt.z) / pt.zeta;
                Eigen::VectorXd dxi = -pt.xi + epsi * xa.cwiseInverse() -
                                      pt.xi.cwiseProduct(dx).cwiseQuotient(xa);
                Eigen::VectorXd deta = -pt.eta + epsi * bx.cwiseInverse() +
                                       pt.eta.cwiseProduct(dx).cwiseQuotient(bx);
                Eigen::VectorXd dmu = -pt.mu + epsi * pt.y.cwiseInverse() -
                                      pt.mu.cwiseProduct(dy).cwiseQuotient(pt.y);
                double dzeta = -pt.zeta + epsi / pt.z - pt.zeta * dz / pt.z;
                Eigen::VectorXd ds = -pt.s + epsi * pt.lam.cwiseInverse() -
                                     pt.s.cwiseProduct(dlam).cwiseQuotient(pt.lam);

                // fraction-to-boundary damping
                double theta = 1.0;
                auto cap = [&theta](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
                    for (int i = 0; i < v.size(); ++i)
                        if (dv(i) < 0) theta = std::min(theta, -0.99 * v(i) / dv(i));
                };
                cap(pt.y, dy);
                cap(pt.lam, dlam);
                cap(pt.xi, dxi);
                cap(pt.eta, deta);
                cap(pt.mu, dmu);
                cap(pt.s, ds);
                if (dz < 0) theta = std::min(theta, -0.99 * pt.z / dz);
                if (dzeta < 0) theta = std::min(theta, -0.99 * pt.zeta / dzeta);
                cap(xa, dx);
                cap(bx, -dx);

                double res0 = res.norm();
                double step = theta;
                Point trial = pt;
                for (int ls = 0;; ++ls) {
                    trial.x = pt.x + step * dx;
                    trial.y = pt.y + step * dy;
                    trial.z = pt.z + step * dz;
                    trial.lam = pt.lam + step * dlam;
                    trial.xi = pt.xi + step * dxi;
                    trial.eta = pt.eta + step * deta;
                    trial.mu = pt.mu + step * dmu;
                    trial.zeta = pt.zeta + step * dzeta;
                    trial.s = pt.s + step * ds;
                    if (residuals(sp, trial, epsi).norm() < res0 || ls >= 50) break;
                    step *= 0.5;
                }
                pt = trial;
            }
            epsi *= 0.1;
        }
        return pt.x;
    }

    int n_, m_;
    Eigen::VectorXd xmin_, xmax_;
    MmaOptions opt_;
    Eigen::VectorXd low_, upp_, xold1_, xold2_;
    int iter_ = 0;
};

} // namespace triwave
