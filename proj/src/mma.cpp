#include "infilltopo/mma.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace infilltopo {

namespace {
constexpr double kRaa0 = 1e-5;
constexpr double kAlbefa = 0.1;
}  // namespace

MmaSolver::MmaSolver(int num_vars, int num_constraints, MmaOptions opts)
    : n_(num_vars), m_(num_constraints), opts_(opts) {
    if (n_ < 1 || m_ < 1) throw std::invalid_argument("MMA needs at least one variable/constraint");
    low_.assign(n_, 0.0);
    upp_.assign(n_, 0.0);
    lambda_.assign(m_, 1.0);
}

void MmaSolver::update_asymptotes(const std::vector<double>& x) {
    const double range = opts_.xmax - opts_.xmin;
    if (iter_ <= 2) {
        for (int j = 0; j < n_; ++j) {
            low_[j] = x[j] - opts_.asy_init * range;
            upp_[j] = x[j] + opts_.asy_init * range;
        }
        return;
    }
    for (int j = 0; j < n_; ++j) {
        const double zz = (x[j] - xold1_[j]) * (xold1_[j] - xold2_[j]);
        double factor = 1.0;
        if (zz > 0.0) {
            factor = opts_.asy_incr;
        } else if (zz < 0.0) {
            factor = opts_.asy_decr;
        }
        double lo = x[j] - factor * (xold1_[j] - low_[j]);
        double up = x[j] + factor * (upp_[j] - xold1_[j]);
        lo = std::clamp(lo, x[j] - 10.0 * range, x[j] - 0.01 * range);
        up = std::clamp(up, x[j] + 0.01 * range, x[j] + 10.0 * range);
        low_[j] = lo;
        upp_[j] = up;
    }
}

/// Data of one separable subproblem and its dual.
struct MmaSolver::Subproblem {
    int n, m;
    const MmaOptions* opts;
    std::vector<double> low, upp, alfa, beta;
    std::vector<double> p0, q0;
    std::vector<std::vector<double>> P, Q;  // per constraint
    std::vector<double> b;

    // Scratch set by eval(): primal minimizer and dual gradient.
    std::vector<double> x;
    std::vector<double> grad;

    // Dual objective at lambda (up to a constant); fills x and grad.
    double eval(const std::vector<double>& lam) {
        double W = 0.0;
        for (int j = 0; j < n; ++j) {
            double plam = p0[j], qlam = q0[j];
            for (int i = 0; i < m; ++i) {
                plam += lam[i] * P[i][j];
                qlam += lam[i] * Q[i][j];
            }
            const double sp = std::sqrt(plam), sq = std::sqrt(qlam);
            double xj = (low[j] * sp + upp[j] * sq) / (sp + sq);
            xj = std::clamp(xj, alfa[j], beta[j]);
            x[j] = xj;
            W += plam / (upp[j] - xj) + qlam / (xj - low[j]);
        }
        for (int i = 0; i < m; ++i) {
            double gi = -b[i];
            for (int j = 0; j < n; ++j) {
                gi += P[i][j] / (upp[j] - x[j]) + Q[i][j] / (x[j] - low[j]);
            }
            const double y = std::max(0.0, (lam[i] - opts->ci) / opts->di);
            grad[i] = gi - y;
            W += -lam[i] * b[i] + (opts->ci * y + 0.5 * opts->di * y * y - lam[i] * y);
        }
        return W;
    }

    // Dual Hessian at the point of the last eval().
    Eigen::MatrixXd hessian(const std::vector<double>& lam) const {
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, m);
        for (int j = 0; j < n; ++j) {
            if (x[j] <= alfa[j] || x[j] >= beta[j]) continue;  // clipped: dx/dlam = 0
            double plam = p0[j], qlam = q0[j];
            for (int i = 0; i < m; ++i) {
                plam += lam[i] * P[i][j];
                qlam += lam[i] * Q[i][j];
            }
            const double sp = std::sqrt(plam), sq = std::sqrt(qlam);
            const double denom = (sp + sq) * (sp + sq);
            const double dxdp = sq * (low[j] - upp[j]) / (denom * 2.0 * sp);
            const double dxdq = sp * (upp[j] - low[j]) / (denom * 2.0 * sq);
            const double iu = 1.0 / (upp[j] - x[j]);
            const double il = 1.0 / (x[j] - low[j]);
            for (int i = 0; i < m; ++i) {
                const double Gi = P[i][j] * iu * iu - Q[i][j] * il * il;
                for (int k = 0; k < m; ++k) {
                    H(i, k) += Gi * (dxdp * P[k][j] + dxdq * Q[k][j]);
                }
            }
        }
        for (int i = 0; i < m; ++i) {
            if (lam[i] > opts->ci) H(i, i) -= 1.0 / opts->di;
        }
        return H;
    }

    double kkt_residual(const std::vector<double>& lam) const {
        double r = 0.0;
        for (int i = 0; i < m; ++i) {
            r = std::max(r, lam[i] > 0.0 ? std::abs(grad[i]) : std::max(0.0, grad[i]));
        }
        return r;
    }
};

std::vector<double> MmaSolver::update(const std::vector<double>& x,
                                      const std::vector<double>& df0,
                                      const std::vector<double>& g,
                                      const std::vector<std::vector<double>>& dg) {
    if (static_cast<int>(x.size()) != n_ || static_cast<int>(df0.size()) != n_ ||
        static_cast<int>(g.size()) != m_ || static_cast<int>(dg.size()) != m_) {
        throw std::invalid_argument("MMA input size mismatch");
    }
    for (double v : df0) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite objective gradient");
    }
    for (int i = 0; i < m_; ++i) {
        if (!std::isfinite(g[i])) throw std::invalid_argument("non-finite constraint value");
        for (double v : dg[i]) {
            if (!std::isfinite(v)) throw std::invalid_argument("non-finite constraint gradient");
        }
    }

    iter_ += 1;
    update_asymptotes(x);

    Subproblem sp;
    sp.n = n_;
    sp.m = m_;
    sp.opts = &opts_;
    sp.low = low_;
    sp.upp = upp_;
    sp.alfa.resize(n_);
    sp.beta.resize(n_);
    sp.p0.resize(n_);
    sp.q0.resize(n_);
    sp.P.assign(m_, std::vector<double>(n_));
    sp.Q.assign(m_, std::vector<double>(n_));
    sp.b.assign(m_, 0.0);
    sp.x.resize(n_);
    sp.grad.resize(m_);

    const double range = std::max(opts_.xmax - opts_.xmin, 1e-5);
    for (int j = 0; j < n_; ++j) {
        sp.alfa[j] = std::max({opts_.xmin, low_[j] + kAlbefa * (x[j] - low_[j]),
                               x[j] - opts_.move_limit});
        sp.beta[j] = std::min({opts_.xmax, upp_[j] - kAlbefa * (upp_[j] - x[j]),
                               x[j] + opts_.move_limit});
        const double u2 = (upp_[j] - x[j]) * (upp_[j] - x[j]);
        const double l2 = (x[j] - low_[j]) * (x[j] - low_[j]);

        const double fp = std::max(df0[j], 0.0);
        const double fm = std::max(-df0[j], 0.0);
        const double mix0 = 0.001 * (fp + fm) + kRaa0 / range;
        sp.p0[j] = (fp + mix0) * u2;
        sp.q0[j] = (fm + mix0) * l2;

        for (int i = 0; i < m_; ++i) {
            const double gp = std::max(dg[i][j], 0.0);
            const double gm = std::max(-dg[i][j], 0.0);
            const double mix = 0.001 * (gp + gm) + kRaa0 / range;
            sp.P[i][j] = (gp + mix) * u2;
            sp.Q[i][j] = (gm + mix) * l2;
            sp.b[i] += sp.P[i][j] / (upp_[j] - x[j]) + sp.Q[i][j] / (x[j] - low_[j]);
        }
    }
    for (int i = 0; i < m_; ++i) sp.b[i] -= g[i];

    // Dual ascent: damped Newton with projection, bisection fallback.
    std::vector<double> lam = lambda_;
    double W = sp.eval(lam);
    bool converged = sp.kkt_residual(lam) <= opts_.kkt_tol;
    int it = 0;
    while (!converged && it < opts_.max_dual_iters) {
        ++it;
        Eigen::MatrixXd H = sp.hessian(lam);
        Eigen::VectorXd gr(m_);
        for (int i = 0; i < m_; ++i) gr[i] = sp.grad[i];
        for (int i = 0; i < m_; ++i) H(i, i) -= 1e-12 + 1e-9 * std::abs(H(i, i));
        Eigen::VectorXd step = H.ldlt().solve(-gr);

        bool improved = false;
        double t = 1.0;
        std::vector<double> trial(m_);
        for (int ls = 0; ls < 40; ++ls) {
            for (int i = 0; i < m_; ++i) trial[i] = std::max(0.0, lam[i] + t * step[i]);
            const double Wt = sp.eval(trial);
            if (Wt > W + 1e-18) {
                lam = trial;
                W = Wt;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if (!improved) {
            // Coordinate-wise bisection on the concave dual.
            for (int i = 0; i < m_; ++i) {
                sp.eval(lam);
                if (lam[i] <= 0.0 && sp.grad[i] <= 0.0) continue;
                double lo = 0.0, hi = std::max(1.0, 2.0 * lam[i]);
                auto grad_at = [&](double v) {
                    std::vector<double> probe = lam;
                    probe[i] = v;
                    sp.eval(probe);
                    return sp.grad[i];
                };
                if (grad_at(lo) <= 0.0) {
                    lam[i] = 0.0;
                    continue;
                }
                int guard = 0;
                while (grad_at(hi) > 0.0 && guard++ < 200) hi *= 2.0;
                for (int bs = 0; bs < 200; ++bs) {
                    const double mid = 0.5 * (lo + hi);
                    if (grad_at(mid) > 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if (hi - lo <= 1e-14 * std::max(1.0, hi)) break;
                }
                lam[i] = 0.5 * (lo + hi);
            }
            W = sp.eval(lam);
        }
        sp.eval(lam);
        converged = sp.kkt_residual(lam) <= opts_.kkt_tol;
    }
    if (!converged) {
        throw std::runtime_error("MMA dual solver did not converge within the iteration budget");
    }

    sp.eval(lam);
    lambda_ = lam;
    xold2_ = iter_ >= 2 ? xold1_ : x;
    xold1_ = x;
    return sp.x;
}

}  // namespace infilltopo
