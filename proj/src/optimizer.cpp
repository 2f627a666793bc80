#include "infilltopo/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "infilltopo/mma.hpp"

namespace infilltopo {

double BetaSchedule::at(int iteration) const {
    if (iteration < 1) return initial;
    const int doublings = (iteration - 1) / double_every;
    double beta = initial;
    for (int k = 0; k < doublings && beta < cap; ++k) beta *= 2.0;
    return std::min(beta, cap);
}

DensityFilter::DensityFilter(const CartesianGrid& grid, double r) : grid_(&grid), r_(r) {
    if (!(r > 0.0)) throw std::invalid_argument("filter radius must be positive");
    reach_ = static_cast<int>(std::ceil(r)) - 1;  // offsets with distance < r
    const int n = grid.num_elements();
    weight_sum_.assign(n, 0.0);
    for (int e = 0; e < n; ++e) {
        const int ci = grid.cell_x(e), cj = grid.cell_y(e);
        double sum = 0.0;
        for (int dj = -reach_; dj <= reach_; ++dj) {
            for (int di = -reach_; di <= reach_; ++di) {
                if (grid.element_id(ci + di, cj + dj) < 0) continue;
                const double w = r_ - std::hypot(di, dj);
                if (w > 0.0) sum += w;
            }
        }
        weight_sum_[e] = sum;
    }
}

void DensityFilter::apply(const std::vector<double>& in, std::vector<double>& out) const {
    const CartesianGrid& g = *grid_;
    const int n = g.num_elements();
    out.assign(n, 0.0);
    for (int e = 0; e < n; ++e) {
        const int ci = g.cell_x(e), cj = g.cell_y(e);
        double acc = 0.0;
        for (int dj = -reach_; dj <= reach_; ++dj) {
            for (int di = -reach_; di <= reach_; ++di) {
                const int id = g.element_id(ci + di, cj + dj);
                if (id < 0) continue;
                const double w = r_ - std::hypot(di, dj);
                if (w > 0.0) acc += w * in[id];
            }
        }
        out[e] = acc / weight_sum_[e];
    }
}

void DensityFilter::apply_adjoint(const std::vector<double>& in, std::vector<double>& out) const {
    const CartesianGrid& g = *grid_;
    const int n = g.num_elements();
    // out_i = sum_e w(dist(i,e)) * in_e / weight_sum_e; the cone weight is
    // symmetric so this is a gather over the same stencil.
    out.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const int ci = g.cell_x(i), cj = g.cell_y(i);
        double acc = 0.0;
        for (int dj = -reach_; dj <= reach_; ++dj) {
            for (int di = -reach_; di <= reach_; ++di) {
                const int id = g.element_id(ci + di, cj + dj);
                if (id < 0) continue;
                const double w = r_ - std::hypot(di, dj);
                if (w > 0.0) acc += w * in[id] / weight_sum_[id];
            }
        }
        out[i] = acc;
    }
}

void heaviside_project(const std::vector<double>& phi_tilde, double beta,
                       std::vector<double>& rho) {
    rho.resize(phi_tilde.size());
    const double t = std::tanh(0.5 * beta);
    for (size_t e = 0; e < phi_tilde.size(); ++e) {
        rho[e] = (t + std::tanh(beta * (phi_tilde[e] - 0.5))) / (2.0 * t);
    }
}

void heaviside_derivative(const std::vector<double>& phi_tilde, double beta,
                          std::vector<double>& drho) {
    drho.resize(phi_tilde.size());
    const double t = std::tanh(0.5 * beta);
    for (size_t e = 0; e < phi_tilde.size(); ++e) {
        // sech^2 form; 1 - tanh^2 underflows to zero for large arguments.
        const double ch = std::cosh(beta * (phi_tilde[e] - 0.5));
        drho[e] = beta / (2.0 * t * ch * ch);
    }
}

void local_volume(const std::vector<double>& rho, const NeighborhoodTable& nb,
                  std::vector<double>& rho_bar) {
    nb.disc_average(rho, rho_bar);
    for (double& v : rho_bar) v = std::clamp(v, 0.0, 1.0);
}

double aggregate_constraint(const std::vector<double>& rho_bar, const std::vector<double>& alpha,
                            double p) {
    const size_t n = rho_bar.size();
    double acc = 0.0;
    for (size_t e = 0; e < n; ++e) {
        acc += std::pow(rho_bar[e] / alpha[e], p);
    }
    return std::pow(acc / n, 1.0 / p) - 1.0;
}

double global_constraint(const std::vector<double>& rho, double alpha_total) {
    const double mean = std::accumulate(rho.begin(), rho.end(), 0.0) / rho.size();
    return mean - alpha_total;
}

void compliance_sensitivity(const FemSolver& fem, const DisplacementField& U,
                            const std::vector<double>& rho, std::vector<double>& dc) {
    const MaterialModel& mat = fem.material();
    const int n = fem.grid().num_elements();
    dc.assign(n, 0.0);
    for (int e = 0; e < n; ++e) {
        const double dE = mat.gamma * std::pow(rho[e], mat.gamma - 1.0) * (mat.E0 - mat.Emin);
        dc[e] = -0.5 * dE * fem.unit_strain_energy(U, e);
    }
}

void constraint_sensitivity(const std::vector<double>& rho_bar, const std::vector<double>& alpha,
                            double p, const NeighborhoodTable& nb, std::vector<double>& dg) {
    const size_t n = rho_bar.size();
    double M = 0.0;
    std::vector<double> w(n);
    for (size_t e = 0; e < n; ++e) {
        const double ratio = rho_bar[e] / alpha[e];
        M += std::pow(ratio, p);
        w[e] = std::pow(ratio, p - 1.0) / (alpha[e] * nb.count(static_cast<int>(e)));
    }
    M /= n;
    nb.transpose_accumulate(w, dg);
    const double f = std::pow(M, 1.0 / p - 1.0) / n;
    for (double& v : dg) v *= f;
}

void chain_to_design(const std::vector<double>& dX_drho, const std::vector<double>& phi_tilde,
                     double beta, const DensityFilter& filter, std::vector<double>& dX_dphi) {
    std::vector<double> dproj;
    heaviside_derivative(phi_tilde, beta, dproj);
    for (size_t e = 0; e < dproj.size(); ++e) dproj[e] *= dX_drho[e];
    filter.apply_adjoint(dproj, dX_dphi);
}

double sharpness(const std::vector<double>& rho) {
    double acc = 0.0;
    for (double v : rho) acc += v * (1.0 - v);
    return 4.0 * acc / rho.size();
}

namespace {

// Closed segment vs closed axis-aligned unit square [i,i+1]x[j,j+1].
bool segment_touches_cell(double x0, double y0, double x1, double y1, int i, int j) {
    const double dx = x1 - x0, dy = y1 - y0;
    double t0 = 0.0, t1 = 1.0;
    auto clip = [&](double p, double dp, double lo, double hi) {
        if (dp == 0.0) return p >= lo && p <= hi;
        double ta = (lo - p) / dp, tb = (hi - p) / dp;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        return t0 <= t1;
    };
    if (!clip(x0, dx, i, i + 1.0)) return false;
    if (!clip(y0, dy, j, j + 1.0)) return false;
    return t0 <= t1;
}

}  // namespace

ScalarField skeleton_initialization(const TopologicalSkeleton& skeleton, const CartesianGrid& grid,
                                    const ScalarField& alpha) {
    ScalarField phi(grid);
    phi.values = alpha.values;
    for (const auto& sep : skeleton.separatrices) {
        const auto& verts = sep.line.vertices;
        for (size_t k = 0; k + 1 < verts.size(); ++k) {
            const double x0 = verts[k][0], y0 = verts[k][1];
            const double x1 = verts[k + 1][0], y1 = verts[k + 1][1];
            const int ilo = std::max(0, static_cast<int>(std::floor(std::min(x0, x1))) - 1);
            const int ihi = std::min(grid.nx() - 1, static_cast<int>(std::floor(std::max(x0, x1))) + 1);
            const int jlo = std::max(0, static_cast<int>(std::floor(std::min(y0, y1))) - 1);
            const int jhi = std::min(grid.ny() - 1, static_cast<int>(std::floor(std::max(y0, y1))) + 1);
            for (int j = jlo; j <= jhi; ++j) {
                for (int i = ilo; i <= ihi; ++i) {
                    const int id = grid.element_id(i, j);
                    if (id < 0) continue;
                    if (segment_touches_cell(x0, y0, x1, y1, i, j)) phi.values[id] = 1.0;
                }
            }
        }
    }
    return phi;
}

void OptimizationConfig::validate(const CartesianGrid& grid) const {
    const size_t n = grid.num_elements();
    if (alpha.size() != n || R.size() != n) {
        throw std::invalid_argument("alpha/R field size mismatch");
    }
    for (double a : alpha.values) {
        if (!(a > 0.0 && a < 1.0)) {
            throw std::invalid_argument("alpha must lie strictly inside (0,1)");
        }
    }
    for (double rr : R.values) {
        if (!(filter_radius < rr)) {
            throw std::invalid_argument("filter radius r must be smaller than every R_e");
        }
    }
    if (!(filter_radius > 0.0)) throw std::invalid_argument("filter radius must be positive");
    if (!(p >= 1.0)) throw std::invalid_argument("aggregation exponent p must be >= 1");
    if (!(move_limit > 0.0 && move_limit <= 1.0)) {
        throw std::invalid_argument("move limit must lie in (0,1]");
    }
    if (alpha_total && !(*alpha_total > 0.0 && *alpha_total < 1.0)) {
        throw std::invalid_argument("alpha_total must lie strictly inside (0,1)");
    }
    if (max_iterations < 0) throw std::invalid_argument("max iterations must be nonnegative");
}

OptimizationState run_optimization(const OptimizationConfig& cfg, const CartesianGrid& grid,
                                   const BoundaryConditions& bc, const ScalarField& phi_init,
                                   const RunCallbacks& callbacks) {
    cfg.validate(grid);
    const int n = grid.num_elements();
    if (phi_init.size() != static_cast<size_t>(n)) {
        throw std::invalid_argument("phi_init size mismatch");
    }

    NeighborhoodTable nb = NeighborhoodTable::build(grid, cfg.R);
    DensityFilter filter(grid, cfg.filter_radius);
    FemSolver fem(grid, bc, cfg.material, cfg.solver);

    const int m = cfg.alpha_total ? 2 : 1;
    MmaOptions mma_opts;
    mma_opts.move_limit = cfg.move_limit;
    MmaSolver mma(n, m, mma_opts);

    OptimizationState st;
    st.phi = phi_init.values;
    for (double& v : st.phi) v = std::clamp(v, 0.0, 1.0);
    st.beta = cfg.beta.at(1);
    filter.apply(st.phi, st.phi_tilde);
    heaviside_project(st.phi_tilde, st.beta, st.rho);

    std::vector<double> rho_bar, dg_local, dc_dphi, dg1_dphi, dg2_dphi;
    for (int it = 1; it <= cfg.max_iterations; ++it) {
        st.iteration = it;
        st.beta = cfg.beta.at(it);
        filter.apply(st.phi, st.phi_tilde);
        heaviside_project(st.phi_tilde, st.beta, st.rho);

        auto [U, summary] = fem.solve(st.rho);
        const double c = fem.compliance(U);

        compliance_sensitivity(fem, U, st.rho, st.dc_drho);
        local_volume(st.rho, nb, rho_bar);
        const double g1 = aggregate_constraint(rho_bar, cfg.alpha.values, cfg.p);
        constraint_sensitivity(rho_bar, cfg.alpha.values, cfg.p, nb, st.dg_drho);

        IterationRecord rec;
        rec.iteration = it;
        rec.beta = st.beta;
        rec.compliance = c;
        rec.g_local = g1;
        rec.sharpness = sharpness(st.rho);
        rec.mean_density = std::accumulate(st.rho.begin(), st.rho.end(), 0.0) / n;
        if (cfg.alpha_total) {
            rec.g_global = rec.mean_density - *cfg.alpha_total;
        }
        st.history.push_back(rec);
        if (callbacks.on_iteration) callbacks.on_iteration(st);

        if (it == cfg.max_iterations) break;  // final analysis stays consistent with history

        chain_to_design(st.dc_drho, st.phi_tilde, st.beta, filter, dc_dphi);
        chain_to_design(st.dg_drho, st.phi_tilde, st.beta, filter, dg1_dphi);

        double dg_norm = 0.0;
        for (double v : dg1_dphi) dg_norm += std::abs(v);
        if (dg_norm == 0.0) {
            throw std::runtime_error("local volume constraint gradient vanished: degenerate config");
        }

        std::vector<double> gvals{g1};
        std::vector<std::vector<double>> dgrads{dg1_dphi};
        if (cfg.alpha_total) {
            gvals.push_back(*rec.g_global);
            std::vector<double> ones(n, 1.0 / n);
            chain_to_design(ones, st.phi_tilde, st.beta, filter, dg2_dphi);
            dgrads.push_back(dg2_dphi);
        }
        st.phi = mma.update(st.phi, dc_dphi, gvals, dgrads);
    }
    return st;
}

SensitivityFields sensitivity_diagnostics(const OptimizationState& state) {
    SensitivityFields f;
    f.dc_drho = state.dc_drho;
    f.dg_drho = state.dg_drho;
    f.ratio.assign(state.dc_drho.size(), 0.0);
    for (size_t e = 0; e < f.ratio.size(); ++e) {
        if (state.dg_drho[e] > 1e-300) {
            f.ratio[e] = -state.dc_drho[e] / state.dg_drho[e];
        }
    }
    return f;
}

}  // namespace infilltopo
