#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "infilltopo/fem.hpp"
#include "infilltopo/grid.hpp"
#include "infilltopo/tensor_topology.hpp"

namespace infilltopo {

/// Projection sharpness continuation: beta starts at `initial` and doubles
/// every `double_every` iterations until it reaches `cap`.
struct BetaSchedule {
    double initial = 1.0;
    int double_every = 40;
    double cap = 128.0;

    double at(int iteration) const;  // iteration counts from 1
};

/// Linear cone (hat) density filter of radius r, row-normalized so constant
/// fields pass through unchanged at boundaries.
class DensityFilter {
public:
    DensityFilter(const CartesianGrid& grid, double r);

    double radius() const { return r_; }
    void apply(const std::vector<double>& in, std::vector<double>& out) const;
    /// Transpose of the row-normalized operator (sensitivity back-map).
    void apply_adjoint(const std::vector<double>& in, std::vector<double>& out) const;

private:
    const CartesianGrid* grid_;
    double r_;
    int reach_;
    std::vector<double> weight_sum_;  // per element
};

void heaviside_project(const std::vector<double>& phi_tilde, double beta,
                       std::vector<double>& rho);
void heaviside_derivative(const std::vector<double>& phi_tilde, double beta,
                          std::vector<double>& drho);

void local_volume(const std::vector<double>& rho, const NeighborhoodTable& nb,
                  std::vector<double>& rho_bar);

/// g = ((1/n) sum (rho_bar/alpha)^p)^(1/p) - 1.
double aggregate_constraint(const std::vector<double>& rho_bar, const std::vector<double>& alpha,
                            double p);

/// mean(rho) - alpha_total.
double global_constraint(const std::vector<double>& rho, double alpha_total);

/// dc/drho_e = -1/2 gamma rho^(gamma-1) (E0-Emin) u_e^T k_unit u_e.
void compliance_sensitivity(const FemSolver& fem, const DisplacementField& U,
                            const std::vector<double>& rho, std::vector<double>& dc);

void constraint_sensitivity(const std::vector<double>& rho_bar, const std::vector<double>& alpha,
                            double p, const NeighborhoodTable& nb, std::vector<double>& dg);

/// Chain rule through projection and filter:
/// dX/dphi = filter^T (dX/drho .* drho/dphi_tilde).
void chain_to_design(const std::vector<double>& dX_drho, const std::vector<double>& phi_tilde,
                     double beta, const DensityFilter& filter, std::vector<double>& dX_dphi);

/// (4/n) sum rho (1 - rho), in [0,1]; 0 on binary fields.
double sharpness(const std::vector<double>& rho);

/// Seeds phi = 1 on every active element whose closed unit square is touched
/// by a separatrix segment (supercover rasterization); all other elements get
/// alpha_e. The solid seeds remain ordinary design variables.
ScalarField skeleton_initialization(const TopologicalSkeleton& skeleton, const CartesianGrid& grid,
                                    const ScalarField& alpha);

enum class InitMode { Uniform, TopologyGuided };

struct OptimizationConfig {
    ScalarField alpha;                  // local volume upper bound, in (0,1)
    std::optional<double> alpha_total;  // optional global volume bound
    ScalarField R;                      // local volume radius field
    double filter_radius = 0.0;         // r, must be < min R
    double p = 16.0;
    BetaSchedule beta;
    double move_limit = 0.01;
    int max_iterations = 0;
    MaterialModel material;
    InitMode init = InitMode::Uniform;
    SolverKind solver = SolverKind::Direct;

    void validate(const CartesianGrid& grid) const;
};

struct IterationRecord {
    int iteration = 0;
    double beta = 0.0;
    double compliance = 0.0;
    double g_local = 0.0;
    std::optional<double> g_global;
    double sharpness = 0.0;
    double mean_density = 0.0;
};

struct OptimizationState {
    int iteration = 0;
    double beta = 0.0;
    std::vector<double> phi;
    std::vector<double> phi_tilde;
    std::vector<double> rho;
    std::vector<double> dc_drho;
    std::vector<double> dg_drho;
    std::vector<IterationRecord> history;
};

struct RunCallbacks {
    /// Called after each analyzed iteration (history already appended).
    std::function<void(const OptimizationState&)> on_iteration;
};

/// Full optimization loop. phi_init must have one entry per active element;
/// use skeleton_initialization or a uniform alpha copy to build it. Each
/// iteration analyzes the current design, records history, and (except after
/// the final analysis) applies one MMA update, so the emitted state matches
/// the last history row exactly.
OptimizationState run_optimization(const OptimizationConfig& cfg, const CartesianGrid& grid,
                                   const BoundaryConditions& bc, const ScalarField& phi_init,
                                   const RunCallbacks& callbacks = {});

struct SensitivityFields {
    std::vector<double> dc_drho;
    std::vector<double> dg_drho;
    std::vector<double> ratio;  // -dc/drho / dg/drho, 0 where dg/drho ~ 0
};

SensitivityFields sensitivity_diagnostics(const OptimizationState& state);

}  // namespace infilltopo
