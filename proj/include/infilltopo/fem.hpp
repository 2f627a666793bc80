#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "infilltopo/grid.hpp"

namespace infilltopo {

/// Modified SIMP material: E(rho) = Emin + rho^gamma * (E0 - Emin).
struct MaterialModel {
    double E0 = 1.0;
    double Emin = 1.0e-6;
    double nu = 0.3;
    double gamma = 3.0;
};

double simp_modulus(double rho, const MaterialModel& mat);

/// Plane-stress stiffness of a unit square bilinear quad with unit Young's
/// modulus, integrated with 2x2 Gauss quadrature. Node/dof order follows
/// CartesianGrid::element_nodes: (ux0,uy0,...,ux3,uy3) counterclockwise from
/// the lower-left corner.
Eigen::Matrix<double, 8, 8> element_stiffness_unit(double nu);

/// Per-node displacements, fixed dofs exactly zero. dof(node, dir) = 2*node+dir.
struct DisplacementField {
    std::vector<double> u;
    double ux(int node) const { return u[2 * node]; }
    double uy(int node) const { return u[2 * node + 1]; }
};

struct LinearSystemSummary {
    std::string solver;
    int iterations = 0;
    double rel_residual = 0.0;
};

enum class SolverKind { Direct, ConjugateGradient };

/// Assembles and solves K(rho) U = F on the active elements. The sparsity
/// pattern and the symbolic factorization are built once so repeated solves
/// during optimization only refill values and refactorize.
class FemSolver {
public:
    FemSolver(const CartesianGrid& grid, const BoundaryConditions& bc, const MaterialModel& mat,
              SolverKind kind = SolverKind::Direct, double tolerance = 1e-8);
    ~FemSolver();
    FemSolver(FemSolver&&) noexcept;
    FemSolver& operator=(FemSolver&&) noexcept;

    std::pair<DisplacementField, LinearSystemSummary> solve(const ScalarField& rho);
    std::pair<DisplacementField, LinearSystemSummary> solve(const std::vector<double>& rho);

    /// c = 1/2 U.F (equals 1/2 U^T K U at equilibrium).
    double compliance(const DisplacementField& U) const;

    /// u_e^T k_unit u_e for element e (unit-modulus energy density, >= 0).
    double unit_strain_energy(const DisplacementField& U, int e) const;
    /// E(rho_e) * u_e^T k_unit u_e; halves of these sum to the compliance.
    double element_strain_energy(const DisplacementField& U, int e, double rho_e) const;

    const Eigen::Matrix<double, 8, 8>& ke_unit() const { return ke_; }
    const CartesianGrid& grid() const { return *grid_; }
    const MaterialModel& material() const { return mat_; }

private:
    void gather_element(const DisplacementField& U, int e, Eigen::Matrix<double, 8, 1>& ue) const;

    const CartesianGrid* grid_;
    MaterialModel mat_;
    SolverKind kind_;
    double tol_;
    Eigen::Matrix<double, 8, 8> ke_;

    int num_free_ = 0;
    std::vector<int> full_to_free_;   // -1 for fixed dofs
    std::vector<int> elem_free_dof_;  // 8 entries per element (-1 = fixed)
    std::vector<int64_t> elem_dest_;  // index into the CSC value array, -1 = dropped
    Eigen::SparseMatrix<double> K_;
    Eigen::VectorXd F_;
    double fnorm_ = 0.0;

    struct Factorization;
    std::unique_ptr<Factorization> fact_;
    bool analyzed_ = false;
};

/// One-shot convenience wrapper around FemSolver.
std::pair<DisplacementField, LinearSystemSummary> assemble_and_solve(
    const CartesianGrid& grid, const ScalarField& rho, const BoundaryConditions& bc,
    const MaterialModel& mat, SolverKind kind = SolverKind::Direct);

}  // namespace infilltopo
