#include "infilltopo/fem.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <stdexcept>

namespace infilltopo {

double simp_modulus(double rho, const MaterialModel& mat) {
    return mat.Emin + std::pow(rho, mat.gamma) * (mat.E0 - mat.Emin);
}

namespace {

// Plane-stress B matrix of the unit-square bilinear quad at local (u,v).
// Shape functions: N0=(1-u)(1-v), N1=u(1-v), N2=uv, N3=(1-u)v.
Eigen::Matrix<double, 3, 8> strain_displacement(double u, double v) {
    const double dNdx[4] = {-(1.0 - v), (1.0 - v), v, -v};
    const double dNdy[4] = {-(1.0 - u), -u, u, (1.0 - u)};
    Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
    for (int k = 0; k < 4; ++k) {
        B(0, 2 * k) = dNdx[k];
        B(1, 2 * k + 1) = dNdy[k];
        B(2, 2 * k) = dNdy[k];
        B(2, 2 * k + 1) = dNdx[k];
    }
    return B;
}

Eigen::Matrix3d plane_stress_constitutive(double E, double nu) {
    Eigen::Matrix3d D;
    const double f = E / (1.0 - nu * nu);
    D << f, f * nu, 0.0, f * nu, f, 0.0, 0.0, 0.0, f * (1.0 - nu) / 2.0;
    return D;
}

}  // namespace

Eigen::Matrix<double, 8, 8> element_stiffness_unit(double nu) {
    if (!(nu > -1.0 && nu < 0.5)) {
        throw std::invalid_argument("Poisson ratio must lie in (-1, 0.5)");
    }
    const Eigen::Matrix3d D = plane_stress_constitutive(1.0, nu);
    Eigen::Matrix<double, 8, 8> ke = Eigen::Matrix<double, 8, 8>::Zero();
    const double g = 1.0 / (2.0 * std::sqrt(3.0));
    const double pts[2] = {0.5 - g, 0.5 + g};
    for (double u : pts) {
        for (double v : pts) {
            const auto B = strain_displacement(u, v);
            ke += 0.25 * B.transpose() * D * B;
        }
    }
    return ke;
}

struct FemSolver::Factorization {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
};

FemSolver::~FemSolver() = default;
FemSolver::FemSolver(FemSolver&&) noexcept = default;
FemSolver& FemSolver::operator=(FemSolver&&) noexcept = default;

FemSolver::FemSolver(const CartesianGrid& grid, const BoundaryConditions& bc,
                     const MaterialModel& mat, SolverKind kind, double tolerance)
    : grid_(&grid), mat_(mat), kind_(kind), tol_(tolerance), fact_(new Factorization) {
    bc.validate(grid);
    ke_ = element_stiffness_unit(mat.nu);

    const int ndof = 2 * grid.num_nodes();
    std::vector<char> fixed(ndof, 0);
    for (const auto& [node, dir] : bc.fixed_dofs) {
        fixed[2 * node + dir] = 1;
    }
    full_to_free_.assign(ndof, -1);
    num_free_ = 0;
    for (int d = 0; d < ndof; ++d) {
        if (!fixed[d]) full_to_free_[d] = num_free_++;
    }
    if (num_free_ == 0) {
        throw std::invalid_argument("all dofs fixed");
    }

    const int n = grid.num_elements();
    elem_free_dof_.assign(static_cast<size_t>(n) * 8, -1);
    for (int e = 0; e < n; ++e) {
        int nodes[4];
        grid.element_nodes(e, nodes);
        for (int k = 0; k < 4; ++k) {
            elem_free_dof_[8 * e + 2 * k] = full_to_free_[2 * nodes[k]];
            elem_free_dof_[8 * e + 2 * k + 1] = full_to_free_[2 * nodes[k] + 1];
        }
    }

    // Fixed-dof elimination keeps the reduced system SPD; build the pattern
    // once, then cache the CSC slot of every element contribution.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(n) * 64);
    for (int e = 0; e < n; ++e) {
        const int* dofs = &elem_free_dof_[8 * e];
        for (int a = 0; a < 8; ++a) {
            if (dofs[a] < 0) continue;
            for (int b = 0; b < 8; ++b) {
                if (dofs[b] < 0) continue;
                trips.emplace_back(dofs[a], dofs[b], 0.0);
            }
        }
    }
    K_.resize(num_free_, num_free_);
    K_.setFromTriplets(trips.begin(), trips.end());
    K_.makeCompressed();

    elem_dest_.assign(static_cast<size_t>(n) * 64, -1);
    const int* outer = K_.outerIndexPtr();
    const int* inner = K_.innerIndexPtr();
    auto slot = [&](int row, int col) -> int64_t {
        const int lo = outer[col], hi = outer[col + 1];
        const int* it = std::lower_bound(inner + lo, inner + hi, row);
        return it - inner;
    };
    for (int e = 0; e < n; ++e) {
        const int* dofs = &elem_free_dof_[8 * e];
        for (int a = 0; a < 8; ++a) {
            if (dofs[a] < 0) continue;
            for (int b = 0; b < 8; ++b) {
                if (dofs[b] < 0) continue;
                elem_dest_[64 * e + 8 * a + b] = slot(dofs[a], dofs[b]);
            }
        }
    }

    F_ = Eigen::VectorXd::Zero(num_free_);
    for (const auto& l : bc.loads) {
        const int fx = full_to_free_[2 * l.node];
        const int fy = full_to_free_[2 * l.node + 1];
        if (fx >= 0) F_[fx] += l.fx;
        if (fy >= 0) F_[fy] += l.fy;
    }
    fnorm_ = F_.norm();
}

std::pair<DisplacementField, LinearSystemSummary> FemSolver::solve(const ScalarField& rho) {
    return solve(rho.values);
}

std::pair<DisplacementField, LinearSystemSummary> FemSolver::solve(const std::vector<double>& rho) {
    const int n = grid_->num_elements();
    if (rho.size() != static_cast<size_t>(n)) {
        throw std::invalid_argument("density field size mismatch");
    }
    double* vals = K_.valuePtr();
    std::fill(vals, vals + K_.nonZeros(), 0.0);
    for (int e = 0; e < n; ++e) {
        const double Ee = simp_modulus(rho[e], mat_);
        const int64_t* dest = &elem_dest_[64 * e];
        for (int a = 0; a < 8; ++a) {
            for (int b = 0; b < 8; ++b) {
                const int64_t s = dest[8 * a + b];
                if (s >= 0) vals[s] += Ee * ke_(a, b);
            }
        }
    }

    Eigen::VectorXd x;
    LinearSystemSummary summary;
    if (kind_ == SolverKind::Direct) {
        summary.solver = "simplicial-ldlt";
        if (!analyzed_) {
            fact_->ldlt.analyzePattern(K_);
            analyzed_ = true;
        }
        fact_->ldlt.factorize(K_);
        if (fact_->ldlt.info() != Eigen::Success) {
            throw std::runtime_error("stiffness factorization failed (insufficient supports?)");
        }
        x = fact_->ldlt.solve(F_);
    } else {
        summary.solver = "cg-incomplete-cholesky";
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                                 Eigen::IncompleteCholesky<double>>
            cg;
        cg.setTolerance(tol_ * 1e-2);
        cg.setMaxIterations(20000);
        cg.compute(K_);
        x = cg.solve(F_);
        summary.iterations = static_cast<int>(cg.iterations());
        if (cg.info() != Eigen::Success) {
            throw std::runtime_error("conjugate gradient did not converge");
        }
    }
    summary.rel_residual = fnorm_ > 0.0 ? (K_ * x - F_).norm() / fnorm_ : 0.0;
    if (!x.allFinite() || summary.rel_residual > std::max(tol_, 1e-8)) {
        throw std::runtime_error("linear solve failed the residual contract (rel residual " +
                                 std::to_string(summary.rel_residual) + ")");
    }

    DisplacementField U;
    U.u.assign(static_cast<size_t>(2) * grid_->num_nodes(), 0.0);
    for (size_t d = 0; d < U.u.size(); ++d) {
        const int fd = full_to_free_[d];
        if (fd >= 0) U.u[d] = x[fd];
    }
    return {std::move(U), std::move(summary)};
}

double FemSolver::compliance(const DisplacementField& U) const {
    double c = 0.0;
    for (size_t d = 0; d < U.u.size(); ++d) {
        const int fd = full_to_free_[d];
        if (fd >= 0) c += U.u[d] * F_[fd];
    }
    return 0.5 * c;
}

void FemSolver::gather_element(const DisplacementField& U, int e,
                               Eigen::Matrix<double, 8, 1>& ue) const {
    int nodes[4];
    grid_->element_nodes(e, nodes);
    for (int k = 0; k < 4; ++k) {
        ue[2 * k] = U.u[2 * nodes[k]];
        ue[2 * k + 1] = U.u[2 * nodes[k] + 1];
    }
}

double FemSolver::unit_strain_energy(const DisplacementField& U, int e) const {
    Eigen::Matrix<double, 8, 1> ue;
    gather_element(U, e, ue);
    return ue.dot(ke_ * ue);
}

double FemSolver::element_strain_energy(const DisplacementField& U, int e, double rho_e) const {
    return simp_modulus(rho_e, mat_) * unit_strain_energy(U, e);
}

std::pair<DisplacementField, LinearSystemSummary> assemble_and_solve(
    const CartesianGrid& grid, const ScalarField& rho, const BoundaryConditions& bc,
    const MaterialModel& mat, SolverKind kind) {
    FemSolver solver(grid, bc, mat, kind);
    return solver.solve(rho);
}

}  // namespace infilltopo
