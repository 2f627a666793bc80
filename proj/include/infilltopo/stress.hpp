#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "infilltopo/fem.hpp"
#include "infilltopo/grid.hpp"

namespace infilltopo {

/// Symmetric 2x2 stress tensor.
struct StressTensor {
    double sxx = 0.0;
    double syy = 0.0;
    double txy = 0.0;
};

/// Eigen-decomposition of a stress tensor, eigenvalues sorted s1 >= s2.
/// Eigenvectors are unit length with a fixed sign convention (nonnegative x
/// component, ties resolved toward nonnegative y) so results are
/// deterministic.
struct PrincipalDecomposition {
    double s1 = 0.0;
    double s2 = 0.0;
    double v1x = 1.0, v1y = 0.0;
    double v2x = 0.0, v2y = 1.0;
    bool degenerate = false;
};

PrincipalDecomposition principal_decomposition(const StressTensor& t);

/// Stress tensors at grid nodes with bilinear in-cell interpolation.
class NodalTensorField {
public:
    NodalTensorField(const CartesianGrid& grid, std::vector<StressTensor> nodal);

    /// Recovers nodal stress from a solid-domain displacement field: each
    /// active element evaluates the constitutive law at its four corners and
    /// incident elements average their corner contributions per node.
    static NodalTensorField recover(const CartesianGrid& grid, const DisplacementField& U,
                                    const MaterialModel& mat);

    const CartesianGrid& grid() const { return *grid_; }
    const StressTensor& at_node(int node) const { return nodal_[node]; }

    /// Bilinear interpolation at a point inside the active domain; throws
    /// std::domain_error outside.
    StressTensor eval(double x, double y) const;

    /// Corner tensors of cell (i,j) in bilinear order:
    /// [0]=(i,j) [1]=(i+1,j) [2]=(i,j+1) [3]=(i+1,j+1).
    std::array<StressTensor, 4> cell_corners(int i, int j) const;

    /// Plain-text table: node index, x, y, sxx, syy, txy.
    void export_table(std::ostream& os) const;

private:
    const CartesianGrid* grid_;
    std::vector<StressTensor> nodal_;
};

NodalTensorField recover_nodal_stress(const CartesianGrid& grid, const DisplacementField& U,
                                      const MaterialModel& mat);

StressTensor eval_tensor(const NodalTensorField& f, double x, double y);

}  // namespace infilltopo
