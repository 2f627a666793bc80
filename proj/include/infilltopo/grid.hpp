#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace infilltopo {

/// Rectangular design domain of unit-size square elements.
///
/// Elements and nodes are numbered row-major with x fastest. Elements may be
/// deactivated through a boolean mask; active elements carry compact indices
/// 0..n-1 used by every per-element field. Nodes always live on the full
/// (nx+1) x (ny+1) lattice. Element (i,j) occupies [i,i+1]x[j,j+1] with its
/// centroid at (i+0.5, j+0.5).
class CartesianGrid {
public:
    CartesianGrid(int nx, int ny, std::vector<uint8_t> mask = {});

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    int num_elements() const { return static_cast<int>(cells_.size()); }
    int num_nodes() const { return (nx_ + 1) * (ny_ + 1); }

    bool cell_active(int i, int j) const {
        return in_range(i, j) && elem_id_[full_index(i, j)] >= 0;
    }
    /// Compact element id for cell (i,j), or -1 if inactive/out of range.
    int element_id(int i, int j) const {
        return in_range(i, j) ? elem_id_[full_index(i, j)] : -1;
    }
    /// Cell column/row of active element e.
    int cell_x(int e) const { return cells_[e] % nx_; }
    int cell_y(int e) const { return cells_[e] / nx_; }

    int node_id(int i, int j) const { return j * (nx_ + 1) + i; }
    double node_x(int node) const { return node % (nx_ + 1); }
    double node_y(int node) const { return node / (nx_ + 1); }

    /// The four nodes of element e, counterclockwise from the lower-left:
    /// (i,j), (i+1,j), (i+1,j+1), (i,j+1).
    void element_nodes(int e, int out[4]) const {
        const int i = cell_x(e), j = cell_y(e);
        out[0] = node_id(i, j);
        out[1] = node_id(i + 1, j);
        out[2] = node_id(i + 1, j + 1);
        out[3] = node_id(i, j + 1);
    }

    double centroid_x(int e) const { return cell_x(e) + 0.5; }
    double centroid_y(int e) const { return cell_y(e) + 0.5; }

    /// True when (x,y) lies inside the active domain. Points on the outer
    /// boundary or on shared cell edges resolve to a containing cell by
    /// clamping, so the whole closed domain counts as inside.
    bool inside(double x, double y) const;
    /// Containing cell of a point, clamped to the lattice; does not check
    /// the active mask.
    void containing_cell(double x, double y, int& i, int& j) const;

    bool has_mask() const { return masked_; }

private:
    bool in_range(int i, int j) const { return i >= 0 && i < nx_ && j >= 0 && j < ny_; }
    int full_index(int i, int j) const { return j * nx_ + i; }

    int nx_ = 0;
    int ny_ = 0;
    bool masked_ = false;
    std::vector<int> elem_id_;  // full lattice -> compact id or -1
    std::vector<int> cells_;    // compact id -> full lattice index
};

/// One scalar per active element.
struct ScalarField {
    ScalarField() = default;
    explicit ScalarField(const CartesianGrid& g, double fill = 0.0)
        : values(static_cast<size_t>(g.num_elements()), fill) {}
    std::vector<double> values;

    double& operator[](size_t e) { return values[e]; }
    double operator[](size_t e) const { return values[e]; }
    size_t size() const { return values.size(); }
};

/// Constant value or a linear ramp along x between the domain edges.
struct FieldSpec {
    enum class Kind { Constant, RampX } kind = Kind::Constant;
    double v0 = 0.0;
    double v1 = 0.0;

    static FieldSpec constant(double v) { return {Kind::Constant, v, v}; }
    static FieldSpec ramp_x(double left, double right) { return {Kind::RampX, left, right}; }
};

/// Supports and point loads, addressed by node id.
struct BoundaryConditions {
    struct Load {
        int node;
        double fx;
        double fy;
    };
    std::vector<std::pair<int, int>> fixed_dofs;  // (node, direction 0=x 1=y)
    std::vector<Load> loads;

    void fix(int node, int dir) { fixed_dofs.emplace_back(node, dir); }
    void add_load(int node, double fx, double fy) { loads.push_back({node, fx, fy}); }

    /// Throws std::invalid_argument on an empty support set, out-of-range
    /// nodes, or a load component applied on a dof fixed in that direction.
    void validate(const CartesianGrid& grid) const;
};

CartesianGrid build_grid(int nx, int ny, std::vector<uint8_t> mask = {});

ScalarField build_parameter_field(const CartesianGrid& grid, const FieldSpec& spec);

/// Element neighborhoods: N_e collects the active elements whose centroid lies
/// within distance R_e of element e's centroid. Counts are precomputed;
/// membership is evaluated through per-radius offset stencils instead of
/// storing every index list (a 500x250 grid at R=18 would need ~5e8 bytes).
class NeighborhoodTable {
public:
    static NeighborhoodTable build(const CartesianGrid& grid, const ScalarField& R);

    int count(int e) const { return counts_[e]; }
    double radius(int e) const { return radius_[e]; }
    bool homogeneous() const { return homogeneous_; }

    /// Materialized neighbor list of element e (ascending element id).
    std::vector<int> neighbors(int e) const;

    /// out[e] = mean of x over N_e.
    void disc_average(const std::vector<double>& x, std::vector<double>& out) const;

    /// out[i] = sum over all e with i in N_e of w[e] (transpose accumulation).
    void transpose_accumulate(const std::vector<double>& w, std::vector<double>& out) const;

    const CartesianGrid& grid() const { return *grid_; }

private:
    NeighborhoodTable() = default;

    // Inclusive x-extent of the disc of radius R at row offset dy.
    static int row_halfwidth(double R, int dy);
    void build_row_sums(const std::vector<double>& x) const;

    const CartesianGrid* grid_ = nullptr;
    std::vector<double> radius_;
    std::vector<int> counts_;
    bool homogeneous_ = true;
    int max_dy_ = 0;

    // scratch: per-row prefix sums over the full lattice, inactive cells = 0
    mutable std::vector<double> row_prefix_;  // (nx+1) entries per row
};

NeighborhoodTable build_neighborhoods(const CartesianGrid& grid, const ScalarField& R);

}  // namespace infilltopo
