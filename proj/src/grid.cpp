#include "infilltopo/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace infilltopo {

CartesianGrid::CartesianGrid(int nx, int ny, std::vector<uint8_t> mask) : nx_(nx), ny_(ny) {
    if (nx < 1 || ny < 1) {
        throw std::invalid_argument("grid dimensions must be positive");
    }
    const size_t total = static_cast<size_t>(nx) * static_cast<size_t>(ny);
    if (!mask.empty() && mask.size() != total) {
        throw std::invalid_argument("mask size does not match nx*ny");
    }
    masked_ = !mask.empty();
    elem_id_.assign(total, -1);
    cells_.reserve(total);
    for (size_t c = 0; c < total; ++c) {
        if (mask.empty() || mask[c]) {
            elem_id_[c] = static_cast<int>(cells_.size());
            cells_.push_back(static_cast<int>(c));
        }
    }
    if (cells_.empty()) {
        throw std::invalid_argument("mask deactivates every element");
    }
    if (!masked_) {
        return;
    }
    // A fully-true mask behaves exactly like no mask.
    if (cells_.size() == total) {
        masked_ = false;
    }
}

bool CartesianGrid::inside(double x, double y) const {
    if (!(x >= 0.0 && x <= nx_ && y >= 0.0 && y <= ny_)) {
        return false;
    }
    int i, j;
    containing_cell(x, y, i, j);
    if (elem_id_[full_index(i, j)] >= 0) {
        return true;
    }
    if (!masked_) {
        return false;
    }
    // Points on a shared edge between an inactive and an active cell count as
    // inside; probe the neighbors the clamp may have skipped.
    const bool on_vx = (x == std::floor(x));
    const bool on_vy = (y == std::floor(y));
    for (int dj = (on_vy ? -1 : 0); dj <= 0; ++dj) {
        for (int di = (on_vx ? -1 : 0); di <= 0; ++di) {
            if (cell_active(i + di, j + dj)) {
                return true;
            }
        }
    }
    return false;
}

void CartesianGrid::containing_cell(double x, double y, int& i, int& j) const {
    i = std::clamp(static_cast<int>(std::floor(x)), 0, nx_ - 1);
    j = std::clamp(static_cast<int>(std::floor(y)), 0, ny_ - 1);
}

void BoundaryConditions::validate(const CartesianGrid& grid) const {
    if (fixed_dofs.empty()) {
        throw std::invalid_argument("no fixed dofs: the system would be singular");
    }
    const int nn = grid.num_nodes();
    for (const auto& [node, dir] : fixed_dofs) {
        if (node < 0 || node >= nn || dir < 0 || dir > 1) {
            throw std::invalid_argument("fixed dof out of range");
        }
    }
    for (const auto& l : loads) {
        if (l.node < 0 || l.node >= nn) {
            throw std::invalid_argument("load node out of range");
        }
        for (const auto& [node, dir] : fixed_dofs) {
            if (node != l.node) continue;
            const double f = (dir == 0) ? l.fx : l.fy;
            if (f != 0.0) {
                throw std::invalid_argument("load applied on a fixed dof in the same direction");
            }
        }
    }
}

CartesianGrid build_grid(int nx, int ny, std::vector<uint8_t> mask) {
    return CartesianGrid(nx, ny, std::move(mask));
}

ScalarField build_parameter_field(const CartesianGrid& grid, const FieldSpec& spec) {
    if (!std::isfinite(spec.v0) || !std::isfinite(spec.v1)) {
        throw std::invalid_argument("parameter field endpoints must be finite");
    }
    ScalarField f(grid);
    const int n = grid.num_elements();
    if (spec.kind == FieldSpec::Kind::Constant) {
        std::fill(f.values.begin(), f.values.end(), spec.v0);
        return f;
    }
    const double width = grid.nx();
    for (int e = 0; e < n; ++e) {
        const double t = grid.centroid_x(e) / width;
        f.values[e] = spec.v0 + (spec.v1 - spec.v0) * t;
    }
    return f;
}

int NeighborhoodTable::row_halfwidth(double R, int dy) {
    const double rem = R * R - static_cast<double>(dy) * dy;
    if (rem < 0.0) return -1;
    return static_cast<int>(std::floor(std::sqrt(rem) + 1e-12));
}

NeighborhoodTable NeighborhoodTable::build(const CartesianGrid& grid, const ScalarField& R) {
    if (R.size() != static_cast<size_t>(grid.num_elements())) {
        throw std::invalid_argument("radius field size mismatch");
    }
    NeighborhoodTable t;
    t.grid_ = &grid;
    t.radius_ = R.values;
    const int n = grid.num_elements();
    t.homogeneous_ = true;
    double rmax = 0.0;
    for (int e = 0; e < n; ++e) {
        const double r = t.radius_[e];
        if (!(r > 0.0)) {
            throw std::invalid_argument("neighborhood radius must be positive");
        }
        if (r != t.radius_[0]) t.homogeneous_ = false;
        rmax = std::max(rmax, r);
    }
    t.max_dy_ = static_cast<int>(std::floor(rmax + 1e-12));

    // Active-cell counts per disc via per-row prefix sums of the indicator.
    const int nx = grid.nx(), ny = grid.ny();
    std::vector<int> act_prefix(static_cast<size_t>(ny) * (nx + 1), 0);
    for (int j = 0; j < ny; ++j) {
        int* row = act_prefix.data() + static_cast<size_t>(j) * (nx + 1);
        for (int i = 0; i < nx; ++i) {
            row[i + 1] = row[i] + (grid.cell_active(i, j) ? 1 : 0);
        }
    }
    t.counts_.assign(n, 0);
    for (int e = 0; e < n; ++e) {
        const int ci = grid.cell_x(e), cj = grid.cell_y(e);
        const double r = t.radius_[e];
        const int dmax = static_cast<int>(std::floor(r + 1e-12));
        int cnt = 0;
        for (int dy = -dmax; dy <= dmax; ++dy) {
            const int j = cj + dy;
            if (j < 0 || j >= ny) continue;
            const int w = row_halfwidth(r, dy);
            const int lo = std::max(ci - w, 0);
            const int hi = std::min(ci + w, nx - 1);
            if (hi < lo) continue;
            const int* row = act_prefix.data() + static_cast<size_t>(j) * (nx + 1);
            cnt += row[hi + 1] - row[lo];
        }
        t.counts_[e] = cnt;
    }
    return t;
}

std::vector<int> NeighborhoodTable::neighbors(int e) const {
    const CartesianGrid& g = *grid_;
    const int ci = g.cell_x(e), cj = g.cell_y(e);
    const double r = radius_[e];
    const int dmax = static_cast<int>(std::floor(r + 1e-12));
    std::vector<int> out;
    out.reserve(counts_[e]);
    for (int dy = -dmax; dy <= dmax; ++dy) {
        const int w = row_halfwidth(r, dy);
        for (int dx = -w; dx <= w; ++dx) {
            const int id = g.element_id(ci + dx, cj + dy);
            if (id >= 0) out.push_back(id);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

void NeighborhoodTable::build_row_sums(const std::vector<double>& x) const {
    const CartesianGrid& g = *grid_;
    const int nx = g.nx(), ny = g.ny();
    row_prefix_.assign(static_cast<size_t>(ny) * (nx + 1), 0.0);
    for (int j = 0; j < ny; ++j) {
        double* row = row_prefix_.data() + static_cast<size_t>(j) * (nx + 1);
        for (int i = 0; i < nx; ++i) {
            const int id = g.element_id(i, j);
            row[i + 1] = row[i] + (id >= 0 ? x[id] : 0.0);
        }
    }
}

void NeighborhoodTable::disc_average(const std::vector<double>& x, std::vector<double>& out) const {
    const CartesianGrid& g = *grid_;
    const int n = g.num_elements();
    const int nx = g.nx(), ny = g.ny();
    build_row_sums(x);
    out.assign(n, 0.0);
    for (int e = 0; e < n; ++e) {
        const int ci = g.cell_x(e), cj = g.cell_y(e);
        const double r = radius_[e];
        const int dmax = static_cast<int>(std::floor(r + 1e-12));
        double sum = 0.0;
        for (int dy = -dmax; dy <= dmax; ++dy) {
            const int j = cj + dy;
            if (j < 0 || j >= ny) continue;
            const int w = row_halfwidth(r, dy);
            const int lo = std::max(ci - w, 0);
            const int hi = std::min(ci + w, nx - 1);
            if (hi < lo) continue;
            const double* row = row_prefix_.data() + static_cast<size_t>(j) * (nx + 1);
            sum += row[hi + 1] - row[lo];
        }
        out[e] = sum / counts_[e];
    }
}

void NeighborhoodTable::transpose_accumulate(const std::vector<double>& w,
                                             std::vector<double>& out) const {
    const CartesianGrid& g = *grid_;
    const int n = g.num_elements();
    const int nx = g.nx(), ny = g.ny();
    out.assign(n, 0.0);
    if (homogeneous_) {
        // Membership is symmetric for a homogeneous radius, so the transpose
        // sum is the same disc sum.
        build_row_sums(w);
        const double r = radius_[0];
        const int dmax = max_dy_;
        for (int i = 0; i < n; ++i) {
            const int ci = g.cell_x(i), cj = g.cell_y(i);
            double sum = 0.0;
            for (int dy = -dmax; dy <= dmax; ++dy) {
                const int j = cj + dy;
                if (j < 0 || j >= ny) continue;
                const int hw = row_halfwidth(r, dy);
                const int lo = std::max(ci - hw, 0);
                const int hi = std::min(ci + hw, nx - 1);
                if (hi < lo) continue;
                const double* row = row_prefix_.data() + static_cast<size_t>(j) * (nx + 1);
                sum += row[hi + 1] - row[lo];
            }
            out[i] = sum;
        }
        return;
    }
    // Heterogeneous radii: i belongs to N_e iff dist(i,e) <= R_e, so each
    // candidate in the bounding box is tested against the source's radius.
    for (int i = 0; i < n; ++i) {
        const int ci = g.cell_x(i), cj = g.cell_y(i);
        double sum = 0.0;
        for (int dy = -max_dy_; dy <= max_dy_; ++dy) {
            const int j = cj + dy;
            if (j < 0 || j >= ny) continue;
            for (int dx = -max_dy_; dx <= max_dy_; ++dx) {
                const int id = g.element_id(ci + dx, j);
                if (id < 0) continue;
                const double re = radius_[id];
                if (static_cast<double>(dx) * dx + static_cast<double>(dy) * dy <= re * re) {
                    sum += w[id];
                }
            }
        }
        out[i] = sum;
    }
}

NeighborhoodTable build_neighborhoods(const CartesianGrid& grid, const ScalarField& R) {
    return NeighborhoodTable::build(grid, R);
}

}  // namespace infilltopo
