#include "infilltopo/stress.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace infilltopo {

namespace {
constexpr double kIsoEps = 1e-9;
}

PrincipalDecomposition principal_decomposition(const StressTensor& t) {
    PrincipalDecomposition d;
    const double mean = 0.5 * (t.sxx + t.syy);
    const double dev = 0.5 * (t.sxx - t.syy);
    const double rad = std::hypot(dev, t.txy);
    d.s1 = mean + rad;
    d.s2 = mean - rad;
    d.degenerate = (d.s1 - d.s2) <= kIsoEps * std::max(1.0, std::abs(d.s1) + std::abs(d.s2));

    const double theta = 0.5 * std::atan2(t.txy, dev);
    d.v1x = std::cos(theta);
    d.v1y = std::sin(theta);
    d.v2x = -d.v1y;
    d.v2y = d.v1x;
    auto orient = [](double& x, double& y) {
        if (x < 0.0 || (x == 0.0 && y < 0.0)) {
            x = -x;
            y = -y;
        }
    };
    orient(d.v1x, d.v1y);
    orient(d.v2x, d.v2y);
    return d;
}

NodalTensorField::NodalTensorField(const CartesianGrid& grid, std::vector<StressTensor> nodal)
    : grid_(&grid), nodal_(std::move(nodal)) {
    if (nodal_.size() != static_cast<size_t>(grid.num_nodes())) {
        throw std::invalid_argument("nodal tensor count does not match the grid");
    }
}

NodalTensorField NodalTensorField::recover(const CartesianGrid& grid, const DisplacementField& U,
                                           const MaterialModel& mat) {
    if (U.u.size() != static_cast<size_t>(2) * grid.num_nodes()) {
        throw std::invalid_argument("displacement field size mismatch");
    }
    const double f = mat.E0 / (1.0 - mat.nu * mat.nu);
    const double shear = f * (1.0 - mat.nu) / 2.0;

    std::vector<StressTensor> acc(grid.num_nodes());
    std::vector<int> hits(grid.num_nodes(), 0);
    // Corner local coordinates in node order (lower-left, lower-right,
    // upper-right, upper-left).
    const double cu[4] = {0.0, 1.0, 1.0, 0.0};
    const double cv[4] = {0.0, 0.0, 1.0, 1.0};

    const int n = grid.num_elements();
    for (int e = 0; e < n; ++e) {
        int nodes[4];
        grid.element_nodes(e, nodes);
        double ux[4], uy[4];
        for (int k = 0; k < 4; ++k) {
            ux[k] = U.u[2 * nodes[k]];
            uy[k] = U.u[2 * nodes[k] + 1];
        }
        for (int k = 0; k < 4; ++k) {
            const double u = cu[k], v = cv[k];
            const double dNdx[4] = {-(1.0 - v), (1.0 - v), v, -v};
            const double dNdy[4] = {-(1.0 - u), -u, u, (1.0 - u)};
            double exx = 0.0, eyy = 0.0, gxy = 0.0;
            for (int m = 0; m < 4; ++m) {
                exx += dNdx[m] * ux[m];
                eyy += dNdy[m] * uy[m];
                gxy += dNdy[m] * ux[m] + dNdx[m] * uy[m];
            }
            StressTensor& t = acc[nodes[k]];
            t.sxx += f * (exx + mat.nu * eyy);
            t.syy += f * (mat.nu * exx + eyy);
            t.txy += shear * gxy;
            hits[nodes[k]] += 1;
        }
    }
    for (size_t i = 0; i < acc.size(); ++i) {
        if (hits[i] > 1) {
            acc[i].sxx /= hits[i];
            acc[i].syy /= hits[i];
            acc[i].txy /= hits[i];
        }
    }
    return NodalTensorField(grid, std::move(acc));
}

StressTensor NodalTensorField::eval(double x, double y) const {
    if (!grid_->inside(x, y)) {
        throw std::domain_error("tensor evaluation outside the active domain");
    }
    int i, j;
    grid_->containing_cell(x, y, i, j);
    if (!grid_->cell_active(i, j)) {
        // The point sits on the edge of an inactive cell; shift to the active
        // neighbor that made inside() true.
        if (x == std::floor(x) && grid_->cell_active(i - 1, j)) {
            i -= 1;
        } else if (y == std::floor(y) && grid_->cell_active(i, j - 1)) {
            j -= 1;
        } else if (x == std::floor(x) && y == std::floor(y) &&
                   grid_->cell_active(i - 1, j - 1)) {
            i -= 1;
            j -= 1;
        }
    }
    const double u = x - i, v = y - j;
    const auto c = cell_corners(i, j);
    const double w00 = (1.0 - u) * (1.0 - v), w10 = u * (1.0 - v);
    const double w01 = (1.0 - u) * v, w11 = u * v;
    StressTensor t;
    t.sxx = w00 * c[0].sxx + w10 * c[1].sxx + w01 * c[2].sxx + w11 * c[3].sxx;
    t.syy = w00 * c[0].syy + w10 * c[1].syy + w01 * c[2].syy + w11 * c[3].syy;
    t.txy = w00 * c[0].txy + w10 * c[1].txy + w01 * c[2].txy + w11 * c[3].txy;
    return t;
}

std::array<StressTensor, 4> NodalTensorField::cell_corners(int i, int j) const {
    return {nodal_[grid_->node_id(i, j)], nodal_[grid_->node_id(i + 1, j)],
            nodal_[grid_->node_id(i, j + 1)], nodal_[grid_->node_id(i + 1, j + 1)]};
}

void NodalTensorField::export_table(std::ostream& os) const {
    os << "node\tx\ty\tsxx\tsyy\ttxy\n";
    char buf[160];
    for (int node = 0; node < grid_->num_nodes(); ++node) {
        const StressTensor& t = nodal_[node];
        std::snprintf(buf, sizeof(buf), "%d\t%g\t%g\t%.12g\t%.12g\t%.12g\n", node,
                      grid_->node_x(node), grid_->node_y(node), t.sxx, t.syy, t.txy);
        os << buf;
    }
}

NodalTensorField recover_nodal_stress(const CartesianGrid& grid, const DisplacementField& U,
                                      const MaterialModel& mat) {
    return NodalTensorField::recover(grid, U, mat);
}

StressTensor eval_tensor(const NodalTensorField& f, double x, double y) {
    return f.eval(x, y);
}

}  // namespace infilltopo
