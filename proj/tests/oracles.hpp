#pragma once

// Independent reference implementations used as test oracles. Everything here
// is deliberately brute-force and kept free of the production code paths it
// checks.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "infilltopo/grid.hpp"
#include "infilltopo/stress.hpp"

namespace oracles {

// All active elements within centroid distance R of element e, by direct
// enumeration over the whole grid.
inline std::vector<int> brute_force_neighbors(const infilltopo::CartesianGrid& g, int e,
                                              double R) {
    std::vector<int> out;
    const double ex = g.centroid_x(e), ey = g.centroid_y(e);
    for (int i = 0; i < g.num_elements(); ++i) {
        const double dx = g.centroid_x(i) - ex;
        const double dy = g.centroid_y(i) - ey;
        if (std::sqrt(dx * dx + dy * dy) <= R) out.push_back(i);
    }
    return out;
}

// Cone-weight filter by direct evaluation.
inline std::vector<double> brute_force_cone_filter(const infilltopo::CartesianGrid& g,
                                                   const std::vector<double>& in, double r) {
    std::vector<double> out(in.size(), 0.0);
    for (int e = 0; e < g.num_elements(); ++e) {
        double acc = 0.0, wsum = 0.0;
        for (int i = 0; i < g.num_elements(); ++i) {
            const double d = std::hypot(g.centroid_x(i) - g.centroid_x(e),
                                        g.centroid_y(i) - g.centroid_y(e));
            const double w = std::max(0.0, r - d);
            acc += w * in[i];
            wsum += w;
        }
        out[e] = acc / wsum;
    }
    return out;
}

// Plane-stress unit-square Q4 stiffness from the closed-form coefficient
// table (Sigmund's 99-line formulation), independent of the quadrature route.
inline Eigen::Matrix<double, 8, 8> closed_form_ke(double nu) {
    const double k[8] = {0.5 - nu / 6.0,        0.125 + nu / 8.0, -0.25 - nu / 12.0,
                         -0.125 + 3.0 * nu / 8.0, -0.25 + nu / 12.0, -0.125 - nu / 8.0,
                         nu / 6.0,              0.125 - 3.0 * nu / 8.0};
    const int idx[8][8] = {
        {0, 1, 2, 3, 4, 5, 6, 7}, {1, 0, 7, 6, 5, 4, 3, 2}, {2, 7, 0, 5, 6, 3, 4, 1},
        {3, 6, 5, 0, 7, 2, 1, 4}, {4, 5, 6, 7, 0, 1, 2, 3}, {5, 4, 3, 2, 1, 0, 7, 6},
        {6, 3, 4, 1, 2, 7, 0, 5}, {7, 2, 1, 4, 3, 6, 5, 0}};
    Eigen::Matrix<double, 8, 8> ke;
    const double f = 1.0 / (1.0 - nu * nu);
    for (int a = 0; a < 8; ++a) {
        for (int b = 0; b < 8; ++b) ke(a, b) = f * k[idx[a][b]];
    }
    return ke;
}

// Dense single-element solve: bottom nodes fully fixed, unit upward load
// split over the top nodes. Returns the 8-dof displacement vector.
inline Eigen::Matrix<double, 8, 1> dense_single_element_solve(double nu, double E) {
    const Eigen::Matrix<double, 8, 8> ke = E * closed_form_ke(nu);
    // Node order: (0,0), (1,0), (1,1), (0,1); fix dofs 0..3 (both bottom nodes).
    const int free_dofs[4] = {4, 5, 6, 7};
    Eigen::Matrix4d K;
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) K(a, b) = ke(free_dofs[a], free_dofs[b]);
    }
    Eigen::Vector4d F(0.0, 0.5, 0.0, 0.5);  // +y on each top node
    const Eigen::Vector4d u = K.fullPivLu().solve(F);
    Eigen::Matrix<double, 8, 1> full = Eigen::Matrix<double, 8, 1>::Zero();
    for (int a = 0; a < 4; ++a) full[free_dofs[a]] = u[a];
    return full;
}

// Nodal tensors of the linear deviator field sxx - syy = 2x - 1, txy given by
// sign * (2y - 1); syy = 0. sign=+1 makes a wedge at (0.5, 0.5), sign=-1 a
// trisector.
inline infilltopo::NodalTensorField linear_deviator_field(const infilltopo::CartesianGrid& g,
                                                          double sign) {
    std::vector<infilltopo::StressTensor> nodal(g.num_nodes());
    for (int n = 0; n < g.num_nodes(); ++n) {
        const double x = g.node_x(n), y = g.node_y(n);
        nodal[n].sxx = 2.0 * x - 1.0;
        nodal[n].syy = 0.0;
        nodal[n].txy = sign * (2.0 * y - 1.0);
    }
    return infilltopo::NodalTensorField(g, std::move(nodal));
}

inline std::mt19937 rng(unsigned seed = 12345) { return std::mt19937(seed); }

}  // namespace oracles
