#include <doctest.h>

#include <cmath>
#include <random>

#include "infilltopo/stress.hpp"
#include "oracles.hpp"

using namespace infilltopo;

namespace {

StressTensor reconstruct(const PrincipalDecomposition& d) {
    StressTensor t;
    t.sxx = d.s1 * d.v1x * d.v1x + d.s2 * d.v2x * d.v2x;
    t.syy = d.s1 * d.v1y * d.v1y + d.s2 * d.v2y * d.v2y;
    t.txy = d.s1 * d.v1x * d.v1y + d.s2 * d.v2x * d.v2y;
    return t;
}

}  // namespace

TEST_CASE("principal decomposition on canonical tensors") {
    {
        const auto d = principal_decomposition({2.0, 1.0, 0.0});
        CHECK(d.s1 == doctest::Approx(2.0));
        CHECK(d.s2 == doctest::Approx(1.0));
        CHECK(d.v1x == doctest::Approx(1.0));
        CHECK(std::abs(d.v1y) < 1e-15);
        CHECK(std::abs(d.v2x) < 1e-15);
        CHECK(d.v2y == doctest::Approx(1.0));
        CHECK(!d.degenerate);
    }
    {
        // Pure shear: eigen directions at +-45 degrees.
        const auto d = principal_decomposition({0.0, 0.0, 1.0});
        CHECK(d.s1 == doctest::Approx(1.0));
        CHECK(d.s2 == doctest::Approx(-1.0));
        CHECK(d.v1x == doctest::Approx(std::sqrt(0.5)));
        CHECK(d.v1y == doctest::Approx(std::sqrt(0.5)));
    }
    {
        const auto d = principal_decomposition({0.7, 0.7, 0.0});
        CHECK(d.degenerate);
        CHECK(d.s1 == doctest::Approx(0.7));
        CHECK(d.s2 == doctest::Approx(0.7));
    }
}

TEST_CASE("decomposition reconstructs random tensors and respects conventions") {
    std::mt19937 gen = oracles::rng(21);
    std::uniform_real_distribution<double> comp(-5.0, 5.0);
    for (int trial = 0; trial < 500; ++trial) {
        const StressTensor t{comp(gen), comp(gen), comp(gen)};
        const auto d = principal_decomposition(t);
        CHECK(d.s1 >= d.s2);
        CHECK(std::abs(d.v1x * d.v2x + d.v1y * d.v2y) < 1e-14);
        CHECK(std::hypot(d.v1x, d.v1y) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(d.v1x >= -1e-15);
        const auto r = reconstruct(d);
        const double scale = 1.0 + std::abs(t.sxx) + std::abs(t.syy) + std::abs(t.txy);
        CHECK(std::abs(r.sxx - t.sxx) <= 1e-12 * scale);
        CHECK(std::abs(r.syy - t.syy) <= 1e-12 * scale);
        CHECK(std::abs(r.txy - t.txy) <= 1e-12 * scale);
    }
}

TEST_CASE("rotation equivariance of the decomposition") {
    std::mt19937 gen = oracles::rng(22);
    std::uniform_real_distribution<double> comp(-3.0, 3.0);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
    for (int trial = 0; trial < 200; ++trial) {
        StressTensor t{comp(gen), comp(gen), comp(gen)};
        const auto d0 = principal_decomposition(t);
        if (d0.degenerate) continue;
        const double th = ang(gen);
        const double c = std::cos(th), s = std::sin(th);
        // Rotate: S' = Q S Q^T.
        StressTensor tr;
        tr.sxx = c * c * t.sxx - 2.0 * s * c * t.txy + s * s * t.syy;
        tr.syy = s * s * t.sxx + 2.0 * s * c * t.txy + c * c * t.syy;
        tr.txy = s * c * (t.sxx - t.syy) + (c * c - s * s) * t.txy;
        const auto dr = principal_decomposition(tr);
        CHECK(dr.s1 == doctest::Approx(d0.s1).epsilon(1e-10));
        CHECK(dr.s2 == doctest::Approx(d0.s2).epsilon(1e-10));
        // Rotated eigenvector matches up to sign.
        const double ex = c * d0.v1x - s * d0.v1y;
        const double ey = s * d0.v1x + c * d0.v1y;
        const double align = std::abs(ex * dr.v1x + ey * dr.v1y);
        CHECK(align == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("bilinear interpolation identities") {
    const CartesianGrid g = build_grid(3, 2);
    std::vector<StressTensor> nodal(g.num_nodes());
    std::mt19937 gen = oracles::rng(23);
    std::uniform_real_distribution<double> comp(-2.0, 2.0);
    for (auto& t : nodal) t = {comp(gen), comp(gen), comp(gen)};
    const NodalTensorField f(g, nodal);

    // At a node.
    const auto tn = f.eval(1.0, 1.0);
    const auto& stored = f.at_node(g.node_id(1, 1));
    CHECK(tn.sxx == doctest::Approx(stored.sxx));
    CHECK(tn.txy == doctest::Approx(stored.txy));

    // Cell center = average of 4 corners.
    const auto cc = f.eval(1.5, 0.5);
    const auto c4 = f.cell_corners(1, 0);
    CHECK(cc.sxx == doctest::Approx(0.25 * (c4[0].sxx + c4[1].sxx + c4[2].sxx + c4[3].sxx)));
    CHECK(cc.syy == doctest::Approx(0.25 * (c4[0].syy + c4[1].syy + c4[2].syy + c4[3].syy)));

    // Edge midpoint = average of the two edge nodes.
    const auto em = f.eval(1.0, 0.5);
    const auto& a = f.at_node(g.node_id(1, 0));
    const auto& b = f.at_node(g.node_id(1, 1));
    CHECK(em.txy == doctest::Approx(0.5 * (a.txy + b.txy)));

    // Second differences of the interpolant vanish along axis lines.
    auto second_diff = [&](double x, double y, double hx, double hy) {
        const double f0 = f.eval(x - hx, y - hy).txy;
        const double f1 = f.eval(x, y).txy;
        const double f2 = f.eval(x + hx, y + hy).txy;
        return f0 - 2.0 * f1 + f2;
    };
    CHECK(std::abs(second_diff(1.5, 0.5, 0.2, 0.0)) < 1e-14);
    CHECK(std::abs(second_diff(1.5, 0.5, 0.0, 0.15)) < 1e-14);

    CHECK_THROWS(f.eval(-0.5, 0.5));
    CHECK_THROWS(f.eval(3.5, 0.5));
}

TEST_CASE("recovery reproduces a constant-strain state exactly") {
    const int nx = 5, ny = 4;
    const CartesianGrid g = build_grid(nx, ny);
    MaterialModel mat;
    // Prescribe u = (a x + b y, c x + d y): constant strain.
    const double a = 1e-3, b = 2e-3, c = -5e-4, d = 7e-4;
    DisplacementField U;
    U.u.assign(2 * g.num_nodes(), 0.0);
    for (int n = 0; n < g.num_nodes(); ++n) {
        const double x = g.node_x(n), y = g.node_y(n);
        U.u[2 * n] = a * x + b * y;
        U.u[2 * n + 1] = c * x + d * y;
    }
    const auto f = recover_nodal_stress(g, U, mat);
    const double fac = mat.E0 / (1.0 - mat.nu * mat.nu);
    const double sxx = fac * (a + mat.nu * d);
    const double syy = fac * (mat.nu * a + d);
    const double txy = fac * (1.0 - mat.nu) / 2.0 * (b + c);
    for (int n = 0; n < g.num_nodes(); ++n) {
        CHECK(f.at_node(n).sxx == doctest::Approx(sxx).epsilon(1e-13));
        CHECK(f.at_node(n).syy == doctest::Approx(syy).epsilon(1e-13));
        CHECK(f.at_node(n).txy == doctest::Approx(txy).epsilon(1e-13));
    }
}

TEST_CASE("rigid-body displacement recovers a zero tensor") {
    const CartesianGrid g = build_grid(4, 4);
    MaterialModel mat;
    DisplacementField U;
    U.u.assign(2 * g.num_nodes(), 0.0);
    for (int n = 0; n < g.num_nodes(); ++n) {
        U.u[2 * n] = 0.3;
        U.u[2 * n + 1] = -0.1;
    }
    const auto f = recover_nodal_stress(g, U, mat);
    for (int n = 0; n < g.num_nodes(); ++n) {
        CHECK(std::abs(f.at_node(n).sxx) < 1e-14);
        CHECK(std::abs(f.at_node(n).syy) < 1e-14);
        CHECK(std::abs(f.at_node(n).txy) < 1e-14);
    }
}

TEST_CASE("single-element recovery has no averaging partners") {
    const CartesianGrid g = build_grid(1, 1);
    MaterialModel mat;
    DisplacementField U;
    U.u.assign(8, 0.0);
    std::mt19937 gen = oracles::rng(24);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto& v : U.u) v = u(gen);
    const auto f = recover_nodal_stress(g, U, mat);

    // Independent corner evaluation for node (1,1) (= local corner (1,1)).
    const double fac = mat.E0 / (1.0 - mat.nu * mat.nu);
    const double dNdx[4] = {0.0, 0.0, 1.0, -1.0};  // at (u,v)=(1,1): {-(1-v),(1-v),v,-v}
    const double dNdy[4] = {0.0, -1.0, 1.0, 0.0};  // at (1,1): {-(1-u),-u,u,(1-u)}
    int nodes[4];
    g.element_nodes(0, nodes);
    double exx = 0.0, eyy = 0.0, gxy = 0.0;
    for (int k = 0; k < 4; ++k) {
        exx += dNdx[k] * U.u[2 * nodes[k]];
        eyy += dNdy[k] * U.u[2 * nodes[k] + 1];
        gxy += dNdy[k] * U.u[2 * nodes[k]] + dNdx[k] * U.u[2 * nodes[k] + 1];
    }
    const auto& t = f.at_node(g.node_id(1, 1));
    CHECK(t.sxx == doctest::Approx(fac * (exx + mat.nu * eyy)).epsilon(1e-13));
    CHECK(t.syy == doctest::Approx(fac * (mat.nu * exx + eyy)).epsilon(1e-13));
    CHECK(t.txy == doctest::Approx(fac * (1.0 - mat.nu) / 2.0 * gxy).epsilon(1e-13));
}
