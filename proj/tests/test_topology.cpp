#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "infilltopo/tensor_topology.hpp"
#include "oracles.hpp"

using namespace infilltopo;

namespace {

std::array<StressTensor, 4> cell_from_deviator(const double D[4], const double T[4]) {
    // corners in bilinear order [00, 10, 01, 11]; syy = -sxx so sxx-syy = 2sxx.
    std::array<StressTensor, 4> c;
    for (int k = 0; k < 4; ++k) {
        c[k].sxx = 0.5 * D[k];
        c[k].syy = -0.5 * D[k];
        c[k].txy = T[k];
    }
    return c;
}

// Trisector field centered at (cx, cy): sxx = x-cx, syy = -(x-cx), txy = -(y-cy).
NodalTensorField centered_trisector_field(const CartesianGrid& g, double cx, double cy) {
    std::vector<StressTensor> nodal(g.num_nodes());
    for (int n = 0; n < g.num_nodes(); ++n) {
        const double x = g.node_x(n), y = g.node_y(n);
        nodal[n] = {x - cx, -(x - cx), -(y - cy)};
    }
    return NodalTensorField(g, std::move(nodal));
}

}  // namespace

TEST_CASE("corner-sign pre-filter") {
    {
        const double D[4] = {5.0, -1.0, 2.0, 3.0};
        const double T[4] = {1.0, 2.0, 3.0, 4.0};
        CHECK(classify_element(cell_from_deviator(D, T)) == CellClass::Excluded);
    }
    {
        const double D[4] = {-1.0, 1.0, 1.0, -1.0};
        const double T[4] = {-1.0, -1.0, 1.0, 1.0};
        CHECK(classify_element(cell_from_deviator(D, T)) == CellClass::Candidate);
    }
    {
        const double D[4] = {1.0, 1.0, 1.0, 1.0};
        const double T[4] = {-3.0, 2.0, -1.0, 0.5};
        CHECK(classify_element(cell_from_deviator(D, T)) == CellClass::Excluded);
    }
}

TEST_CASE("pre-filter soundness: excluded cells have no dense-sampled near-root") {
    std::mt19937 gen = oracles::rng(31);
    std::uniform_real_distribution<double> comp(-1.0, 1.0);
    int excluded = 0;
    for (int trial = 0; trial < 300; ++trial) {
        double D[4], T[4];
        double scale = 0.0;
        for (int k = 0; k < 4; ++k) {
            D[k] = comp(gen);
            T[k] = comp(gen);
            scale = std::max({scale, std::abs(D[k]), std::abs(T[k])});
        }
        const auto cell = cell_from_deviator(D, T);
        if (classify_element(cell) != CellClass::Excluded) continue;
        ++excluded;
        const double thresh = 1e-9 * scale;
        for (int a = 0; a < 50; ++a) {
            for (int b = 0; b < 50; ++b) {
                const double u = a / 49.0, v = b / 49.0;
                const double dv = D[0] * (1 - u) * (1 - v) + D[1] * u * (1 - v) +
                                  D[2] * (1 - u) * v + D[3] * u * v;
                const double tv = T[0] * (1 - u) * (1 - v) + T[1] * u * (1 - v) +
                                  T[2] * (1 - u) * v + T[3] * u * v;
                CHECK(!(std::abs(dv) < thresh && std::abs(tv) < thresh));
            }
        }
    }
    CHECK(excluded > 50);  // the sampling actually exercised the property
}

TEST_CASE("Newton location on hand-solvable bilinear cells") {
    {
        const double D[4] = {-1.0, 1.0, -1.0, 1.0};  // 2u-1
        const double T[4] = {-1.0, -1.0, 1.0, 1.0};  // 2v-1
        const auto loc = locate_degenerate_point(cell_from_deviator(D, T));
        REQUIRE(loc.has_value());
        CHECK((*loc)[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK((*loc)[1] == doctest::Approx(0.5).epsilon(1e-12));
    }
    {
        const double D[4] = {-1.0, 3.0, -1.0, 3.0};  // 4u-1
        const double T[4] = {-1.0, -1.0, 1.0, 1.0};
        const auto loc = locate_degenerate_point(cell_from_deviator(D, T));
        REQUIRE(loc.has_value());
        CHECK((*loc)[0] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK((*loc)[1] == doctest::Approx(0.5).epsilon(1e-12));
    }
    {
        // Excluded cell passed defensively: no in-cell root exists.
        const double D[4] = {1.0, 2.0, 3.0, 4.0};
        const double T[4] = {-1.0, -1.0, 1.0, 1.0};
        CHECK(!locate_degenerate_point(cell_from_deviator(D, T)).has_value());
    }
}

TEST_CASE("located roots on random candidate cells satisfy both residuals") {
    std::mt19937 gen = oracles::rng(32);
    std::uniform_real_distribution<double> comp(-2.0, 2.0);
    int located = 0;
    for (int trial = 0; trial < 500; ++trial) {
        double D[4], T[4];
        double scale = 0.0;
        for (int k = 0; k < 4; ++k) {
            D[k] = comp(gen);
            T[k] = comp(gen);
            scale = std::max({scale, std::abs(D[k]), std::abs(T[k])});
        }
        const auto cell = cell_from_deviator(D, T);
        if (classify_element(cell) == CellClass::Excluded) continue;
        const auto loc = locate_degenerate_point(cell);
        if (!loc) continue;
        ++located;
        const double u = (*loc)[0], v = (*loc)[1];
        const double dv =
            D[0] * (1 - u) * (1 - v) + D[1] * u * (1 - v) + D[2] * (1 - u) * v + D[3] * u * v;
        const double tv =
            T[0] * (1 - u) * (1 - v) + T[1] * u * (1 - v) + T[2] * (1 - u) * v + T[3] * u * v;
        CHECK(std::abs(dv) <= 1e-10 * scale);
        CHECK(std::abs(tv) <= 1e-10 * scale);
        // sigma1 - sigma2 = 2*sqrt((D/2)^2 + T^2) vanishes at the root.
        const auto pd = principal_decomposition(
            {0.5 * dv, -0.5 * dv, tv});
        CHECK(pd.s1 - pd.s2 <= 1e-8 * scale);
        CHECK(classify_element(cell) == CellClass::Candidate);
    }
    CHECK(located > 30);
}

TEST_CASE("tensor gradient of bilinear cells") {
    {
        const double D[4] = {-1.0, 1.0, -1.0, 1.0};  // 2u-1
        const double T[4] = {-1.0, -1.0, 1.0, 1.0};  // 2v-1
        const auto g = tensor_gradient_at(cell_from_deviator(D, T), 0.5, 0.5);
        CHECK(g.a == doctest::Approx(1.0));
        CHECK(g.b == doctest::Approx(0.0));
        CHECK(g.c == doctest::Approx(0.0));
        CHECK(g.d == doctest::Approx(2.0));
        CHECK(g.delta == doctest::Approx(2.0));
    }
    {
        const double D[4] = {-1.0, 1.0, -1.0, 1.0};
        const double T[4] = {1.0, 1.0, -1.0, -1.0};  // 1-2v
        const auto g = tensor_gradient_at(cell_from_deviator(D, T), 0.3, 0.8);
        CHECK(g.a == doctest::Approx(1.0));
        CHECK(g.d == doctest::Approx(-2.0));
        CHECK(g.delta == doctest::Approx(-2.0));
    }
    {
        const double D[4] = {2.0, 2.0, 2.0, 2.0};
        const double T[4] = {3.0, 3.0, 3.0, 3.0};
        const auto g = tensor_gradient_at(cell_from_deviator(D, T), 0.5, 0.5);
        CHECK(g.a == 0.0);
        CHECK(g.b == 0.0);
        CHECK(g.c == 0.0);
        CHECK(g.d == 0.0);
        CHECK(classify_degenerate_point(g) == DegenerateKind::Unresolved);
    }
}

TEST_CASE("delta sign classification") {
    CHECK(classify_degenerate_point({1, 0, 0, 1, 1}) == DegenerateKind::Wedge);
    CHECK(classify_degenerate_point({1, 0, 0, -1, -1}) == DegenerateKind::Trisector);
    CHECK(classify_degenerate_point({0, 1, 1, 0, -1}) == DegenerateKind::Trisector);
}

TEST_CASE("separatrix tangent cubic") {
    {
        // a=1, d=-1: -x^3 + 3x = 0 -> {0, +-sqrt(3)}.
        const auto s = separatrix_tangents({1, 0, 0, -1, -1});
        REQUIRE(s.size() == 3);
        CHECK(s[0] == doctest::Approx(-std::sqrt(3.0)).epsilon(1e-12));
        CHECK(s[1] == doctest::Approx(0.0));
        CHECK(s[2] == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
    }
    {
        // a=1, d=1: x^3 + x = 0 -> {0}.
        const auto s = separatrix_tangents({1, 0, 0, 1, 1});
        REQUIRE(s.size() == 1);
        CHECK(s[0] == doctest::Approx(0.0));
    }
    {
        // a=1, d=-2: -2x^3 + 4x = 0 -> {0, +-sqrt(2)}.
        const auto s = separatrix_tangents({1, 0, 0, -2, -2});
        REQUIRE(s.size() == 3);
        CHECK(s[0] == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-12));
        CHECK(s[2] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    }
    {
        // d = 0 degenerates the cubic; the vertical direction becomes a root.
        // a=1, b=0, c=1, d=0: x^2 + 2x - 1 = 0 plus the vertical tangent.
        const auto s = separatrix_tangents({1, 0, 1, 0, -1});
        REQUIRE(s.size() == 3);
        CHECK(std::isinf(s.back()));
        CHECK(s[0] == doctest::Approx(-1.0 - std::sqrt(2.0)).epsilon(1e-12));
        CHECK(s[1] == doctest::Approx(-1.0 + std::sqrt(2.0)).epsilon(1e-12));
    }
}

TEST_CASE("trisector launch rays of the normalized case are 60 degrees apart") {
    const auto s = separatrix_tangents({1, 0, 0, -1, -1});
    REQUIRE(s.size() == 3);
    std::vector<double> angles;
    for (double slope : s) angles.push_back(std::atan(slope) * 180.0 / M_PI);
    std::sort(angles.begin(), angles.end());
    CHECK(angles[1] - angles[0] == doctest::Approx(60.0).epsilon(1e-3));
    CHECK(angles[2] - angles[1] == doctest::Approx(60.0).epsilon(1e-3));
}

TEST_CASE("family assignment on the analytic trisector field") {
    const CartesianGrid g = build_grid(21, 21);
    const auto field = centered_trisector_field(g, 10.5, 10.5);
    CHECK(assign_ray_family(field, {10.5, 10.5}, {1.0, 0.0}) == PslFamily::Major);
    CHECK(assign_ray_family(field, {10.5, 10.5}, {-1.0, 0.0}) == PslFamily::Minor);
}

TEST_CASE("PSL tracing in uniform fields runs straight to the boundary") {
    const CartesianGrid g = build_grid(20, 10);
    {
        std::vector<StressTensor> nodal(g.num_nodes(), StressTensor{2.0, 1.0, 0.0});
        const NodalTensorField f(g, nodal);
        const auto line = trace_psl(f, {3.2, 4.7}, PslFamily::Major, {1.0, 0.0});
        CHECK(line.termination == PslTermination::Boundary);
        for (const auto& v : line.vertices) {
            CHECK(std::abs(v[1] - 4.7) < 1e-9);
        }
        CHECK(line.vertices.back()[0] == doctest::Approx(20.0));
        for (size_t k = 1; k < line.vertices.size(); ++k) {
            const double dx = line.vertices[k][0] - line.vertices[k - 1][0];
            CHECK(dx <= 0.5 + 1e-12);
        }
    }
    {
        // Pure shear: major direction at 45 degrees.
        std::vector<StressTensor> nodal(g.num_nodes(), StressTensor{0.0, 0.0, 1.0});
        const NodalTensorField f(g, nodal);
        const auto line = trace_psl(f, {2.0, 2.0}, PslFamily::Major, {1.0, 1.0});
        CHECK(line.termination == PslTermination::Boundary);
        for (const auto& v : line.vertices) {
            CHECK(std::abs((v[1] - 2.0) - (v[0] - 2.0)) < 1e-9);
        }
    }
}

TEST_CASE("orientation continuation: reversed start yields the reversed path") {
    const CartesianGrid g = build_grid(20, 12);
    std::vector<StressTensor> nodal(g.num_nodes());
    for (int n = 0; n < g.num_nodes(); ++n) {
        const double x = g.node_x(n);
        nodal[n] = {1.0 + 0.01 * x, 0.2, 0.05};  // gently varying, non-degenerate
    }
    const NodalTensorField f(g, nodal);
    const auto fwd = trace_psl(f, {10.0, 6.0}, PslFamily::Major, {1.0, 0.0});
    const auto bwd = trace_psl(f, {10.0, 6.0}, PslFamily::Major, {-1.0, 0.0});
    CHECK(fwd.termination == PslTermination::Boundary);
    CHECK(bwd.termination == PslTermination::Boundary);
    // Walking the same eigenvector field in opposite directions covers the
    // same line: endpoints meet the opposite boundaries at matching height.
    CHECK(fwd.vertices.back()[0] == doctest::Approx(20.0));
    CHECK(bwd.vertices.back()[0] == doctest::Approx(0.0));
}

TEST_CASE("closed orbit around a radial-major field terminates as a loop") {
    const int N = 41;
    const CartesianGrid g = build_grid(N, N);
    const double cx = N / 2.0, cy = N / 2.0;
    std::vector<StressTensor> nodal(g.num_nodes());
    for (int n = 0; n < g.num_nodes(); ++n) {
        const double x = g.node_x(n) - cx, y = g.node_y(n) - cy;
        const double r2 = std::max(x * x + y * y, 1e-12);
        nodal[n] = {1.0 + x * x / r2, 1.0 + y * y / r2, x * y / r2};
    }
    const NodalTensorField f(g, nodal);
    const double radius = 8.0;
    const auto line = trace_psl(f, {cx + radius, cy}, PslFamily::Minor, {0.0, 1.0});
    CHECK(line.termination == PslTermination::LoopClosed);
    double max_dev = 0.0;
    for (const auto& v : line.vertices) {
        const double r = std::hypot(v[0] - cx, v[1] - cy);
        max_dev = std::max(max_dev, std::abs(r - radius));
    }
    CHECK(max_dev < 1e-3 * radius);
}

TEST_CASE("tracer stops inside the stop radius of a foreign degenerate point") {
    const CartesianGrid g = build_grid(30, 10);
    std::vector<StressTensor> nodal(g.num_nodes(), StressTensor{2.0, 1.0, 0.0});
    const NodalTensorField f(g, nodal);
    TraceOptions opts;
    opts.stop_points.push_back({20.0, 5.0});
    opts.source_point = -1;
    const auto line = trace_psl(f, {3.0, 5.0}, PslFamily::Major, {1.0, 0.0}, opts);
    CHECK(line.termination == PslTermination::NearDegeneratePoint);
    CHECK(std::hypot(line.vertices.back()[0] - 20.0, line.vertices.back()[1] - 5.0) <=
          opts.stop_radius + 1e-9);
}

TEST_CASE("skeleton extraction on sampled linear deviator fields") {
    // Wedge variant: sxx - syy = 2x - 1, txy = 2y - 1.
    {
        const CartesianGrid g = build_grid(6, 6);
        const auto field = oracles::linear_deviator_field(g, +1.0);
        const auto sk = extract_skeleton(field);
        REQUIRE(sk.points.size() == 1);
        CHECK(sk.points[0].x == doctest::Approx(0.5).epsilon(1e-10));
        CHECK(sk.points[0].y == doctest::Approx(0.5).epsilon(1e-10));
        CHECK(sk.points[0].kind == DegenerateKind::Wedge);
        CHECK(sk.points[0].gradient.delta == doctest::Approx(2.0));
        CHECK(sk.separatrices.empty());  // wedges excluded by default
    }
    // Trisector variant: txy = 1 - 2y.
    {
        const CartesianGrid g = build_grid(6, 6);
        const auto field = oracles::linear_deviator_field(g, -1.0);
        const auto sk = extract_skeleton(field);
        REQUIRE(sk.points.size() == 1);
        CHECK(sk.points[0].kind == DegenerateKind::Trisector);
        CHECK(sk.points[0].gradient.delta == doctest::Approx(-2.0));
        REQUIRE(sk.points[0].tangent_slopes.size() == 3);
        CHECK(sk.points[0].tangent_slopes[0] == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-9));
        CHECK(sk.points[0].tangent_slopes[1] == doctest::Approx(0.0));
        CHECK(sk.points[0].tangent_slopes[2] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
    }
}

TEST_CASE("centered trisector launches six separatrices in both families") {
    const CartesianGrid g = build_grid(25, 25);
    const auto field = centered_trisector_field(g, 12.5, 12.5);
    const auto sk = extract_skeleton(field);
    REQUIRE(sk.points.size() == 1);
    CHECK(sk.points[0].kind == DegenerateKind::Trisector);
    CHECK(sk.points[0].x == doctest::Approx(12.5).epsilon(1e-10));
    REQUIRE(sk.separatrices.size() == 6);
    int majors = 0, minors = 0;
    for (const auto& s : sk.separatrices) {
        (s.line.family == PslFamily::Major ? majors : minors) += 1;
        // First vertex sits one seed offset from the source point.
        const double d = std::hypot(s.line.vertices.front()[0] - 12.5,
                                    s.line.vertices.front()[1] - 12.5);
        CHECK(d == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.line.termination == PslTermination::Boundary);
    }
    CHECK(majors == 3);
    CHECK(minors == 3);
}

TEST_CASE("uniform uniaxial tension yields an empty skeleton") {
    const CartesianGrid g = build_grid(10, 8);
    std::vector<StressTensor> nodal(g.num_nodes(), StressTensor{1.5, 0.0, 0.0});
    const NodalTensorField f(g, nodal);
    const auto sk = extract_skeleton(f);
    CHECK(sk.points.empty());
    CHECK(sk.separatrices.empty());
}

TEST_CASE("synthetic affine fields: located point and kind match the analytic root") {
    std::mt19937 gen = oracles::rng(33);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    const CartesianGrid g = build_grid(9, 9);
    int resolved = 0;
    for (int trial = 0; trial < 60; ++trial) {
        // Affine deviator D = a0 + a1 x + a2 y, T = b0 + b1 x + b2 y.
        const double a1 = coef(gen), a2 = coef(gen);
        const double b1 = coef(gen), b2 = coef(gen);
        const double det = a1 * b2 - a2 * b1;
        if (std::abs(det) < 0.05) continue;
        // Choose the root location, then back out the constants.
        const double rx = 2.0 + 5.0 * (coef(gen) * 0.5 + 0.5);
        const double ry = 2.0 + 5.0 * (coef(gen) * 0.5 + 0.5);
        const double a0 = -(a1 * rx + a2 * ry);
        const double b0 = -(b1 * rx + b2 * ry);
        std::vector<StressTensor> nodal(g.num_nodes());
        for (int n = 0; n < g.num_nodes(); ++n) {
            const double x = g.node_x(n), y = g.node_y(n);
            const double D = a0 + a1 * x + a2 * y;
            const double T = b0 + b1 * x + b2 * y;
            nodal[n] = {0.5 * D, -0.5 * D, T};
        }
        const NodalTensorField f(g, nodal);
        const auto sk = extract_skeleton(f);
        REQUIRE(sk.points.size() == 1);
        ++resolved;
        CHECK(sk.points[0].x == doctest::Approx(rx).epsilon(1e-10));
        CHECK(sk.points[0].y == doctest::Approx(ry).epsilon(1e-10));
        const double delta = 0.5 * a1 * b2 - 0.5 * a2 * b1;
        CHECK(sk.points[0].kind == (delta < 0 ? DegenerateKind::Trisector : DegenerateKind::Wedge));
    }
    CHECK(resolved >= 30);
}

TEST_CASE("duplicate roots on shared cell edges are merged") {
    const CartesianGrid g = build_grid(6, 5);
    std::vector<StressTensor> nodal(g.num_nodes());
    for (int n = 0; n < g.num_nodes(); ++n) {
        const double x = g.node_x(n), y = g.node_y(n);
        nodal[n] = {x - 3.0, -(x - 3.0), 2.0 * (y - 2.5)};
    }
    const NodalTensorField f(g, nodal);
    const auto sk = extract_skeleton(f);
    CHECK(sk.points.size() == 1);
    CHECK(sk.points[0].x == doctest::Approx(3.0));
    CHECK(sk.points[0].y == doctest::Approx(2.5));
}

TEST_CASE("wedge separatrices appear only behind the flag") {
    const CartesianGrid g = build_grid(21, 21);
    std::vector<StressTensor> nodal(g.num_nodes());
    for (int n = 0; n < g.num_nodes(); ++n) {
        const double x = g.node_x(n) - 10.5, y = g.node_y(n) - 10.5;
        nodal[n] = {x, -x, y};  // delta > 0: wedge
    }
    const NodalTensorField f(g, nodal);
    SkeletonOptions opts;
    const auto sk0 = extract_skeleton(f, opts);
    REQUIRE(sk0.points.size() == 1);
    CHECK(sk0.points[0].kind == DegenerateKind::Wedge);
    CHECK(sk0.separatrices.empty());

    opts.include_wedges = true;
    const auto sk1 = extract_skeleton(f, opts);
    REQUIRE(sk1.separatrices.size() == 2);
    CHECK(sk1.separatrices[0].line.family != sk1.separatrices[1].line.family);
}
