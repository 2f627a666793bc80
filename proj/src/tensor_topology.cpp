#include "infilltopo/tensor_topology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

namespace infilltopo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Vec2 {
    double x = 0.0, y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Bilinear coefficients of one deviator component from its corner values
// [d00, d10, d01, d11]: f(u,v) = c0 + cu*u + cv*v + cuv*u*v.
struct Bilinear {
    double c0, cu, cv, cuv;
    explicit Bilinear(const double d[4])
        : c0(d[0]), cu(d[1] - d[0]), cv(d[2] - d[0]), cuv(d[3] - d[1] - d[2] + d[0]) {}
    double value(double u, double v) const { return c0 + cu * u + cv * v + cuv * u * v; }
    double du(double v) const { return cu + cuv * v; }
    double dv(double u) const { return cv + cuv * u; }
};

void deviator_corners(const std::array<StressTensor, 4>& c, double D[4], double T[4]) {
    for (int k = 0; k < 4; ++k) {
        D[k] = c[k].sxx - c[k].syy;
        T[k] = c[k].txy;
    }
}

double newton_polish(double A, double B, double C, double D, double x) {
    for (int it = 0; it < 3; ++it) {
        const double f = ((A * x + B) * x + C) * x + D;
        const double fp = (3.0 * A * x + 2.0 * B) * x + C;
        if (fp == 0.0) break;
        const double step = f / fp;
        if (!std::isfinite(step)) break;
        x -= step;
    }
    return x;
}

void quadratic_roots(double B, double C, double D, std::vector<double>& out) {
    const double scale = std::max({std::abs(B), std::abs(C), std::abs(D)});
    if (scale == 0.0) return;
    if (std::abs(B) <= 1e-14 * scale) {
        if (std::abs(C) > 1e-14 * scale) out.push_back(-D / C);
        return;
    }
    const double disc = C * C - 4.0 * B * D;
    if (disc < 0.0) return;
    const double sq = std::sqrt(disc);
    // Numerically stable pairing.
    const double q = -0.5 * (C + (C >= 0.0 ? sq : -sq));
    out.push_back(q / B);
    if (q != 0.0) {
        out.push_back(D / q);
    } else {
        out.push_back(0.0);
    }
}

// Real roots of A x^3 + B x^2 + C x + D, Newton-polished.
std::vector<double> cubic_roots(double A, double B, double C, double D) {
    std::vector<double> roots;
    const double scale = std::max({std::abs(A), std::abs(B), std::abs(C), std::abs(D)});
    if (scale == 0.0) return roots;
    if (std::abs(A) <= 1e-12 * scale) {
        quadratic_roots(B, C, D, roots);
        return roots;
    }
    const double p = B / A, q = C / A, r = D / A;
    // Depressed cubic t^3 + pp t + qq with x = t - p/3.
    const double pp = q - p * p / 3.0;
    const double qq = 2.0 * p * p * p / 27.0 - p * q / 3.0 + r;
    const double shift = -p / 3.0;
    const double disc = -4.0 * pp * pp * pp - 27.0 * qq * qq;
    if (disc > 0.0) {
        // Three distinct real roots (requires pp < 0).
        const double m = 2.0 * std::sqrt(-pp / 3.0);
        const double arg = std::clamp(3.0 * qq / (pp * m), -1.0, 1.0);
        const double theta = std::acos(arg) / 3.0;
        for (int k = 0; k < 3; ++k) {
            roots.push_back(m * std::cos(theta - 2.0 * M_PI * k / 3.0) + shift);
        }
    } else if (disc < 0.0) {
        const double s = std::sqrt(qq * qq / 4.0 + pp * pp * pp / 27.0);
        const double u = std::cbrt(-qq / 2.0 + s);
        const double v = std::cbrt(-qq / 2.0 - s);
        roots.push_back(u + v + shift);
    } else {
        if (pp == 0.0) {
            roots.push_back(shift);  // triple root
        } else {
            roots.push_back(3.0 * qq / pp + shift);
            roots.push_back(-1.5 * qq / pp + shift);
        }
    }
    for (double& x : roots) x = newton_polish(A, B, C, D, x);
    return roots;
}

void dedupe_sorted(std::vector<double>& xs, double tol) {
    std::sort(xs.begin(), xs.end());
    std::vector<double> out;
    for (double x : xs) {
        if (out.empty() || std::abs(x - out.back()) > tol * std::max(1.0, std::abs(x))) {
            out.push_back(x);
        }
    }
    xs.swap(out);
}

}  // namespace

const char* to_string(DegenerateKind k) {
    switch (k) {
        case DegenerateKind::Trisector: return "trisector";
        case DegenerateKind::Wedge: return "wedge";
        default: return "unresolved";
    }
}

const char* to_string(PslFamily f) { return f == PslFamily::Major ? "major" : "minor"; }

const char* to_string(PslTermination t) {
    switch (t) {
        case PslTermination::Boundary: return "boundary";
        case PslTermination::NearDegeneratePoint: return "near-degenerate-point";
        case PslTermination::LoopClosed: return "loop-closed";
        default: return "step-budget";
    }
}

int TopologicalSkeleton::num_trisectors() const {
    int n = 0;
    for (const auto& p : points) n += (p.kind == DegenerateKind::Trisector);
    return n;
}

int TopologicalSkeleton::num_wedges() const {
    int n = 0;
    for (const auto& p : points) n += (p.kind == DegenerateKind::Wedge);
    return n;
}

CellClass classify_element(const std::array<StressTensor, 4>& corners) {
    double D[4], T[4];
    deviator_corners(corners, D, T);
    auto uniform_sign = [](const double* v) {
        bool all_pos = true, all_neg = true;
        for (int k = 0; k < 4; ++k) {
            all_pos = all_pos && v[k] > 0.0;
            all_neg = all_neg && v[k] < 0.0;
        }
        return all_pos || all_neg;
    };
    if (uniform_sign(D) || uniform_sign(T)) return CellClass::Excluded;
    return CellClass::Candidate;
}

std::optional<std::array<double, 2>> locate_degenerate_point(
    const std::array<StressTensor, 4>& corners, double tolerance) {
    double Dc[4], Tc[4];
    deviator_corners(corners, Dc, Tc);
    const Bilinear D(Dc), T(Tc);
    double scale = 0.0;
    for (int k = 0; k < 4; ++k) scale = std::max({scale, std::abs(Dc[k]), std::abs(Tc[k])});
    if (scale == 0.0) return std::nullopt;  // identically degenerate cell, no isolated root
    const double tol = tolerance * scale;

    const double starts[5][2] = {{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}, {0.5, 0.5}};
    std::vector<std::array<double, 2>> found;
    for (const auto& s : starts) {
        double u = s[0], v = s[1];
        bool converged = false;
        for (int it = 0; it < 50; ++it) {
            const double f1 = D.value(u, v);
            const double f2 = T.value(u, v);
            if (std::max(std::abs(f1), std::abs(f2)) <= tol) {
                converged = true;
                break;
            }
            const double j11 = D.du(v), j12 = D.dv(u);
            const double j21 = T.du(v), j22 = T.dv(u);
            const double det = j11 * j22 - j12 * j21;
            if (std::abs(det) < 1e-300) break;
            double du = (f1 * j22 - f2 * j12) / det;
            double dv = (j11 * f2 - j21 * f1) / det;
            const double len = std::hypot(du, dv);
            if (len > 1.0) {  // keep Newton from vaulting across cells
                du /= len;
                dv /= len;
            }
            u -= du;
            v -= dv;
            if (u < -2.0 || u > 3.0 || v < -2.0 || v > 3.0) break;
        }
        if (!converged) continue;
        if (u < -1e-9 || u > 1.0 + 1e-9 || v < -1e-9 || v > 1.0 + 1e-9) continue;
        u = std::clamp(u, 0.0, 1.0);
        v = std::clamp(v, 0.0, 1.0);
        bool dup = false;
        for (const auto& f : found) {
            if (std::hypot(f[0] - u, f[1] - v) <= 1e-6) dup = true;
        }
        if (!dup) found.push_back({u, v});
    }
    if (found.empty()) return std::nullopt;
    return found.front();
}

TensorGradient tensor_gradient_at(const std::array<StressTensor, 4>& corners, double u, double v) {
    double Dc[4], Tc[4];
    deviator_corners(corners, Dc, Tc);
    const Bilinear D(Dc), T(Tc);
    TensorGradient g;
    g.a = 0.5 * D.du(v);
    g.b = 0.5 * D.dv(u);
    g.c = T.du(v);
    g.d = T.dv(u);
    g.delta = g.a * g.d - g.b * g.c;
    return g;
}

DegenerateKind classify_degenerate_point(const TensorGradient& g) {
    const double eps = 1e-12 * (g.a * g.a + g.b * g.b + g.c * g.c + g.d * g.d + 1.0);
    if (std::abs(g.delta) <= eps) return DegenerateKind::Unresolved;
    return g.delta < 0.0 ? DegenerateKind::Trisector : DegenerateKind::Wedge;
}

std::vector<double> separatrix_tangents(const TensorGradient& g) {
    const double A = g.d;
    const double B = g.c + 2.0 * g.b;
    const double C = 2.0 * g.a - g.d;
    const double D = -g.c;
    const double scale = std::max({std::abs(A), std::abs(B), std::abs(C), std::abs(D)});
    if (scale == 0.0) return {};
    std::vector<double> slopes;
    if (std::abs(A) <= 1e-12 * scale) {
        quadratic_roots(B, C, D, slopes);
        dedupe_sorted(slopes, 1e-9);
        slopes.push_back(kInf);  // vanished leading coefficient = vertical tangent
        return slopes;
    }
    slopes = cubic_roots(A, B, C, D);
    dedupe_sorted(slopes, 1e-9);
    return slopes;
}

PslFamily assign_ray_family(const NodalTensorField& field, const std::array<double, 2>& point,
                            const std::array<double, 2>& ray_dir, double seed_offset) {
    const double dn = std::hypot(ray_dir[0], ray_dir[1]);
    if (dn == 0.0) throw std::invalid_argument("zero ray direction");
    const double dx = ray_dir[0] / dn, dy = ray_dir[1] / dn;
    for (int k = 1; k <= 2; ++k) {
        const double px = point[0] + k * seed_offset * dx;
        const double py = point[1] + k * seed_offset * dy;
        if (!field.grid().inside(px, py)) {
            throw std::runtime_error("family probe point left the domain");
        }
        const PrincipalDecomposition pd = principal_decomposition(field.eval(px, py));
        if (pd.degenerate) continue;
        const double am = std::abs(pd.v1x * dx + pd.v1y * dy);
        const double an = std::abs(pd.v2x * dx + pd.v2y * dy);
        return am >= an ? PslFamily::Major : PslFamily::Minor;
    }
    throw std::runtime_error("tensor degenerate at both family probe points");
}

namespace {

enum class EvalStatus { Ok, Outside, Degenerate };

struct DirEval {
    EvalStatus status;
    Vec2 v;
};

DirEval eval_direction(const NodalTensorField& field, Vec2 x, PslFamily family, Vec2 ref) {
    if (!field.grid().inside(x.x, x.y)) return {EvalStatus::Outside, {}};
    const PrincipalDecomposition pd = principal_decomposition(field.eval(x.x, x.y));
    if (pd.degenerate) return {EvalStatus::Degenerate, {}};
    Vec2 v = (family == PslFamily::Major) ? Vec2{pd.v1x, pd.v1y} : Vec2{pd.v2x, pd.v2y};
    if (dot(v, ref) < 0.0) v = -1.0 * v;
    return {EvalStatus::Ok, v};
}

// Parametric clip of the segment [a, b] (a inside) against the active domain.
Vec2 clip_to_boundary(const CartesianGrid& g, Vec2 a, Vec2 b) {
    const Vec2 d = b - a;
    double t = 1.0;
    auto clip_axis = [&](double p, double dp, double lo, double hi) {
        if (dp > 0.0 && p + t * dp > hi) t = (hi - p) / dp;
        if (dp < 0.0 && p + t * dp < lo) t = (lo - p) / dp;
    };
    clip_axis(a.x, d.x, 0.0, g.nx());
    clip_axis(a.y, d.y, 0.0, g.ny());
    Vec2 c = a + t * d;
    if (g.inside(c.x, c.y)) return c;
    // Mask boundary: bisect the inside prefix.
    double lo = 0.0, hi = t;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        const Vec2 m = a + mid * d;
        if (g.inside(m.x, m.y)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return a + lo * d;
}

// Hash buckets of cell size `cell` for loop detection.
struct VertexHash {
    double cell;
    std::unordered_map<int64_t, std::vector<int>> buckets;
    explicit VertexHash(double c) : cell(c) {}
    int64_t key(double x, double y) const {
        const int64_t ix = static_cast<int64_t>(std::floor(x / cell));
        const int64_t iy = static_cast<int64_t>(std::floor(y / cell));
        return ix * 1000003 + iy;
    }
    void insert(Vec2 p, int idx) { buckets[key(p.x, p.y)].push_back(idx); }
    // Earliest vertex index within radius, or -1.
    int query(const std::vector<std::array<double, 2>>& verts, Vec2 p, double radius,
              int max_index) const {
        int best = -1;
        const int64_t ix = static_cast<int64_t>(std::floor(p.x / cell));
        const int64_t iy = static_cast<int64_t>(std::floor(p.y / cell));
        for (int64_t dx = -1; dx <= 1; ++dx) {
            for (int64_t dy = -1; dy <= 1; ++dy) {
                const auto it = buckets.find((ix + dx) * 1000003 + (iy + dy));
                if (it == buckets.end()) continue;
                for (int idx : it->second) {
                    if (idx > max_index) continue;
                    if (std::hypot(verts[idx][0] - p.x, verts[idx][1] - p.y) <= radius) {
                        if (best < 0 || idx < best) best = idx;
                    }
                }
            }
        }
        return best;
    }
};

}  // namespace

PrincipalStressLine trace_psl(const NodalTensorField& field, std::array<double, 2> seed,
                              PslFamily family, std::array<double, 2> direction,
                              const TraceOptions& opts) {
    PrincipalStressLine line;
    line.family = family;
    const CartesianGrid& g = field.grid();
    if (!g.inside(seed[0], seed[1])) {
        throw std::invalid_argument("trace seed outside the active domain");
    }
    const double dn = std::hypot(direction[0], direction[1]);
    if (dn == 0.0) throw std::invalid_argument("zero initial direction");

    Vec2 x{seed[0], seed[1]};
    Vec2 dir{direction[0] / dn, direction[1] / dn};
    const double h = opts.step;

    line.vertices.push_back(seed);
    VertexHash hash(std::max(h, 1e-9));
    hash.insert(x, 0);

    auto near_stop_point = [&](Vec2 p) {
        for (size_t k = 0; k < opts.stop_points.size(); ++k) {
            if (static_cast<int>(k) == opts.source_point) continue;
            if (std::hypot(p.x - opts.stop_points[k][0], p.y - opts.stop_points[k][1]) <=
                opts.stop_radius) {
                return true;
            }
        }
        return false;
    };

    line.termination = PslTermination::StepBudget;
    for (long step = 1; step <= opts.max_steps; ++step) {
        const DirEval e1 = eval_direction(field, x, family, dir);
        if (e1.status == EvalStatus::Degenerate) {
            line.termination = PslTermination::NearDegeneratePoint;
            break;
        }
        if (e1.status == EvalStatus::Outside) {
            line.termination = PslTermination::Boundary;
            break;
        }
        Vec2 xn;
        const DirEval e2 = eval_direction(field, x + (0.5 * h) * e1.v, family, e1.v);
        const DirEval e3 = e2.status == EvalStatus::Ok
                               ? eval_direction(field, x + (0.5 * h) * e2.v, family, e2.v)
                               : e2;
        const DirEval e4 = e3.status == EvalStatus::Ok
                               ? eval_direction(field, x + h * e3.v, family, e3.v)
                               : e3;
        if (e2.status == EvalStatus::Degenerate || e3.status == EvalStatus::Degenerate ||
            e4.status == EvalStatus::Degenerate) {
            line.termination = PslTermination::NearDegeneratePoint;
            break;
        }
        if (e2.status == EvalStatus::Outside || e3.status == EvalStatus::Outside ||
            e4.status == EvalStatus::Outside) {
            // A stage left the domain: take the explicit Euler step and let the
            // boundary clip below finish the segment.
            xn = x + h * e1.v;
        } else {
            xn = x + (h / 6.0) * (e1.v + 2.0 * e2.v + 2.0 * e3.v + e4.v);
        }

        if (!g.inside(xn.x, xn.y)) {
            const Vec2 c = clip_to_boundary(g, x, xn);
            if (norm(c - x) > 1e-12) {
                line.vertices.push_back({c.x, c.y});
            }
            line.termination = PslTermination::Boundary;
            break;
        }

        const Vec2 delta = xn - x;
        const double dl = norm(delta);
        if (dl < 1e-14) {
            line.termination = PslTermination::NearDegeneratePoint;
            break;
        }
        dir = (1.0 / dl) * delta;
        x = xn;
        line.vertices.push_back({x.x, x.y});
        const int vid = static_cast<int>(line.vertices.size()) - 1;

        if (near_stop_point(x)) {
            line.termination = PslTermination::NearDegeneratePoint;
            break;
        }
        if (step >= opts.loop_min_steps &&
            hash.query(line.vertices, x, h, vid - opts.loop_min_steps) >= 0) {
            line.termination = PslTermination::LoopClosed;
            break;
        }
        hash.insert(x, vid);
    }
    return line;
}

TopologicalSkeleton extract_skeleton(const NodalTensorField& field, const SkeletonOptions& opts) {
    TopologicalSkeleton sk;
    const CartesianGrid& g = field.grid();

    // Phase 1: locate and classify every degenerate point.
    for (int j = 0; j < g.ny(); ++j) {
        for (int i = 0; i < g.nx(); ++i) {
            if (!g.cell_active(i, j)) continue;
            const auto corners = field.cell_corners(i, j);
            if (classify_element(corners) == CellClass::Excluded) continue;
            const auto loc = locate_degenerate_point(corners);
            if (!loc) continue;
            const double px = i + (*loc)[0];
            const double py = j + (*loc)[1];
            bool dup = false;
            for (const auto& p : sk.points) {
                if (std::hypot(p.x - px, p.y - py) <= opts.merge_tolerance) dup = true;
            }
            if (dup) continue;
            DegeneratePoint p;
            p.x = px;
            p.y = py;
            p.cell_i = i;
            p.cell_j = j;
            p.gradient = tensor_gradient_at(corners, (*loc)[0], (*loc)[1]);
            p.kind = classify_degenerate_point(p.gradient);
            if (p.kind == DegenerateKind::Unresolved) {
                char buf[128];
                std::snprintf(buf, sizeof(buf),
                              "structurally unstable point at (%.6g, %.6g), |delta| ~ 0", px, py);
                sk.warnings.emplace_back(buf);
            } else {
                p.tangent_slopes = separatrix_tangents(p.gradient);
                if (p.kind == DegenerateKind::Trisector && p.tangent_slopes.size() != 3) {
                    char buf[160];
                    std::snprintf(buf, sizeof(buf),
                                  "trisector at (%.6g, %.6g) produced %zu tangent directions "
                                  "instead of 3",
                                  px, py, p.tangent_slopes.size());
                    sk.warnings.emplace_back(buf);
                }
            }
            sk.points.push_back(std::move(p));
        }
    }

    // Phase 2: trace separatrices with all points acting as stop regions.
    TraceOptions trace = opts.trace;
    trace.stop_points.clear();
    for (const auto& p : sk.points) trace.stop_points.push_back({p.x, p.y});

    for (size_t pi = 0; pi < sk.points.size(); ++pi) {
        const DegeneratePoint& p = sk.points[pi];
        if (p.kind == DegenerateKind::Unresolved) continue;
        if (p.kind == DegenerateKind::Wedge && !opts.include_wedges) continue;

        struct Ray {
            Vec2 dir;
            PslFamily family;
        };
        std::vector<Ray> rays;
        for (double s : p.tangent_slopes) {
            Vec2 d = std::isinf(s) ? Vec2{0.0, 1.0}
                                   : Vec2{1.0 / std::hypot(1.0, s), s / std::hypot(1.0, s)};
            for (Vec2 cand : {d, -1.0 * d}) {
                try {
                    const PslFamily fam = assign_ray_family(field, {p.x, p.y}, {cand.x, cand.y},
                                                            opts.seed_offset);
                    rays.push_back({cand, fam});
                } catch (const std::exception& ex) {
                    char buf[192];
                    std::snprintf(buf, sizeof(buf), "ray (%.3g, %.3g) at point %zu skipped: %s",
                                  cand.x, cand.y, pi, ex.what());
                    sk.warnings.emplace_back(buf);
                }
            }
        }
        if (p.kind == DegenerateKind::Wedge) {
            // One major and one minor separatrix per wedge.
            std::vector<Ray> picked;
            for (PslFamily want : {PslFamily::Major, PslFamily::Minor}) {
                for (const Ray& r : rays) {
                    if (r.family == want) {
                        picked.push_back(r);
                        break;
                    }
                }
            }
            rays.swap(picked);
        }
        for (const Ray& r : rays) {
            const Vec2 seed{p.x + opts.seed_offset * r.dir.x, p.y + opts.seed_offset * r.dir.y};
            if (!g.inside(seed.x, seed.y)) {
                continue;  // boundary-adjacent ray, nothing to trace
            }
            TraceOptions t = trace;
            t.source_point = static_cast<int>(pi);
            TopologicalSkeleton::Separatrix sep;
            sep.line = trace_psl(field, {seed.x, seed.y}, r.family, {r.dir.x, r.dir.y}, t);
            sep.source_point = static_cast<int>(pi);
            sep.launch_angle_deg = std::atan2(r.dir.y, r.dir.x) * 180.0 / M_PI;
            sk.separatrices.push_back(std::move(sep));
        }
    }
    return sk;
}

void write_degenerate_points_tsv(std::ostream& os, const TopologicalSkeleton& sk) {
    os << "x\ty\tkind\ta\tb\tc\td\tdelta\ttangent_slopes\n";
    char buf[320];
    for (const auto& p : sk.points) {
        std::snprintf(buf, sizeof(buf), "%.9g\t%.9g\t%s\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t",
                      p.x, p.y, to_string(p.kind), p.gradient.a, p.gradient.b, p.gradient.c,
                      p.gradient.d, p.gradient.delta);
        os << buf;
        for (size_t k = 0; k < p.tangent_slopes.size(); ++k) {
            if (k) os << ",";
            if (std::isinf(p.tangent_slopes[k])) {
                os << "inf";
            } else {
                std::snprintf(buf, sizeof(buf), "%.9g", p.tangent_slopes[k]);
                os << buf;
            }
        }
        os << "\n";
    }
}

void write_skeleton_psl(std::ostream& os, const TopologicalSkeleton& sk) {
    char buf[96];
    for (const auto& s : sk.separatrices) {
        std::snprintf(buf, sizeof(buf), "separatrix %d %s %.9g\n", s.source_point,
                      to_string(s.line.family), s.launch_angle_deg);
        os << buf;
        for (const auto& v : s.line.vertices) {
            std::snprintf(buf, sizeof(buf), "%.9g %.9g\n", v[0], v[1]);
            os << buf;
        }
        os << "\n";
    }
}

}  // namespace infilltopo
