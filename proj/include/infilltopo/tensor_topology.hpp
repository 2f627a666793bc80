#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "infilltopo/stress.hpp"

namespace infilltopo {

/// Partial derivatives of the tensor deviator at a point,
///   a = 1/2 d(sxx-syy)/dx,  b = 1/2 d(sxx-syy)/dy,
///   c = d(txy)/dx,          d = d(txy)/dy,
/// and the rotation invariant delta = a*d - b*c whose sign separates
/// trisectors (delta < 0) from wedges (delta > 0).
struct TensorGradient {
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
    double delta = 0.0;
};

enum class DegenerateKind { Trisector, Wedge, Unresolved };

const char* to_string(DegenerateKind k);

struct DegeneratePoint {
    double x = 0.0, y = 0.0;   // domain coordinates
    int cell_i = 0, cell_j = 0;
    DegenerateKind kind = DegenerateKind::Unresolved;
    TensorGradient gradient;
    std::vector<double> tangent_slopes;  // may contain +inf for a vertical tangent
};

enum class PslFamily { Major, Minor };
enum class PslTermination { Boundary, NearDegeneratePoint, LoopClosed, StepBudget };

const char* to_string(PslFamily f);
const char* to_string(PslTermination t);

struct PrincipalStressLine {
    PslFamily family = PslFamily::Major;
    std::vector<std::array<double, 2>> vertices;
    PslTermination termination = PslTermination::Boundary;
};

struct TopologicalSkeleton {
    struct Separatrix {
        PrincipalStressLine line;
        int source_point = -1;
        double launch_angle_deg = 0.0;
    };
    std::vector<DegeneratePoint> points;
    std::vector<Separatrix> separatrices;
    std::vector<std::string> warnings;

    int num_trisectors() const;
    int num_wedges() const;
};

enum class CellClass { Excluded, Candidate };

/// Corner sign pre-filter: a cell whose sxx-syy (or txy) has uniform strict
/// sign over all four corners cannot contain a zero of the bilinear
/// interpolant.
CellClass classify_element(const std::array<StressTensor, 4>& corners);

/// Newton-Raphson root of (sxx-syy, txy)(u,v) = 0 under bilinear
/// interpolation, multi-started from the quarter points and center. Returns
/// cell-local coordinates in [0,1]^2, or nullopt when no in-cell root
/// converges.
std::optional<std::array<double, 2>> locate_degenerate_point(
    const std::array<StressTensor, 4>& corners, double tolerance = 1e-10);

/// Analytic derivative of the bilinear interpolant at local (u,v); local and
/// global derivatives coincide on unit cells.
TensorGradient tensor_gradient_at(const std::array<StressTensor, 4>& corners, double u, double v);

/// Trisector iff delta < 0, wedge iff delta > 0; Unresolved when |delta| is
/// below the structural-stability threshold.
DegenerateKind classify_degenerate_point(const TensorGradient& g);

/// Real roots of d x^3 + (c+2b) x^2 + (2a-d) x - c = 0, deduplicated. When the
/// leading coefficient vanishes the vertical direction is itself a tangent and
/// +inf is appended.
std::vector<double> separatrix_tangents(const TensorGradient& g);

/// Probes the tensor one seed offset along the ray and picks the family whose
/// eigenvector aligns better with the ray. Throws std::runtime_error when the
/// decomposition stays degenerate at offset and twice the offset.
PslFamily assign_ray_family(const NodalTensorField& field, const std::array<double, 2>& point,
                            const std::array<double, 2>& ray_dir, double seed_offset = 1.0);

struct TraceOptions {
    double step = 0.5;             // RK4 step, element widths
    double stop_radius = 0.5;      // degenerate-point proximity cut-off
    long max_steps = 100000;
    int loop_min_steps = 10;
    std::vector<std::array<double, 2>> stop_points;
    int source_point = -1;         // index into stop_points ignored during tracing
};

/// Fixed-step RK4 integration of the chosen unit eigenvector field with
/// orientation continuation against the previous direction.
PrincipalStressLine trace_psl(const NodalTensorField& field, std::array<double, 2> seed,
                              PslFamily family, std::array<double, 2> direction,
                              const TraceOptions& opts = {});

struct SkeletonOptions {
    bool include_wedges = false;
    double seed_offset = 1.0;      // element widths between point and first vertex
    double merge_tolerance = 1e-6;
    TraceOptions trace;
};

/// Scans all active cells for degenerate points, classifies them, and traces
/// the separatrices (six per trisector; one major plus one minor per wedge
/// when enabled).
TopologicalSkeleton extract_skeleton(const NodalTensorField& field,
                                     const SkeletonOptions& opts = {});

void write_degenerate_points_tsv(std::ostream& os, const TopologicalSkeleton& sk);
void write_skeleton_psl(std::ostream& os, const TopologicalSkeleton& sk);

}  // namespace infilltopo
