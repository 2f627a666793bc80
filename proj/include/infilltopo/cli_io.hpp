#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "infilltopo/grid.hpp"
#include "infilltopo/optimizer.hpp"

namespace infilltopo {

/// A support or load attachment. Edge selectors expand to every node on that
/// edge; midpoint/corner selectors pick single nodes.
struct Attachment {
    enum class Where {
        Left, Right, Top, Bottom,               // whole edges
        LeftMid, RightMid, TopMid, BottomMid,   // edge midpoints
        CornerBL, CornerBR, CornerTL, CornerTR, // corners
        Node                                    // explicit node (i, j)
    };
    Where where = Where::Node;
    int node_i = 0, node_j = 0;  // for Where::Node
    bool fix_x = false, fix_y = false;  // supports
    double fx = 0.0, fy = 0.0;          // loads
};

/// Fully resolved run configuration; see the README for the config grammar.
struct RunConfig {
    int nx = 0, ny = 0;
    std::string mask_file;  // optional, resolved relative to the config file
    MaterialModel material;
    std::vector<Attachment> supports;
    std::vector<Attachment> loads;
    FieldSpec alpha = FieldSpec::constant(0.5);
    std::optional<double> alpha_total;
    FieldSpec R = FieldSpec::constant(6.0);
    double r = 0.0;
    double p = 16.0;
    BetaSchedule beta;
    double move_limit = 0.01;
    int max_iterations = 0;
    InitMode init = InitMode::Uniform;
    SolverKind solver = SolverKind::Direct;
    int snapshot_every = 0;  // 0 = final only
    bool single_thread = false;
    bool include_wedges = false;
    unsigned seed = 0;  // reserved, echoed for provenance

    std::filesystem::path base_dir;  // directory of the parsed config file
};

/// Parses the key=value config grammar. Unknown keys, missing required keys
/// and out-of-range values raise std::runtime_error with the line number.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig parse_config_file(const std::filesystem::path& path);

/// Canonical serialization; re-parses to an identical RunConfig.
std::string serialize_config(const RunConfig& cfg);

/// Materializes grid + boundary conditions from the config (loads the mask
/// file when one is named).
CartesianGrid make_grid(const RunConfig& cfg);
BoundaryConditions make_boundary_conditions(const RunConfig& cfg, const CartesianGrid& grid);
std::vector<uint8_t> load_mask(const std::filesystem::path& path, int nx, int ny);

/// Writes the density field twice: `path`.txt as an ny x nx matrix (row 0 =
/// top, 9 significant digits, "nan" on masked cells) and `path`.pgm as a
/// 16-bit graymap with gray = round((1-rho)*65535), masked cells white.
void write_density_field(const std::vector<double>& rho, const CartesianGrid& grid,
                         const std::filesystem::path& path_without_extension);

/// Reads the matrix form back; masked cells must be "nan".
std::vector<double> read_density_field(const std::filesystem::path& txt_path,
                                       const CartesianGrid& grid);

void write_history_csv(std::ostream& os, const std::vector<IterationRecord>& history);

struct PipelineResult {
    int trisectors = 0;
    int wedges = 0;
    std::optional<IterationRecord> final_record;
};

/// Runs the four pipeline steps (solid FEA, skeleton extraction, material
/// initialization, optimization) and writes every artifact into out_dir.
/// `steps` limits the pipeline: 2 = analyze only, 3 = up to initialization,
/// 4 = full optimization.
PipelineResult run_pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir,
                            int steps = 4, std::ostream* log = nullptr);

struct Metrics {
    double compliance = 0.0;
    double g_local = 0.0;
    std::optional<double> g_global;
    double sharpness = 0.0;
    double mean_density = 0.0;
};

/// Recomputes compliance, constraints and sharpness for a stored density
/// field under the given config.
Metrics compute_metrics(const RunConfig& cfg, const std::vector<double>& rho);

}  // namespace infilltopo
