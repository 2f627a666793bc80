#include "infilltopo/cli_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "infilltopo/stress.hpp"
#include "infilltopo/tensor_topology.hpp"

namespace infilltopo {

namespace {

[[noreturn]] void fail_line(int line, const std::string& msg) {
    throw std::runtime_error("config line " + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

double parse_double(const std::string& s, int line) {
    try {
        size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) fail_line(line, "trailing characters in number '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail_line(line, "expected a number, got '" + s + "'");
    } catch (const std::out_of_range&) {
        fail_line(line, "number out of range: '" + s + "'");
    }
}

int parse_int(const std::string& s, int line) {
    const double v = parse_double(s, line);
    if (v != std::floor(v)) fail_line(line, "expected an integer, got '" + s + "'");
    return static_cast<int>(v);
}

bool parse_bool(const std::string& s, int line) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    fail_line(line, "expected a boolean, got '" + s + "'");
}

FieldSpec parse_field_spec(const std::vector<std::string>& toks, int line) {
    if (toks.size() == 1) {
        return FieldSpec::constant(parse_double(toks[0], line));
    }
    if (toks.size() == 3 && toks[0] == "ramp") {
        return FieldSpec::ramp_x(parse_double(toks[1], line), parse_double(toks[2], line));
    }
    fail_line(line, "expected '<value>' or 'ramp <left> <right>'");
}

Attachment::Where parse_where(const std::string& s, int line) {
    using W = Attachment::Where;
    static const std::map<std::string, W> names = {
        {"left", W::Left},           {"right", W::Right},
        {"top", W::Top},             {"bottom", W::Bottom},
        {"left-mid", W::LeftMid},    {"right-mid", W::RightMid},
        {"top-mid", W::TopMid},      {"bottom-mid", W::BottomMid},
        {"corner-bl", W::CornerBL},  {"corner-br", W::CornerBR},
        {"corner-tl", W::CornerTL},  {"corner-tr", W::CornerTR},
        {"node", W::Node},
    };
    const auto it = names.find(s);
    if (it == names.end()) fail_line(line, "unknown location selector '" + s + "'");
    return it->second;
}

std::string where_name(Attachment::Where w) {
    using W = Attachment::Where;
    switch (w) {
        case W::Left: return "left";
        case W::Right: return "right";
        case W::Top: return "top";
        case W::Bottom: return "bottom";
        case W::LeftMid: return "left-mid";
        case W::RightMid: return "right-mid";
        case W::TopMid: return "top-mid";
        case W::BottomMid: return "bottom-mid";
        case W::CornerBL: return "corner-bl";
        case W::CornerBR: return "corner-br";
        case W::CornerTL: return "corner-tl";
        case W::CornerTR: return "corner-tr";
        default: return "node";
    }
}

Attachment parse_support(const std::vector<std::string>& toks, int line) {
    if (toks.empty()) fail_line(line, "empty support");
    Attachment a;
    a.where = parse_where(toks[0], line);
    size_t dir_pos = 1;
    if (a.where == Attachment::Where::Node) {
        if (toks.size() != 4) fail_line(line, "expected 'node <i> <j> <dirs>'");
        a.node_i = parse_int(toks[1], line);
        a.node_j = parse_int(toks[2], line);
        dir_pos = 3;
    } else if (toks.size() != 2) {
        fail_line(line, "expected '<where> <dirs>'");
    }
    const std::string& dirs = toks[dir_pos];
    if (dirs == "x") {
        a.fix_x = true;
    } else if (dirs == "y") {
        a.fix_y = true;
    } else if (dirs == "xy") {
        a.fix_x = a.fix_y = true;
    } else {
        fail_line(line, "support directions must be x, y or xy");
    }
    return a;
}

Attachment parse_load(const std::vector<std::string>& toks, int line) {
    if (toks.empty()) fail_line(line, "empty load");
    Attachment a;
    a.where = parse_where(toks[0], line);
    size_t f_pos = 1;
    if (a.where == Attachment::Where::Node) {
        if (toks.size() != 5) fail_line(line, "expected 'node <i> <j> <fx> <fy>'");
        a.node_i = parse_int(toks[1], line);
        a.node_j = parse_int(toks[2], line);
        f_pos = 3;
    } else if (toks.size() != 3) {
        fail_line(line, "expected '<where> <fx> <fy>'");
    }
    a.fx = parse_double(toks[f_pos], line);
    a.fy = parse_double(toks[f_pos + 1], line);
    if (a.fx == 0.0 && a.fy == 0.0) fail_line(line, "load has zero magnitude");
    return a;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string spec_text(const FieldSpec& s) {
    if (s.kind == FieldSpec::Kind::Constant) return fmt(s.v0);
    return "ramp " + fmt(s.v0) + " " + fmt(s.v1);
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    cfg.base_dir = base_dir;
    bool emin_set = false;
    std::map<std::string, int> seen;  // key -> line (for required/duplicate checks)

    std::istringstream in(text);
    std::string raw;
    int line = 0;
    double alpha_total_value = 0.0;
    bool alpha_total_set = false;
    while (std::getline(in, raw)) {
        ++line;
        const size_t hash = raw.find('#');
        std::string s = hash == std::string::npos ? raw : raw.substr(0, hash);
        const auto is_space = [](unsigned char c) { return std::isspace(c); };
        s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), is_space));
        s.erase(std::find_if_not(s.rbegin(), s.rend(), is_space).base(), s.end());
        if (s.empty()) continue;
        const size_t eq = s.find('=');
        if (eq == std::string::npos) fail_line(line, "expected 'key = value'");
        std::string key = s.substr(0, eq);
        std::string value = s.substr(eq + 1);
        key.erase(std::find_if_not(key.rbegin(), key.rend(), is_space).base(), key.end());
        value.erase(value.begin(), std::find_if_not(value.begin(), value.end(), is_space));
        if (key.empty()) fail_line(line, "missing key");
        if (value.empty()) fail_line(line, "missing value for '" + key + "'");
        const auto toks = split_ws(value);

        const bool repeatable = (key == "support" || key == "load");
        if (!repeatable && seen.count(key)) {
            fail_line(line, "duplicate key '" + key + "' (first on line " +
                                std::to_string(seen[key]) + ")");
        }
        seen[key] = line;

        if (key == "nx") {
            cfg.nx = parse_int(value, line);
            if (cfg.nx < 1) fail_line(line, "nx must be >= 1");
        } else if (key == "ny") {
            cfg.ny = parse_int(value, line);
            if (cfg.ny < 1) fail_line(line, "ny must be >= 1");
        } else if (key == "mask_file") {
            cfg.mask_file = value;
        } else if (key == "E0") {
            cfg.material.E0 = parse_double(value, line);
            if (!(cfg.material.E0 > 0.0)) fail_line(line, "E0 must be positive");
        } else if (key == "Emin") {
            cfg.material.Emin = parse_double(value, line);
            emin_set = true;
            if (!(cfg.material.Emin > 0.0)) fail_line(line, "Emin must be positive");
        } else if (key == "nu") {
            cfg.material.nu = parse_double(value, line);
            if (!(cfg.material.nu > -1.0 && cfg.material.nu < 0.5)) {
                fail_line(line, "nu must lie in (-1, 0.5)");
            }
        } else if (key == "gamma") {
            cfg.material.gamma = parse_double(value, line);
            if (!(cfg.material.gamma >= 1.0)) fail_line(line, "gamma must be >= 1");
        } else if (key == "support") {
            cfg.supports.push_back(parse_support(toks, line));
        } else if (key == "load") {
            cfg.loads.push_back(parse_load(toks, line));
        } else if (key == "alpha") {
            cfg.alpha = parse_field_spec(toks, line);
            if (!(cfg.alpha.v0 > 0.0 && cfg.alpha.v0 < 1.0 && cfg.alpha.v1 > 0.0 &&
                  cfg.alpha.v1 < 1.0)) {
                fail_line(line, "alpha must lie strictly inside (0,1)");
            }
        } else if (key == "alpha_total") {
            alpha_total_value = parse_double(value, line);
            alpha_total_set = true;
            if (!(alpha_total_value > 0.0 && alpha_total_value < 1.0)) {
                fail_line(line, "alpha_total must lie strictly inside (0,1)");
            }
        } else if (key == "R") {
            cfg.R = parse_field_spec(toks, line);
            if (!(cfg.R.v0 > 0.0 && cfg.R.v1 > 0.0)) fail_line(line, "R must be positive");
        } else if (key == "r") {
            cfg.r = parse_double(value, line);
            if (!(cfg.r > 0.0)) fail_line(line, "r must be positive");
        } else if (key == "p") {
            cfg.p = parse_double(value, line);
            if (!(cfg.p >= 1.0)) fail_line(line, "p must be >= 1");
        } else if (key == "beta_initial") {
            cfg.beta.initial = parse_double(value, line);
            if (!(cfg.beta.initial > 0.0)) fail_line(line, "beta_initial must be positive");
        } else if (key == "beta_double_every") {
            cfg.beta.double_every = parse_int(value, line);
            if (cfg.beta.double_every < 1) fail_line(line, "beta_double_every must be >= 1");
        } else if (key == "beta_max") {
            cfg.beta.cap = parse_double(value, line);
            if (!(cfg.beta.cap > 0.0)) fail_line(line, "beta_max must be positive");
        } else if (key == "move_limit") {
            cfg.move_limit = parse_double(value, line);
            if (!(cfg.move_limit > 0.0 && cfg.move_limit <= 1.0)) {
                fail_line(line, "move_limit must lie in (0,1]");
            }
        } else if (key == "max_iters") {
            cfg.max_iterations = parse_int(value, line);
            if (cfg.max_iterations < 0) fail_line(line, "max_iters must be >= 0");
        } else if (key == "init") {
            if (value == "uniform") {
                cfg.init = InitMode::Uniform;
            } else if (value == "topo") {
                cfg.init = InitMode::TopologyGuided;
            } else {
                fail_line(line, "init must be 'uniform' or 'topo'");
            }
        } else if (key == "solver") {
            if (value == "direct") {
                cfg.solver = SolverKind::Direct;
            } else if (value == "cg") {
                cfg.solver = SolverKind::ConjugateGradient;
            } else {
                fail_line(line, "solver must be 'direct' or 'cg'");
            }
        } else if (key == "snapshot_every") {
            cfg.snapshot_every = parse_int(value, line);
            if (cfg.snapshot_every < 0) fail_line(line, "snapshot_every must be >= 0");
        } else if (key == "single_thread") {
            cfg.single_thread = parse_bool(value, line);
        } else if (key == "include_wedges") {
            cfg.include_wedges = parse_bool(value, line);
        } else if (key == "seed") {
            cfg.seed = static_cast<unsigned>(parse_int(value, line));
        } else {
            fail_line(line, "unknown key '" + key + "'");
        }
    }

    for (const char* req : {"nx", "ny", "alpha", "R", "r", "max_iters"}) {
        if (!seen.count(req)) {
            throw std::runtime_error(std::string("config: missing required key '") + req + "'");
        }
    }
    if (cfg.supports.empty()) throw std::runtime_error("config: missing 'support' section");
    if (cfg.loads.empty()) throw std::runtime_error("config: missing 'load' section");
    if (!emin_set) cfg.material.Emin = 1e-6 * cfg.material.E0;
    if (alpha_total_set) cfg.alpha_total = alpha_total_value;
    if (cfg.r >= std::min(cfg.R.v0, cfg.R.v1)) {
        fail_line(seen["r"], "filter radius r must be smaller than every R_e (r < R)");
    }
    return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.has_parent_path() ? path.parent_path() : ".");
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "nx = " << cfg.nx << "\n";
    os << "ny = " << cfg.ny << "\n";
    if (!cfg.mask_file.empty()) os << "mask_file = " << cfg.mask_file << "\n";
    os << "E0 = " << fmt(cfg.material.E0) << "\n";
    os << "Emin = " << fmt(cfg.material.Emin) << "\n";
    os << "nu = " << fmt(cfg.material.nu) << "\n";
    os << "gamma = " << fmt(cfg.material.gamma) << "\n";
    for (const auto& s : cfg.supports) {
        os << "support = " << where_name(s.where);
        if (s.where == Attachment::Where::Node) os << " " << s.node_i << " " << s.node_j;
        os << " " << (s.fix_x && s.fix_y ? "xy" : (s.fix_x ? "x" : "y")) << "\n";
    }
    for (const auto& l : cfg.loads) {
        os << "load = " << where_name(l.where);
        if (l.where == Attachment::Where::Node) os << " " << l.node_i << " " << l.node_j;
        os << " " << fmt(l.fx) << " " << fmt(l.fy) << "\n";
    }
    os << "alpha = " << spec_text(cfg.alpha) << "\n";
    if (cfg.alpha_total) os << "alpha_total = " << fmt(*cfg.alpha_total) << "\n";
    os << "R = " << spec_text(cfg.R) << "\n";
    os << "r = " << fmt(cfg.r) << "\n";
    os << "p = " << fmt(cfg.p) << "\n";
    os << "beta_initial = " << fmt(cfg.beta.initial) << "\n";
    os << "beta_double_every = " << cfg.beta.double_every << "\n";
    os << "beta_max = " << fmt(cfg.beta.cap) << "\n";
    os << "move_limit = " << fmt(cfg.move_limit) << "\n";
    os << "max_iters = " << cfg.max_iterations << "\n";
    os << "init = " << (cfg.init == InitMode::Uniform ? "uniform" : "topo") << "\n";
    os << "solver = " << (cfg.solver == SolverKind::Direct ? "direct" : "cg") << "\n";
    os << "snapshot_every = " << cfg.snapshot_every << "\n";
    os << "single_thread = " << (cfg.single_thread ? "true" : "false") << "\n";
    os << "include_wedges = " << (cfg.include_wedges ? "true" : "false") << "\n";
    os << "seed = " << cfg.seed << "\n";
    return os.str();
}

std::vector<uint8_t> load_mask(const std::filesystem::path& path, int nx, int ny) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mask file " + path.string());
    // ny lines of nx characters ('0'/'1', optionally space-separated), row 0 = top.
    std::vector<uint8_t> mask(static_cast<size_t>(nx) * ny, 0);
    std::string lineText;
    int row = 0;
    while (std::getline(in, lineText) && row < ny) {
        int col = 0;
        for (char ch : lineText) {
            if (ch == '0' || ch == '1') {
                if (col >= nx) throw std::runtime_error("mask row longer than nx");
                const int j = ny - 1 - row;
                mask[static_cast<size_t>(j) * nx + col] = (ch == '1');
                ++col;
            } else if (!std::isspace(static_cast<unsigned char>(ch))) {
                throw std::runtime_error("mask files may only contain 0, 1 and whitespace");
            }
        }
        if (col != nx) throw std::runtime_error("mask row has wrong length");
        ++row;
    }
    if (row != ny) throw std::runtime_error("mask has wrong number of rows");
    return mask;
}

CartesianGrid make_grid(const RunConfig& cfg) {
    if (cfg.mask_file.empty()) return CartesianGrid(cfg.nx, cfg.ny);
    const auto path = cfg.base_dir / cfg.mask_file;
    return CartesianGrid(cfg.nx, cfg.ny, load_mask(path, cfg.nx, cfg.ny));
}

namespace {

std::vector<int> resolve_nodes(const Attachment& a, const CartesianGrid& g, bool edge_allowed) {
    using W = Attachment::Where;
    const int nx = g.nx(), ny = g.ny();
    std::vector<int> nodes;
    switch (a.where) {
        case W::Left:
        case W::Right: {
            if (!edge_allowed) throw std::runtime_error("edge selectors only valid for supports");
            const int i = (a.where == W::Left) ? 0 : nx;
            for (int j = 0; j <= ny; ++j) nodes.push_back(g.node_id(i, j));
            break;
        }
        case W::Top:
        case W::Bottom: {
            if (!edge_allowed) throw std::runtime_error("edge selectors only valid for supports");
            const int j = (a.where == W::Bottom) ? 0 : ny;
            for (int i = 0; i <= nx; ++i) nodes.push_back(g.node_id(i, j));
            break;
        }
        case W::LeftMid: nodes.push_back(g.node_id(0, ny / 2)); break;
        case W::RightMid: nodes.push_back(g.node_id(nx, ny / 2)); break;
        case W::TopMid: nodes.push_back(g.node_id(nx / 2, ny)); break;
        case W::BottomMid: nodes.push_back(g.node_id(nx / 2, 0)); break;
        case W::CornerBL: nodes.push_back(g.node_id(0, 0)); break;
        case W::CornerBR: nodes.push_back(g.node_id(nx, 0)); break;
        case W::CornerTL: nodes.push_back(g.node_id(0, ny)); break;
        case W::CornerTR: nodes.push_back(g.node_id(nx, ny)); break;
        case W::Node: {
            if (a.node_i < 0 || a.node_i > nx || a.node_j < 0 || a.node_j > ny) {
                throw std::runtime_error("node selector out of range");
            }
            nodes.push_back(g.node_id(a.node_i, a.node_j));
            break;
        }
    }
    return nodes;
}

}  // namespace

BoundaryConditions make_boundary_conditions(const RunConfig& cfg, const CartesianGrid& grid) {
    BoundaryConditions bc;
    for (const auto& s : cfg.supports) {
        for (int node : resolve_nodes(s, grid, true)) {
            if (s.fix_x) bc.fix(node, 0);
            if (s.fix_y) bc.fix(node, 1);
        }
    }
    for (const auto& l : cfg.loads) {
        for (int node : resolve_nodes(l, grid, false)) {
            bc.add_load(node, l.fx, l.fy);
        }
    }
    bc.validate(grid);
    return bc;
}

void write_density_field(const std::vector<double>& rho, const CartesianGrid& grid,
                         const std::filesystem::path& path_without_extension) {
    const int nx = grid.nx(), ny = grid.ny();
    auto txt_path = path_without_extension;
    txt_path += ".txt";
    std::ofstream txt(txt_path);
    if (!txt) throw std::runtime_error("cannot write " + txt_path.string());
    char buf[40];
    for (int j = ny - 1; j >= 0; --j) {
        for (int i = 0; i < nx; ++i) {
            if (i) txt << ' ';
            const int id = grid.element_id(i, j);
            if (id < 0) {
                txt << "nan";
            } else {
                std::snprintf(buf, sizeof(buf), "%.9g", rho[id]);
                txt << buf;
            }
        }
        txt << '\n';
    }

    auto pgm_path = path_without_extension;
    pgm_path += ".pgm";
    std::ofstream pgm(pgm_path);
    if (!pgm) throw std::runtime_error("cannot write " + pgm_path.string());
    pgm << "P2\n" << nx << " " << ny << "\n65535\n";
    for (int j = ny - 1; j >= 0; --j) {
        for (int i = 0; i < nx; ++i) {
            const int id = grid.element_id(i, j);
            const long gray =
                id < 0 ? 65535 : std::lround((1.0 - std::clamp(rho[id], 0.0, 1.0)) * 65535.0);
            pgm << gray << (i + 1 == nx ? '\n' : ' ');
        }
    }
}

std::vector<double> read_density_field(const std::filesystem::path& txt_path,
                                       const CartesianGrid& grid) {
    std::ifstream in(txt_path);
    if (!in) throw std::runtime_error("cannot open density file " + txt_path.string());
    std::vector<double> rho(grid.num_elements(), 0.0);
    const int nx = grid.nx(), ny = grid.ny();
    for (int j = ny - 1; j >= 0; --j) {
        for (int i = 0; i < nx; ++i) {
            std::string tok;
            if (!(in >> tok)) throw std::runtime_error("density file truncated");
            const int id = grid.element_id(i, j);
            if (id < 0) continue;
            if (tok == "nan") throw std::runtime_error("nan on an active element");
            rho[id] = std::stod(tok);
        }
    }
    return rho;
}

void write_history_csv(std::ostream& os, const std::vector<IterationRecord>& history) {
    os << "iteration,beta,compliance,g_local,g_global,sharpness,mean_density\n";
    char buf[240];
    for (const auto& h : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,", h.iteration, h.beta,
                      h.compliance, h.g_local);
        os << buf;
        if (h.g_global) {
            std::snprintf(buf, sizeof(buf), "%.12g", *h.g_global);
            os << buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.12g,%.12g\n", h.sharpness, h.mean_density);
        os << buf;
    }
}

PipelineResult run_pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir, int steps,
                            std::ostream* log_stream) {
    namespace fs = std::filesystem;
    using clock = std::chrono::steady_clock;
    fs::create_directories(out_dir);

    std::ofstream log(out_dir / "run.log");
    auto note = [&](const std::string& msg) {
        log << msg << "\n";
        log.flush();
        if (log_stream) *log_stream << msg << "\n";
    };
    auto seconds_since = [](clock::time_point t0) {
        return std::chrono::duration<double>(clock::now() - t0).count();
    };

    {
        std::ofstream echo(out_dir / "config_echo.cfg");
        echo << serialize_config(cfg);
    }

    PipelineResult result;
    const CartesianGrid grid = make_grid(cfg);
    const BoundaryConditions bc = make_boundary_conditions(cfg, grid);
    note("grid: " + std::to_string(grid.nx()) + "x" + std::to_string(grid.ny()) + ", " +
         std::to_string(grid.num_elements()) + " active elements");

    // Step 1: solid-domain FEA.
    auto t0 = clock::now();
    FemSolver solid_fem(grid, bc, cfg.material, cfg.solver);
    ScalarField solid(grid, 1.0);
    auto [U, summary] = solid_fem.solve(solid);
    const NodalTensorField field = recover_nodal_stress(grid, U, cfg.material);
    {
        std::ofstream ts(out_dir / "nodal_stress.tsv");
        field.export_table(ts);
    }
    note("step1_solid_fea_seconds = " + std::to_string(seconds_since(t0)));
    note("solid compliance = " + std::to_string(solid_fem.compliance(U)) + " (" + summary.solver +
         ", rel residual " + std::to_string(summary.rel_residual) + ")");

    // Step 2: topology analysis.
    t0 = clock::now();
    SkeletonOptions sopts;
    sopts.include_wedges = cfg.include_wedges;
    const TopologicalSkeleton skeleton = extract_skeleton(field, sopts);
    {
        std::ofstream tsv(out_dir / "degenerate_points.tsv");
        write_degenerate_points_tsv(tsv, skeleton);
        std::ofstream psl(out_dir / "skeleton.psl");
        write_skeleton_psl(psl, skeleton);
    }
    result.trisectors = skeleton.num_trisectors();
    result.wedges = skeleton.num_wedges();
    for (const auto& w : skeleton.warnings) note("warning: " + w);
    note("step2_topology_seconds = " + std::to_string(seconds_since(t0)));
    note("degenerate points: " + std::to_string(skeleton.points.size()) + " (" +
         std::to_string(result.trisectors) + " trisectors, " + std::to_string(result.wedges) +
         " wedges); separatrices: " + std::to_string(skeleton.separatrices.size()));
    if (steps <= 2) return result;

    // Step 3: material initialization.
    t0 = clock::now();
    const ScalarField alpha = build_parameter_field(grid, cfg.alpha);
    ScalarField phi_init = (cfg.init == InitMode::TopologyGuided)
                               ? skeleton_initialization(skeleton, grid, alpha)
                               : alpha;
    write_density_field(phi_init.values, grid, out_dir / "init_density");
    note("step3_initialization_seconds = " + std::to_string(seconds_since(t0)));
    if (cfg.init == InitMode::TopologyGuided) {
        int solids = 0;
        for (double v : phi_init.values) solids += (v == 1.0);
        note("skeleton seeds: " + std::to_string(solids) + " solid elements");
    }
    if (steps <= 3) return result;

    // Step 4: porous infill optimization.
    t0 = clock::now();
    OptimizationConfig ocfg;
    ocfg.alpha = alpha;
    ocfg.alpha_total = cfg.alpha_total;
    ocfg.R = build_parameter_field(grid, cfg.R);
    ocfg.filter_radius = cfg.r;
    ocfg.p = cfg.p;
    ocfg.beta = cfg.beta;
    ocfg.move_limit = cfg.move_limit;
    ocfg.max_iterations = cfg.max_iterations;
    ocfg.material = cfg.material;
    ocfg.init = cfg.init;
    ocfg.solver = cfg.solver;

    std::ofstream hist(out_dir / "history.csv");
    hist << "iteration,beta,compliance,g_local,g_global,sharpness,mean_density\n";
    RunCallbacks callbacks;
    callbacks.on_iteration = [&](const OptimizationState& st) {
        const IterationRecord& h = st.history.back();
        char buf[240];
        std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,", h.iteration, h.beta,
                      h.compliance, h.g_local);
        hist << buf;
        if (h.g_global) {
            std::snprintf(buf, sizeof(buf), "%.12g", *h.g_global);
            hist << buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.12g,%.12g\n", h.sharpness, h.mean_density);
        hist << buf;
        hist.flush();
        if (cfg.snapshot_every > 0 && st.iteration % cfg.snapshot_every == 0 &&
            st.iteration != ocfg.max_iterations) {
            char name[48];
            std::snprintf(name, sizeof(name), "density_%06d", st.iteration);
            write_density_field(st.rho, grid, out_dir / name);
        }
        if (st.iteration % 50 == 0 && log_stream) {
            std::snprintf(buf, sizeof(buf),
                          "iter %d: c=%.6g g=%.3e s=%.3e mean=%.4f beta=%g", h.iteration,
                          h.compliance, h.g_local, h.sharpness, h.mean_density, h.beta);
            *log_stream << buf << "\n";
        }
    };

    const OptimizationState final_state = run_optimization(ocfg, grid, bc, phi_init, callbacks);
    write_density_field(final_state.rho, grid, out_dir / "final_density");
    if (!final_state.dc_drho.empty()) {
        const SensitivityFields sens = sensitivity_diagnostics(final_state);
        write_density_field(sens.dc_drho, grid, out_dir / "sens_dc_drho");
        write_density_field(sens.dg_drho, grid, out_dir / "sens_dg_drho");
        write_density_field(sens.ratio, grid, out_dir / "sens_ratio");
    }
    note("step4_optimization_seconds = " + std::to_string(seconds_since(t0)));
    if (!final_state.history.empty()) {
        result.final_record = final_state.history.back();
        const auto& h = *result.final_record;
        char buf[200];
        std::snprintf(buf, sizeof(buf), "final: c=%.6g g_local=%.6g s=%.6g mean=%.6g",
                      h.compliance, h.g_local, h.sharpness, h.mean_density);
        note(buf);
    }
    return result;
}

Metrics compute_metrics(const RunConfig& cfg, const std::vector<double>& rho) {
    const CartesianGrid grid = make_grid(cfg);
    if (rho.size() != static_cast<size_t>(grid.num_elements())) {
        throw std::runtime_error("density field does not match the config grid");
    }
    const BoundaryConditions bc = make_boundary_conditions(cfg, grid);
    FemSolver fem(grid, bc, cfg.material, cfg.solver);
    ScalarField r;
    r.values = rho;
    auto [U, summary] = fem.solve(r);

    Metrics m;
    m.compliance = fem.compliance(U);
    const ScalarField alpha = build_parameter_field(grid, cfg.alpha);
    const ScalarField R = build_parameter_field(grid, cfg.R);
    const NeighborhoodTable nb = NeighborhoodTable::build(grid, R);
    std::vector<double> rho_bar;
    local_volume(rho, nb, rho_bar);
    m.g_local = aggregate_constraint(rho_bar, alpha.values, cfg.p);
    m.sharpness = sharpness(rho);
    m.mean_density = std::accumulate(rho.begin(), rho.end(), 0.0) / rho.size();
    if (cfg.alpha_total) m.g_global = m.mean_density - *cfg.alpha_total;
    return m;
}

}  // namespace infilltopo
