#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "infilltopo/cli_io.hpp"

using namespace infilltopo;
namespace fs = std::filesystem;

namespace {

const char* kCantileverCfg = R"(# cantilever, half scale
nx = 24
ny = 12
support = left xy
load = right-mid 0 -1
load = bottom-mid 0 -1
alpha = 0.6
R = 4
r = 1.5
p = 16
max_iters = 5
init = topo
)";

fs::path temp_dir(const char* name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("config parsing, defaults and echo round-trip") {
    const RunConfig cfg = parse_config(kCantileverCfg);
    CHECK(cfg.nx == 24);
    CHECK(cfg.ny == 12);
    CHECK(cfg.material.E0 == 1.0);
    CHECK(cfg.material.nu == 0.3);
    CHECK(cfg.material.gamma == 3.0);
    CHECK(cfg.material.Emin == doctest::Approx(1e-6));
    CHECK(cfg.p == 16.0);
    CHECK(cfg.move_limit == 0.01);
    CHECK(cfg.beta.initial == 1.0);
    CHECK(cfg.beta.double_every == 40);
    CHECK(cfg.beta.cap == 128.0);
    CHECK(cfg.init == InitMode::TopologyGuided);
    CHECK(cfg.supports.size() == 1);
    CHECK(cfg.loads.size() == 2);

    const std::string echo = serialize_config(cfg);
    const RunConfig back = parse_config(echo);
    CHECK(serialize_config(back) == echo);
}

TEST_CASE("config errors carry line numbers and name the problem") {
    // Missing supports.
    try {
        parse_config("nx = 4\nny = 4\nalpha = 0.5\nR = 2\nr = 1\nmax_iters = 1\nload = right-mid 0 -1\n");
        CHECK(false);
    } catch (const std::exception& ex) {
        CHECK(std::string(ex.what()).find("support") != std::string::npos);
    }
    // r >= R.
    try {
        parse_config(
            "nx = 4\nny = 4\nalpha = 0.5\nR = 18\nr = 20\nmax_iters = 1\n"
            "support = left xy\nload = right-mid 0 -1\n");
        CHECK(false);
    } catch (const std::exception& ex) {
        const std::string msg = ex.what();
        CHECK(msg.find("r < R") != std::string::npos);
        CHECK(msg.find("line 5") != std::string::npos);
    }
    // Unknown key.
    try {
        parse_config("nx = 4\nfoo = 1\n");
        CHECK(false);
    } catch (const std::exception& ex) {
        const std::string msg = ex.what();
        CHECK(msg.find("unknown key") != std::string::npos);
        CHECK(msg.find("line 2") != std::string::npos);
    }
    // alpha out of range.
    CHECK_THROWS(parse_config("nx = 4\nny = 4\nalpha = 1.5\nR = 2\nr = 1\nmax_iters = 1\n"
                              "support = left xy\nload = right-mid 0 -1\n"));
    // Duplicate scalar key.
    CHECK_THROWS(parse_config("nx = 4\nnx = 5\n"));
}

TEST_CASE("density field round-trips through the text format") {
    const CartesianGrid g = build_grid(5, 4);
    std::vector<double> rho(g.num_elements());
    for (int e = 0; e < g.num_elements(); ++e) rho[e] = (e * 0.618034 - std::floor(e * 0.618034));
    const fs::path dir = temp_dir("infilltopo_dens");
    write_density_field(rho, g, dir / "field");
    const auto back = read_density_field(dir / "field.txt", g);
    for (int e = 0; e < g.num_elements(); ++e) {
        CHECK(std::abs(back[e] - rho[e]) <= 1e-9);
    }
}

TEST_CASE("pgm mapping: solid is black, gray is mid-range, mask is white") {
    std::vector<uint8_t> mask{1, 1, 1, 0};  // row-major: deactivates cell (1,1)
    const CartesianGrid g = build_grid(2, 2, mask);
    std::vector<double> rho(g.num_elements(), 1.0);
    const fs::path dir = temp_dir("infilltopo_pgm");
    write_density_field(rho, g, dir / "solid");
    std::ifstream pgm(dir / "solid.pgm");
    std::string magic;
    int w, h, maxval;
    pgm >> magic >> w >> h >> maxval;
    CHECK(magic == "P2");
    CHECK(w == 2);
    CHECK(h == 2);
    CHECK(maxval == 65535);
    // Row 0 of the file is the top of the domain: cells (0,1)=active, (1,1)=masked.
    int v00, v10, v01, v11;
    pgm >> v00 >> v10 >> v01 >> v11;
    CHECK(v00 == 0);
    CHECK(v10 == 65535);  // masked white
    CHECK(v01 == 0);
    CHECK(v11 == 0);

    std::vector<double> gray(g.num_elements(), 0.5);
    write_density_field(gray, g, dir / "gray");
    std::ifstream gpgm(dir / "gray.pgm");
    gpgm >> magic >> w >> h >> maxval >> v00;
    CHECK(v00 == 32768);

    // The text matrix writes nan on the masked cell.
    std::ifstream txt(dir / "solid.txt");
    std::string a, b;
    txt >> a >> b;
    CHECK(a == "1");
    CHECK(b == "nan");
}

TEST_CASE("mask files load with row 0 on top") {
    const fs::path dir = temp_dir("infilltopo_mask");
    std::ofstream m(dir / "m.mask");
    m << "110\n111\n";  // top row has a hole at (2, j=1)
    m.close();
    const auto mask = load_mask(dir / "m.mask", 3, 2);
    const CartesianGrid g = build_grid(3, 2, mask);
    CHECK(g.num_elements() == 5);
    CHECK(!g.cell_active(2, 1));
    CHECK(g.cell_active(2, 0));
}

TEST_CASE("pipeline writes the full artifact manifest and metrics agree") {
    RunConfig cfg = parse_config(kCantileverCfg);
    const fs::path dir = temp_dir("infilltopo_run");
    const auto result = run_pipeline(cfg, dir, 4);

    for (const char* name :
         {"config_echo.cfg", "history.csv", "final_density.txt", "final_density.pgm",
          "degenerate_points.tsv", "skeleton.psl", "run.log", "nodal_stress.tsv",
          "init_density.txt"}) {
        CHECK_MESSAGE(fs::exists(dir / name), name);
    }

    // The echo re-parses to the same effective config.
    const RunConfig echoed = parse_config_file(dir / "config_echo.cfg");
    CHECK(serialize_config(echoed) == serialize_config(cfg));

    // Metrics on the final snapshot match the last history row.
    const CartesianGrid g = make_grid(cfg);
    const auto rho = read_density_field(dir / "final_density.txt", g);
    const Metrics m = compute_metrics(cfg, rho);

    std::ifstream hist(dir / "history.csv");
    std::string line, last;
    std::getline(hist, line);  // header
    while (std::getline(hist, line)) {
        if (!line.empty()) last = line;
    }
    std::replace(last.begin(), last.end(), ',', ' ');
    std::istringstream row(last);
    int it;
    double beta, c, gl, s, mean;
    row >> it >> beta >> c >> gl >> s >> mean;
    CHECK(it == 5);
    CHECK(m.compliance == doctest::Approx(c).epsilon(1e-6));
    CHECK(m.g_local == doctest::Approx(gl).epsilon(1e-6));
    CHECK(m.sharpness == doctest::Approx(s).epsilon(1e-6));
    CHECK(m.mean_density == doctest::Approx(mean).epsilon(1e-6));
}

TEST_CASE("analyze-only pipeline on a uniaxial-tension config finds no topology") {
    // Rollers on the left edge, pinned corner, uniform tension on the right:
    // constant stress, no degenerate points.
    const char* cfg_text = R"(
nx = 8
ny = 4
support = left x
support = corner-bl y
load = right-mid 1 0
alpha = 0.6
R = 2
r = 1
max_iters = 0
)";
    RunConfig cfg = parse_config(cfg_text);
    const fs::path dir = temp_dir("infilltopo_analyze");
    const auto result = run_pipeline(cfg, dir, 2);
    CHECK(result.trisectors == 0);
    CHECK(result.wedges == 0);
    CHECK(fs::exists(dir / "skeleton.psl"));
    CHECK(fs::file_size(dir / "skeleton.psl") == 0);
    std::ifstream tsv(dir / "degenerate_points.tsv");
    std::string header, rest;
    std::getline(tsv, header);
    CHECK(!std::getline(tsv, rest));
    CHECK(!fs::exists(dir / "history.csv"));
}

TEST_CASE("uniform init skips seeding but still exports the skeleton") {
    RunConfig cfg = parse_config(kCantileverCfg);
    cfg.init = InitMode::Uniform;
    cfg.max_iterations = 0;
    const fs::path dir = temp_dir("infilltopo_uniform");
    run_pipeline(cfg, dir, 4);
    CHECK(fs::exists(dir / "skeleton.psl"));
    const CartesianGrid g = make_grid(cfg);
    const auto init = read_density_field(dir / "init_density.txt", g);
    for (double v : init) CHECK(v == doctest::Approx(0.6));
}
