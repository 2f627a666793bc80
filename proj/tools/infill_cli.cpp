#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "infilltopo/cli_io.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::string out = "out";
    std::optional<int> max_iters;
    std::optional<double> move_limit;
    std::optional<std::string> init;
    bool single_thread = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "run configuration file")->required();
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--max-iters", args.max_iters, "override max_iters");
    cmd->add_option("--move-limit", args.move_limit, "override move_limit");
    cmd->add_option("--init", args.init, "override init mode (uniform|topo)")
        ->check(CLI::IsMember({"uniform", "topo"}));
    cmd->add_flag("--single-thread", args.single_thread, "force single-threaded execution");
}

infilltopo::RunConfig load_config(const CommonArgs& args) {
    infilltopo::RunConfig cfg = infilltopo::parse_config_file(args.config);
    if (args.max_iters) cfg.max_iterations = *args.max_iters;
    if (args.move_limit) cfg.move_limit = *args.move_limit;
    if (args.init) {
        cfg.init = (*args.init == "topo") ? infilltopo::InitMode::TopologyGuided
                                          : infilltopo::InitMode::Uniform;
    }
    if (args.single_thread) cfg.single_thread = true;
    if (cfg.single_thread) Eigen::setNbThreads(1);
    return cfg;
}

int run_steps(const CommonArgs& args, int steps) {
    infilltopo::RunConfig cfg;
    try {
        cfg = load_config(args);
    } catch (const std::exception& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 1;
    }
    try {
        const auto result = infilltopo::run_pipeline(cfg, args.out, steps, &std::cout);
        std::cout << "degenerate points: " << result.trisectors << " trisectors, "
                  << result.wedges << " wedges\n";
        if (result.final_record) {
            const auto& h = *result.final_record;
            std::printf("final: iteration=%d compliance=%.6g g_local=%.6g sharpness=%.6g "
                        "mean_density=%.6g\n",
                        h.iteration, h.compliance, h.g_local, h.sharpness, h.mean_density);
        }
    } catch (const std::exception& ex) {
        std::cerr << "run failed: " << ex.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Porous infill topology optimization with stress-topology-guided initialization"};
    app.require_subcommand(1);

    CommonArgs analyze_args, init_args, optimize_args, metrics_args;
    std::string density_file;

    CLI::App* analyze = app.add_subcommand(
        "analyze", "solid-domain stress analysis and topological skeleton extraction");
    add_common(analyze, analyze_args);

    CLI::App* init = app.add_subcommand(
        "init", "analysis plus skeleton-guided material initialization");
    add_common(init, init_args);

    CLI::App* optimize = app.add_subcommand("optimize", "full porous infill optimization");
    add_common(optimize, optimize_args);

    CLI::App* metrics = app.add_subcommand(
        "metrics", "recompute compliance, constraint and sharpness for a saved density field");
    add_common(metrics, metrics_args);
    metrics->add_option("--density", density_file, "density matrix (.txt) to evaluate")
        ->required();

    CLI11_PARSE(app, argc, argv);

    if (analyze->parsed()) return run_steps(analyze_args, 2);
    if (init->parsed()) return run_steps(init_args, 3);
    if (optimize->parsed()) return run_steps(optimize_args, 4);

    // metrics
    infilltopo::RunConfig cfg;
    try {
        cfg = load_config(metrics_args);
    } catch (const std::exception& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 1;
    }
    try {
        const auto grid = infilltopo::make_grid(cfg);
        const auto rho = infilltopo::read_density_field(density_file, grid);
        const auto m = infilltopo::compute_metrics(cfg, rho);
        std::printf("compliance = %.12g\n", m.compliance);
        std::printf("g_local = %.12g\n", m.g_local);
        if (m.g_global) std::printf("g_global = %.12g\n", *m.g_global);
        std::printf("sharpness = %.12g\n", m.sharpness);
        std::printf("mean_density = %.12g\n", m.mean_density);
    } catch (const std::exception& ex) {
        std::cerr << "run failed: " << ex.what() << "\n";
        return 2;
    }
    return 0;
}
