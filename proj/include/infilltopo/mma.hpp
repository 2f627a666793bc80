#pragma once

#include <vector>

namespace infilltopo {

/// Method of moving asymptotes for box-constrained problems with a small
/// number of inequality constraints. Each call builds the separable convex
/// approximation around the current iterate and solves its dual with damped
/// Newton iterations (per-coordinate bisection as fallback).
struct MmaOptions {
    double move_limit = 0.01;
    double xmin = 0.0;
    double xmax = 1.0;
    double asy_init = 0.5;
    double asy_incr = 1.2;
    double asy_decr = 0.7;
    double a0 = 1.0;
    double ai = 0.0;     // per-constraint linear z coefficient
    double ci = 1000.0;  // per-constraint slack penalty
    double di = 1.0;     // per-constraint quadratic slack penalty
    double kkt_tol = 1e-9;
    int max_dual_iters = 500;
};

class MmaSolver {
public:
    MmaSolver(int num_vars, int num_constraints, MmaOptions opts = {});

    /// One design update. g holds the constraint values g_i(x) <= 0 and dg the
    /// per-constraint gradients. Returns the new iterate, clipped to the move
    /// limit and box bounds.
    std::vector<double> update(const std::vector<double>& x, const std::vector<double>& df0,
                               const std::vector<double>& g,
                               const std::vector<std::vector<double>>& dg);

    int iteration() const { return iter_; }
    const std::vector<double>& lower_asymptote() const { return low_; }
    const std::vector<double>& upper_asymptote() const { return upp_; }
    const std::vector<double>& dual() const { return lambda_; }

private:
    struct Subproblem;
    void update_asymptotes(const std::vector<double>& x);

    int n_;
    int m_;
    MmaOptions opts_;
    int iter_ = 0;
    std::vector<double> low_, upp_;
    std::vector<double> xold1_, xold2_;
    std::vector<double> lambda_;  // dual warm start
};

}  // namespace infilltopo
