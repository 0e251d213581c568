#ifndef CONJATLAS_SHOOTING_HPP
#define CONJATLAS_SHOOTING_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "conjatlas/singularity.hpp"

namespace conjatlas {

struct SolutionPoint {
    Vec u;
    PhasePoint z;      // start point on Lambda
    PhasePoint z_end;  // time-1 image
    double residual_norm = 0.0;
    int degeneracy = 0;
    double sigma_min = 0.0;  // smallest singular value of Dr at the solution
    bool converged = false;
    bool near_singular = false;  // Newton switched to a pseudo-inverse step
    int iterations = 0;
};

struct SolverSettings {
    double tol = 1e-10;
    int max_iter = 50;
    double sigma_threshold_rel = 1e-6;
    double dedup_tol = 1e-6;
    // Backtracking line search on |r|^2.
    double backtrack_factor = 0.5;
    double min_step = 1e-12;
};

/// Damped Newton on r(u). Near-singular Jacobians fall back to a pseudo-inverse
/// step and are flagged. Non-convergence returns a diagnostic point, it does
/// not throw.
SolutionPoint solve(const ResidualMap& map, const Vec& u0, const SolverSettings& settings = {});

/// Low-discrepancy (Halton) start points over a ball, plus caller-provided
/// warm starts; the seed rotates the Halton sequence offset.
struct MultistartPlan {
    Vec center;
    double radius = 1.0;
    int count = 16;
    std::uint64_t seed = 0;
};

std::vector<Vec> halton_ball(const MultistartPlan& plan, int dim);

/// Runs the solver from every plan start plus warm starts, keeps converged
/// solutions deduplicated in u.
std::vector<SolutionPoint> multistart_solve(const ResidualMap& map, const MultistartPlan& plan,
                                            const SolverSettings& settings,
                                            const std::vector<Vec>& warm_starts = {});

struct SweepAxis {
    double start = 0.0;
    double stop = 0.0;
    int count = 1;
};

struct SweepCell {
    Vec mu;
    std::vector<SolutionPoint> solutions;
    bool fold_marker = false;  // solution count changed by 2 vs the previous cell
    double min_sigma = std::numeric_limits<double>::infinity();
};

struct SweepResult {
    std::vector<SweepAxis> axes;
    std::vector<SweepCell> cells;  // row-major over the axis grid
    int fold_count = 0;
};

/// Problem family: mu -> residual map. Cells are processed in deterministic
/// grid order with warm starts taken from completed neighbor cells; per-cell
/// multistarts run in parallel over `workers`.
using ProblemFamily = std::function<std::unique_ptr<ResidualMap>(const Vec& mu)>;

SweepResult sweep(const ProblemFamily& family, const std::vector<SweepAxis>& axes,
                  const MultistartPlan& plan, const SolverSettings& settings, int workers = 1);

}  // namespace conjatlas

#endif
