#include "conjatlas/shooting.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <mutex>

#include "conjatlas/parallel.hpp"

namespace conjatlas {

SolutionPoint solve(const ResidualMap& map, const Vec& u0, const SolverSettings& settings) {
    const int n = map.dim();
    SolutionPoint sol;
    Vec u = u0;

    auto [r, Dr] = map.residual_and_jacobian(u);
    double rnorm = r.norm();
    int it = 0;
    for (; it < settings.max_iter && rnorm > settings.tol; ++it) {
        Eigen::JacobiSVD<Mat> svd(Dr, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Vec sv = svd.singularValues();
        Vec du;
        if (sv(0) <= 0.0 || sv(n - 1) < 1e-10 * sv(0)) {
            // Pseudo-inverse step through the well-conditioned directions only.
            sol.near_singular = true;
            Vec inv = Vec::Zero(n);
            for (int i = 0; i < n; ++i)
                if (sv(i) >= 1e-10 * sv(0)) inv(i) = 1.0 / sv(i);
            du = svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * r);
        } else {
            du = svd.solve(r);
        }

        double step = 1.0;
        bool accepted = false;
        while (step >= settings.min_step) {
            const Vec u_try = u - step * du;
            const Vec r_try = map.residual(u_try);
            if (r_try.squaredNorm() < rnorm * rnorm * (1.0 - 1e-4 * step) ||
                r_try.norm() <= settings.tol) {
                u = u_try;
                accepted = true;
                break;
            }
            step *= settings.backtrack_factor;
        }
        if (!accepted) break;  // stagnation: leave as non-converged diagnostics

        std::tie(r, Dr) = map.residual_and_jacobian(u);
        rnorm = r.norm();
    }

    sol.u = u;
    sol.residual_norm = rnorm;
    sol.iterations = it;
    sol.converged = rnorm <= settings.tol;
    sol.z = map.start_point(u);
    sol.z_end = map.end_point(u);
    const DegeneracyResult deg = degeneracy(Dr, settings.sigma_threshold_rel);
    sol.degeneracy = deg.m;
    sol.sigma_min = deg.singular_values(deg.singular_values.size() - 1);
    return sol;
}

namespace {

double halton(std::uint64_t index, int base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * static_cast<double>(index % base);
        index /= base;
    }
    return r;
}

const int kPrimes[8] = {2, 3, 5, 7, 11, 13, 17, 19};

}  // namespace

std::vector<Vec> halton_ball(const MultistartPlan& plan, int dim) {
    std::vector<Vec> points;
    points.reserve(plan.count);
    const std::uint64_t offset = 1 + (plan.seed % 8191) * 7;
    std::uint64_t index = offset;
    while (static_cast<int>(points.size()) < plan.count) {
        Vec p(dim);
        for (int d = 0; d < dim; ++d) p(d) = 2.0 * halton(index, kPrimes[d % 8]) - 1.0;
        ++index;
        if (p.norm() > 1.0) continue;  // rejection onto the unit ball
        Vec q = plan.center.size() == dim ? Vec(plan.center + plan.radius * p)
                                          : Vec(plan.radius * p);
        points.push_back(std::move(q));
    }
    return points;
}

namespace {

void dedup_insert(std::vector<SolutionPoint>& list, SolutionPoint sol, double dedup_tol) {
    for (const auto& existing : list)
        if ((existing.u - sol.u).norm() <= dedup_tol) return;
    list.push_back(std::move(sol));
}

std::vector<SolutionPoint> run_starts(const ResidualMap& map, const std::vector<Vec>& starts,
                                      const SolverSettings& settings) {
    std::vector<SolutionPoint> raw(starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i) raw[i] = solve(map, starts[i], settings);
    std::vector<SolutionPoint> out;
    for (auto& sol : raw)
        if (sol.converged) dedup_insert(out, std::move(sol), settings.dedup_tol);
    std::sort(out.begin(), out.end(), [](const SolutionPoint& a, const SolutionPoint& b) {
        for (int i = 0; i < a.u.size(); ++i)
            if (a.u(i) != b.u(i)) return a.u(i) < b.u(i);
        return false;
    });
    return out;
}

}  // namespace

std::vector<SolutionPoint> multistart_solve(const ResidualMap& map, const MultistartPlan& plan,
                                            const SolverSettings& settings,
                                            const std::vector<Vec>& warm_starts) {
    std::vector<Vec> starts = warm_starts;
    const std::vector<Vec> halton = halton_ball(plan, map.dim());
    starts.insert(starts.end(), halton.begin(), halton.end());
    return run_starts(map, starts, settings);
}

SweepResult sweep(const ProblemFamily& family, const std::vector<SweepAxis>& axes,
                  const MultistartPlan& plan, const SolverSettings& settings, int workers) {
    SweepResult result;
    result.axes = axes;
    const int k = static_cast<int>(axes.size());
    if (k == 0) throw InvalidInputError("sweep: empty parameter grid");

    long total = 1;
    std::vector<long> stride(k, 1);
    for (int a = k - 1; a >= 0; --a) {
        if (axes[a].count < 1) throw InvalidInputError("sweep: axis count must be >= 1");
        stride[a] = total;
        total *= axes[a].count;
    }
    // Row-major: the last axis varies fastest.
    std::vector<long> mixed(k, 1);
    {
        long acc = 1;
        for (int a = k - 1; a >= 0; --a) {
            mixed[a] = acc;
            acc *= axes[a].count;
        }
    }
    auto mu_at = [&](long idx) {
        Vec mu(k);
        for (int a = 0; a < k; ++a) {
            const long i = (idx / mixed[a]) % axes[a].count;
            mu(a) = axes[a].count == 1
                        ? axes[a].start
                        : axes[a].start + (axes[a].stop - axes[a].start) *
                                              static_cast<double>(i) / (axes[a].count - 1);
        }
        return mu;
    };

    result.cells.resize(total);
    // Deterministic wavefront: process in grid order; cells within a slab of
    // the leading axis run in parallel, warm-started from the previous slab.
    const long slab = k == 1 ? 1 : mixed[0];
    for (long base = 0; base < total; base += slab) {
        const long count = std::min(slab, total - base);
        parallel_for(static_cast<int>(count), workers, [&](int off) {
            const long idx = base + off;
            SweepCell& cell = result.cells[idx];
            cell.mu = mu_at(idx);
            std::vector<Vec> warm;
            if (idx >= slab)
                for (const auto& sol : result.cells[idx - slab].solutions) warm.push_back(sol.u);
            const auto map = family(cell.mu);
            cell.solutions = multistart_solve(*map, plan, settings, warm);
            for (const auto& sol : cell.solutions)
                cell.min_sigma = std::min(cell.min_sigma, sol.sigma_min);
        });
    }

    // Fold markers along the leading axis: solution count changes by 2.
    for (long idx = slab; idx < total; ++idx) {
        const int prev = static_cast<int>(result.cells[idx - slab].solutions.size());
        const int curr = static_cast<int>(result.cells[idx].solutions.size());
        if (std::abs(curr - prev) == 2) {
            result.cells[idx].fold_marker = true;
            ++result.fold_count;
        }
    }
    return result;
}

}  // namespace conjatlas
