#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "conjatlas/config.hpp"
#include "conjatlas/output.hpp"

namespace fs = std::filesystem;
using namespace conjatlas;

namespace {

int log_level() {
    const char* env = std::getenv("CONJ_ATLAS_LOG");
    if (!env) return 1;
    const std::string v = env;
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[conjatlas] " << msg << "\n";
}

struct RunContext {
    std::string config_path;
    std::string out_dir = ".";
    int workers = 0;
    std::uint64_t seed = 0;
    bool emit_svg = false;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    int effective_workers() const {
        if (workers > 0) return workers;
        const unsigned hw = std::thread::hardware_concurrency();
        return hw > 0 ? static_cast<int>(hw) : 1;
    }

    std::string config_text() const {
        std::ifstream in(config_path);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    void finish(const std::string& command) const {
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        fs::create_directories(out_dir);
        write_text_file(out_dir + "/manifest.json",
                        run_manifest_json(command, config_text(), seed, effective_workers(), wall));
    }
};

std::unique_ptr<ResidualMap> build_problem(const ExperimentConfig& cfg,
                                           const HamiltonianModel& model) {
    if (model.constraint) {
        if (!cfg.boundary || cfg.boundary->kind != "dirichlet")
            throw ConfigError("constrained models support boundary.kind = \"dirichlet\" only");
        const Vec q0 = project_to_constraint(*model.constraint, cfg.boundary->x_star);
        const Vec target = project_to_constraint(*model.constraint, cfg.boundary->X_star);
        return std::make_unique<ConstrainedDirichletMap>(model, cfg.integrator, q0, target);
    }
    if (!cfg.boundary) throw ConfigError("missing [boundary] table");
    return std::make_unique<PlaneResidualMap>(cfg.boundary->build(), model, cfg.integrator);
}

std::vector<std::string> u_columns(int n, const std::string& prefix) {
    std::vector<std::string> cols;
    for (int i = 1; i <= n; ++i) cols.push_back(prefix + std::to_string(i));
    return cols;
}

int cmd_solve(const RunContext& ctx) {
    const ExperimentConfig cfg = ExperimentConfig::load(ctx.config_path, "solve");
    const HamiltonianModel model = cfg.model.build();
    const auto map = build_problem(cfg, model);
    const int n = map->dim();

    SolverSettings settings;
    settings.tol = cfg.solve.tol;
    settings.max_iter = cfg.solve.max_iter;
    settings.dedup_tol = cfg.solve.dedup_tol;

    std::vector<SolutionPoint> solutions;
    if (cfg.solve.multistart) {
        MultistartPlan plan;
        plan.center = cfg.solve.u0.size() == n ? cfg.solve.u0 : Vec::Zero(n);
        plan.radius = cfg.solve.radius;
        plan.count = cfg.solve.count;
        plan.seed = ctx.seed;
        solutions = multistart_solve(*map, plan, settings);
    } else {
        const Vec u0 = cfg.solve.u0.size() == n ? cfg.solve.u0 : Vec::Zero(n);
        solutions.push_back(solve(*map, u0, settings));
    }

    std::vector<std::string> cols = u_columns(n, "u");
    cols.push_back("degeneracy");
    cols.push_back("residual_norm");
    cols.push_back("converged");
    CsvWriter csv(cols, cfg.output_precision);
    bool any_failed = false;
    for (const auto& s : solutions) {
        std::vector<double> row;
        for (int i = 0; i < n; ++i) row.push_back(s.u(i));
        row.push_back(s.degeneracy);
        row.push_back(s.residual_norm);
        row.push_back(s.converged ? 1.0 : 0.0);
        csv.row(row);
        if (!s.converged) any_failed = true;
    }
    fs::create_directories(ctx.out_dir);
    csv.write(ctx.out_dir + "/solutions.csv");
    ctx.finish("solve");
    log_info("solve: " + std::to_string(solutions.size()) + " solution(s) written");
    if (!cfg.solve.multistart && any_failed) {
        write_text_file(ctx.out_dir + "/diagnostics.txt", "solve: Newton did not converge\n");
        return 3;
    }
    return 0;
}

int cmd_sweep(const RunContext& ctx) {
    const ExperimentConfig cfg = ExperimentConfig::load(ctx.config_path, "sweep");
    const HamiltonianModel model = cfg.model.build();
    const auto base_map = build_problem(cfg, model);
    const int n = base_map->dim();
    const int k = static_cast<int>(cfg.sweep.axes.size());

    ProblemFamily family;
    if (model.constraint) {
        const auto* cmap = dynamic_cast<const ConstrainedDirichletMap*>(base_map.get());
        const Vec target0 = cmap->target();
        const auto mu_entries = cfg.boundary->mu_entries;
        if (static_cast<int>(mu_entries.size()) != k)
            throw ConfigError("boundary.mu_entries must match the number of sweep axes");
        family = [cmap, target0, mu_entries, &model](const Vec& mu) {
            Vec target = target0;
            for (int i = 0; i < mu.size(); ++i) target(mu_entries[i]) += mu(i);
            target = project_to_constraint(*model.constraint, target);
            return std::make_unique<ConstrainedDirichletMap>(cmap->with_target(target))
                       ->clone();
        };
    } else {
        const auto* pmap = dynamic_cast<const PlaneResidualMap*>(base_map.get());
        if (static_cast<int>(pmap->boundary().mu_entries.size()) != k)
            throw ConfigError("boundary.mu_entries must match the number of sweep axes");
        family = [pmap](const Vec& mu) { return pmap->with_parameter(mu).clone(); };
    }

    MultistartPlan plan;
    plan.center = Vec::Zero(n);
    plan.radius = cfg.sweep.radius;
    plan.count = cfg.sweep.count;
    plan.seed = ctx.seed;
    SolverSettings settings;
    settings.tol = cfg.sweep.tol;
    settings.max_iter = cfg.sweep.max_iter;
    settings.dedup_tol = cfg.sweep.dedup_tol;

    const SweepResult result =
        sweep(family, cfg.sweep.axes, plan, settings, ctx.effective_workers());

    std::vector<std::string> count_cols = u_columns(k, "mu");
    count_cols.push_back("count");
    count_cols.push_back("fold_flag");
    CsvWriter counts(count_cols, cfg.output_precision);
    std::vector<std::string> sol_cols = u_columns(k, "mu");
    for (const auto& c : u_columns(n, "u")) sol_cols.push_back(c);
    sol_cols.push_back("degeneracy");
    sol_cols.push_back("residual_norm");
    CsvWriter sols(sol_cols, cfg.output_precision);

    for (const auto& cell : result.cells) {
        std::vector<double> row;
        for (int i = 0; i < k; ++i) row.push_back(cell.mu(i));
        row.push_back(static_cast<double>(cell.solutions.size()));
        row.push_back(cell.fold_marker ? 1.0 : 0.0);
        counts.row(row);
        for (const auto& s : cell.solutions) {
            std::vector<double> srow;
            for (int i = 0; i < k; ++i) srow.push_back(cell.mu(i));
            for (int i = 0; i < n; ++i) srow.push_back(s.u(i));
            srow.push_back(s.degeneracy);
            srow.push_back(s.residual_norm);
            sols.row(srow);
        }
    }
    fs::create_directories(ctx.out_dir);
    counts.write(ctx.out_dir + "/counts.csv");
    sols.write(ctx.out_dir + "/solutions.csv");
    ctx.finish("sweep");
    log_info("sweep: " + std::to_string(result.cells.size()) + " cells, " +
             std::to_string(result.fold_count) + " fold marker(s)");
    return 0;
}

int cmd_locus(const RunContext& ctx) {
    const ExperimentConfig cfg = ExperimentConfig::load(ctx.config_path, "locus");
    const HamiltonianModel model = cfg.model.build();
    const int manifold_dim = model.constraint ? model.dim - model.constraint->codim : model.dim;

    fs::create_directories(ctx.out_dir);
    if (manifold_dim == 2) {
        LocusSettings settings;
        settings.cusp_tol = cfg.locus.cusp_tol;
        settings.conjugate.t_tol = cfg.locus.t_tol;
        settings.workers = ctx.effective_workers();
        const LocusCurve curve =
            trace_locus(model, cfg.locus.base, cfg.locus.grid, cfg.locus.t_max, cfg.integrator,
                        settings);
        const int m = model.dim;
        std::vector<std::string> cols = {"s", "t_star"};
        for (const auto& c : u_columns(m, "X")) cols.push_back(c);
        cols.push_back("m");
        cols.push_back("cusp_flag");
        CsvWriter csv(cols, cfg.output_precision);
        std::vector<Vec> polyline, marks;
        for (const auto& p : curve.points) {
            std::vector<double> row = {p.s, p.t_star};
            for (int i = 0; i < m; ++i) row.push_back(p.endpoint(i));
            row.push_back(p.m);
            row.push_back(p.cusp ? 1.0 : 0.0);
            csv.row(row);
            if (m >= 2) {
                polyline.push_back(p.endpoint.head(2));
                if (p.cusp) marks.push_back(p.endpoint.head(2));
            }
        }
        csv.write(ctx.out_dir + "/locus.csv");
        if (ctx.emit_svg) write_text_file(ctx.out_dir + "/locus.svg", svg_polyline(polyline, marks));
        log_info("locus: " + std::to_string(curve.points.size()) + " points, " +
                 std::to_string(curve.cusp_indices.size()) + " cusp(s)");
    } else if (manifold_dim == 3) {
        Locus3DSettings settings;
        settings.conjugate.t_tol = cfg.locus.t_tol;
        settings.workers = ctx.effective_workers();
        const Locus3DResult result =
            trace_locus_3d(model, cfg.locus.base, cfg.locus.n_theta, cfg.locus.n_phi,
                           cfg.locus.t_max, cfg.integrator, settings);
        const int m = model.dim;
        std::vector<std::string> cols = {"theta", "phi", "t_star"};
        for (const auto& c : u_columns(m, "X")) cols.push_back(c);
        cols.push_back("m");
        cols.push_back("sigma2");
        CsvWriter csv(cols, cfg.output_precision);
        for (const auto& s : result.samples) {
            if (s.t_star < 0) continue;
            std::vector<double> row = {s.theta, s.phi, s.t_star};
            for (int i = 0; i < m; ++i) row.push_back(s.endpoint(i));
            row.push_back(s.m);
            row.push_back(s.sigma_second);
            csv.row(row);
        }
        csv.write(ctx.out_dir + "/locus3d.csv");
        std::ostringstream os;
        os << "{\n  \"umbilics\": [";
        for (std::size_t i = 0; i < result.umbilics.size(); ++i) {
            const auto& u = result.umbilics[i];
            os << (i ? ",\n    {" : "\n    {") << "\"theta\": " << format_number(u.theta)
               << ", \"phi\": " << format_number(u.phi)
               << ", \"t_star\": " << format_number(u.t_star) << ", \"m\": " << u.report.m
               << ", \"type\": \"" << to_string(u.report.type) << "\""
               << ", \"ridges\": " << u.ridge_count << "}";
        }
        os << "\n  ]\n}\n";
        write_text_file(ctx.out_dir + "/umbilics.json", os.str());
        log_info("locus3d: " + std::to_string(result.umbilics.size()) + " umbilic candidate(s)");
    } else {
        throw ConfigError("locus: model must have 2 or 3 manifold dimensions");
    }
    ctx.finish("locus");
    return 0;
}

int cmd_classify(const RunContext& ctx) {
    const ExperimentConfig cfg = ExperimentConfig::load(ctx.config_path, "classify");
    const HamiltonianModel model = cfg.model.build();
    const auto map = build_problem(cfg, model);
    const int n = map->dim();

    SolverSettings settings;
    settings.tol = cfg.solve.tol;
    settings.max_iter = cfg.solve.max_iter;
    const Vec u0 = cfg.solve.u0.size() == n ? cfg.solve.u0 : Vec::Zero(n);
    const SolutionPoint sol = solve(*map, u0, settings);
    fs::create_directories(ctx.out_dir);
    if (!sol.converged) {
        write_text_file(ctx.out_dir + "/diagnostics.txt",
                        "classify: Newton did not converge (residual " +
                            format_number(sol.residual_norm) + ")\n");
        ctx.finish("classify");
        return 3;
    }
    ClassifySettings cls;
    SingularityReport report = classify(*map, sol.u, cls);
    report.hessian_fd_flagged = model.hessian_is_fd;
    write_text_file(ctx.out_dir + "/report.json", report_to_json(report));
    ctx.finish("classify");
    log_info("classify: m = " + std::to_string(report.m) + ", type = " + to_string(report.type));
    return 0;
}

int cmd_symmetry_check(const RunContext& ctx) {
    const ExperimentConfig cfg = ExperimentConfig::load(ctx.config_path, "symmetry-check");
    const HamiltonianModel model = cfg.model.build();
    if (model.constraint)
        throw ConfigError("symmetry-check operates on chart models (no constraint)");
    const ScalingAction action = cfg.action->build();
    action.validate();

    const auto base_map = build_problem(cfg, model);
    const auto* pmap = dynamic_cast<const PlaneResidualMap*>(base_map.get());
    const int n = pmap->dim();

    // Invariance of the Hamiltonian over deterministic samples.
    std::vector<PhasePoint> samples;
    {
        MultistartPlan plan;
        plan.center = Vec::Zero(2 * n);
        plan.radius = 1.0;
        plan.count = 32;
        plan.seed = ctx.seed;
        for (const auto& z : halton_ball(plan, 2 * n)) {
            PhasePoint p(z.head(n), z.tail(n));
            if (p.y.norm() < 1e-3) continue;
            samples.push_back(std::move(p));
        }
    }
    const double invariance_err = verify_invariance(action, model, samples);
    const bool symmetric = invariance_err <= 1e-10;

    SolverSettings settings;
    settings.tol = cfg.solve.tol;
    settings.max_iter = cfg.solve.max_iter;
    MultistartPlan plan;
    plan.center = Vec::Zero(n);
    plan.radius = cfg.sweep.radius;
    plan.count = cfg.sweep.count;
    plan.seed = ctx.seed;

    std::vector<SolutionPoint> solutions;
    std::vector<ObstructionCheckReport> reports;
    bool any_violation = false;
    if (!cfg.sweep.axes.empty()) {
        const SweepResult swp = sweep([&](const Vec& mu) { return pmap->with_parameter(mu).clone(); },
                                      cfg.sweep.axes, plan, settings, ctx.effective_workers());
        for (const auto& cell : swp.cells) {
            if (cell.solutions.empty()) continue;
            const PlaneResidualMap cell_map = pmap->with_parameter(cell.mu);
            ObstructionCheckReport rep = check_obstruction(action, cell_map, cell.solutions);
            if (rep.violations > 0 || !rep.all_pass) any_violation = true;
            reports.push_back(std::move(rep));
        }
    } else {
        solutions = multistart_solve(*base_map, plan, settings);
        ObstructionCheckReport rep = check_obstruction(action, *pmap, solutions);
        if (rep.violations > 0 || !rep.all_pass) any_violation = true;
        reports.push_back(std::move(rep));
    }

    int checked = 0, violations = 0, hypotheses_not_met = 0;
    for (const auto& rep : reports) {
        checked += rep.checked;
        violations += rep.violations;
        for (const auto& s : rep.samples)
            if (!s.hypotheses_met) ++hypotheses_not_met;
    }

    std::ostringstream os;
    os << "{\n"
       << "  \"invariance_error\": " << format_number(invariance_err) << ",\n"
       << "  \"model_symmetric\": " << (symmetric ? "true" : "false") << ",\n"
       << "  \"bound\": " << (action.dim() - action.generators()) << ",\n"
       << "  \"checked\": " << checked << ",\n"
       << "  \"hypotheses_not_met\": " << hypotheses_not_met << ",\n"
       << "  \"violations\": " << violations << ",\n"
       << "  \"cells\": [";
    for (std::size_t i = 0; i < reports.size(); ++i)
        os << (i ? ", " : "") << reports[i].checked;
    os << "]\n}\n";
    fs::create_directories(ctx.out_dir);
    write_text_file(ctx.out_dir + "/obstruction.json", os.str());
    ctx.finish("symmetry-check");
    log_info("symmetry-check: " + std::to_string(checked) + " checked, " +
             std::to_string(violations) + " violation(s), invariance error " +
             format_number(invariance_err));
    return (!symmetric || any_violation) ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conjatlas: Hamiltonian boundary value problems, conjugate loci and their singularities"};
    app.require_subcommand(1);

    RunContext ctx;
    app.add_option("--config", ctx.config_path, "path to the TOML config")->required();
    app.add_option("--out", ctx.out_dir, "output directory");
    app.add_option("--workers", ctx.workers, "worker threads (0 = hardware)");
    app.add_option("--seed", ctx.seed, "seed for multistart sampling");
    app.add_flag("--emit-svg", ctx.emit_svg, "emit an SVG rendering where applicable");

    auto* c_solve = app.add_subcommand("solve", "solve the boundary value problem");
    auto* c_sweep = app.add_subcommand("sweep", "parameter sweep / bifurcation diagram");
    auto* c_locus = app.add_subcommand("locus", "trace the conjugate locus");
    auto* c_classify = app.add_subcommand("classify", "classify the singularity at a solution");
    auto* c_sym = app.add_subcommand("symmetry-check", "verify scaling symmetry and the degeneracy bound");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_solve->parsed()) return cmd_solve(ctx);
        if (c_sweep->parsed()) return cmd_sweep(ctx);
        if (c_locus->parsed()) return cmd_locus(ctx);
        if (c_classify->parsed()) return cmd_classify(ctx);
        if (c_sym->parsed()) return cmd_symmetry_check(ctx);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IntegrationFailure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        try {
            fs::create_directories(ctx.out_dir);
            write_text_file(ctx.out_dir + "/diagnostics.txt",
                            std::string("numerical failure: ") + e.what() + "\n");
        } catch (...) {
        }
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
