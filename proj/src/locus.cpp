#include "conjatlas/locus.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>

#include "conjatlas/parallel.hpp"

namespace conjatlas {

namespace {

Mat orthonormal_complement(const Vec& v) {
    const int n = static_cast<int>(v.size());
    const Mat column = v;
    Eigen::HouseholderQR<Mat> qr(column);
    const Mat Q = qr.householderQ();
    return Q.rightCols(n - 1);
}

// Chart and constrained rays handled uniformly: `tangent` maps direction
// coordinates to ambient momentum directions at the base point.
struct RayGeometry {
    const HamiltonianModel* model = nullptr;
    bool constrained = false;
    Vec base;     // chart position or ambient position on the surface
    Mat tangent;  // ambient_dim x n
    int n = 0;    // manifold dimension
    int amb = 0;  // ambient dimension

    static RayGeometry make(const HamiltonianModel& model, const Vec& base) {
        RayGeometry g;
        g.model = &model;
        g.amb = model.dim;
        if (model.constraint) {
            g.constrained = true;
            g.base = project_to_constraint(*model.constraint, base);
            g.tangent = constraint_tangent_basis(*model.constraint, g.base);
            g.n = static_cast<int>(g.tangent.cols());
        } else {
            g.base = base;
            g.tangent = Mat::Identity(g.amb, g.amb);
            g.n = g.amb;
        }
        return g;
    }

    /// Unit-speed initial state for a direction in tangent coordinates.
    PhasePoint initial_state(const Vec& dir) const {
        const Vec p = tangent * dir.normalized();
        const double h2 = 2.0 * model->energy(base, p);
        if (h2 <= 0.0) throw InvalidInputError("ray: direction has non-positive energy");
        return PhasePoint(base, p / std::sqrt(h2));
    }

    /// Ambient momentum directions transverse to the ray (n-1 columns).
    Mat domain_transverse(const Vec& dir) const {
        return tangent * orthonormal_complement(dir.normalized());
    }
};

struct MonitorValue {
    double det = 0.0;        // determinant with normalized columns
    double sigma_min = 0.0;  // smallest singular value of the normalized matrix
};

// Transverse-block monitor: columns are the normalized flow-image direction,
// the images of the transverse momentum directions and, for constrained
// models, the constraint normals at the endpoint. Its zeros coincide with
// conjugate points because the radial direction never degenerates.
MonitorValue monitor_value(const RayGeometry& geom, const PhasePoint& z_end, const Mat& J,
                           const Mat& W) {
    const int amb = geom.amb;
    Vec gx(amb), gy(amb);
    geom.model->gradient(z_end.x, z_end.y, gx, gy);

    Mat M(amb, amb);
    M.col(0) = gy;
    const Mat Jxy = J.topRightCorner(amb, amb);
    const int nw = static_cast<int>(W.cols());
    for (int i = 0; i < nw; ++i) M.col(1 + i) = Jxy * W.col(i);
    if (geom.constrained) {
        const Mat G = geom.model->constraint->jacobian(z_end.x);
        for (int k = 0; k < G.rows(); ++k) M.col(1 + nw + k) = G.row(k).transpose();
    }
    for (int j = 0; j < amb; ++j) {
        const double norm = M.col(j).norm();
        if (norm > 0) M.col(j) /= norm;
    }
    MonitorValue mv;
    mv.det = M.determinant();
    Eigen::JacobiSVD<Mat> svd(M);
    mv.sigma_min = svd.singularValues()(amb - 1);
    return mv;
}

// (n-1) x (n-1) transverse block of the reduced endpoint Jacobian at a root:
// radial direction removed from the domain, flow direction from the codomain.
// sigma_ref is the largest singular value of the full reduced n x n Jacobian,
// which stays order one through the conjugate point (radial direction).
struct TransverseBlock {
    Mat block;
    double sigma_ref = 0.0;
};

TransverseBlock transverse_block(const RayGeometry& geom, const PhasePoint& z_end, const Mat& J,
                                 const Mat& W) {
    const int amb = geom.amb;
    Vec gx(amb), gy(amb);
    geom.model->gradient(z_end.x, z_end.y, gx, gy);
    const Mat Jxy = J.topRightCorner(amb, amb);

    Mat Tend;
    if (geom.constrained)
        Tend = constraint_tangent_basis(*geom.model->constraint, z_end.x);
    else
        Tend = Mat::Identity(amb, amb);

    const Vec g_red = (Tend.transpose() * gy).normalized();
    const Mat U = Tend * orthonormal_complement(g_red);

    TransverseBlock tb;
    tb.block = U.transpose() * Jxy * W;
    Eigen::JacobiSVD<Mat> svd(Mat(Tend.transpose() * Jxy * geom.tangent));
    tb.sigma_ref = svd.singularValues()(0);
    return tb;
}

}  // namespace

std::optional<ConjugatePoint> first_conjugate_time(const HamiltonianModel& model, const Vec& base,
                                                   const Vec& direction, double t_max,
                                                   const IntegratorSpec& spec,
                                                   const ConjugateSettings& settings) {
    if (t_max <= 0.0) throw InvalidInputError("first_conjugate_time: t_max must be positive");
    const RayGeometry geom = RayGeometry::make(model, base);
    const Vec dir = direction.normalized();
    const PhasePoint z0 = geom.initial_state(dir);
    const Mat W = geom.domain_transverse(dir);

    FlowStepper stepper(model, spec, z0, true);
    const double h = spec.step;

    auto eval_at = [&](const FlowStepper& from, double dt) {
        FlowStepper probe = from;
        if (dt > 0) probe.step(dt);
        return monitor_value(geom, probe.z(), probe.jacobian(), W);
    };

    auto finish = [&](const FlowStepper& from, double dt) -> ConjugatePoint {
        FlowStepper probe = from;
        if (dt > 0) probe.step(dt);
        ConjugatePoint cp;
        cp.t_star = probe.t();
        cp.z_end = probe.z();
        cp.endpoint = probe.z().x;
        const TransverseBlock tb = transverse_block(geom, probe.z(), probe.jacobian(), W);
        Eigen::JacobiSVD<Mat> svd(tb.block);
        cp.sigma_transverse = svd.singularValues();
        cp.m = 0;
        for (int i = 0; i < cp.sigma_transverse.size(); ++i)
            if (cp.sigma_transverse(i) < settings.sigma_threshold_rel * tb.sigma_ref) ++cp.m;
        if (cp.m == 0) cp.m = 1;  // the block is singular at a refined root by construction
        cp.monitor_value = monitor_value(geom, probe.z(), probe.jacobian(), W).det;
        return cp;
    };

    auto bisect_root = [&](const FlowStepper& at_lo, double lo, double hi,
                           double f_lo) -> ConjugatePoint {
        while (hi - lo > settings.t_tol) {
            const double mid = 0.5 * (lo + hi);
            if ((f_lo < 0) == (eval_at(at_lo, mid).det < 0))
                lo = mid;
            else
                hi = mid;
        }
        return finish(at_lo, 0.5 * (lo + hi));
    };

    auto golden_min = [&](const FlowStepper& at_lo, double span) {
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double a = 0.0, b = span;
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        double f1 = eval_at(at_lo, x1).sigma_min, f2 = eval_at(at_lo, x2).sigma_min;
        while (b - a > settings.t_tol) {
            if (f1 < f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - gr * (b - a);
                f1 = eval_at(at_lo, x1).sigma_min;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + gr * (b - a);
                f2 = eval_at(at_lo, x2).sigma_min;
            }
        }
        return std::pair<double, double>(0.5 * (a + b), std::min(f1, f2));
    };

    // Ring buffer of the two previous monitored states for dip refinement.
    FlowStepper prev2 = stepper, prev1 = stepper;
    double d_prev2 = 0.0, d_prev1 = 0.0, s_prev2 = 0.0, s_prev1 = 0.0;
    double sigma_max_seen = 0.0;
    int have = 0;

    while (stepper.t() < t_max - 1e-14) {
        const double dt = std::min(h, t_max - stepper.t());
        stepper.step(dt);
        const MonitorValue mv = monitor_value(geom, stepper.z(), stepper.jacobian(), W);
        sigma_max_seen = std::max(sigma_max_seen, mv.sigma_min);

        if (have >= 1 && (d_prev1 < 0) != (mv.det < 0))
            return bisect_root(prev1, 0.0, dt, d_prev1);

        if (have >= 2 && s_prev1 < s_prev2 && s_prev1 < mv.sigma_min &&
            s_prev1 < settings.dip_ratio * sigma_max_seen) {
            // Tangential zero or a sub-step pair of sign changes near the dip.
            const double span = stepper.t() - prev2.t();
            auto [tau, sigma_low] = golden_min(prev2, span);
            const double d_mid = eval_at(prev2, tau).det;
            if ((d_prev2 < 0) != (d_mid < 0)) {
                double lo = 0.0, hi = tau;
                while (hi - lo > settings.t_tol) {
                    const double mid = 0.5 * (lo + hi);
                    if ((d_prev2 < 0) == (eval_at(prev2, mid).det < 0))
                        lo = mid;
                    else
                        hi = mid;
                }
                return finish(prev2, 0.5 * (lo + hi));
            }
            if ((d_mid < 0) != (mv.det < 0)) {
                double lo = tau, hi = span;
                while (hi - lo > settings.t_tol) {
                    const double mid = 0.5 * (lo + hi);
                    if ((d_mid < 0) == (eval_at(prev2, mid).det < 0))
                        lo = mid;
                    else
                        hi = mid;
                }
                return finish(prev2, 0.5 * (lo + hi));
            }
            if (sigma_low < 1e-6 * std::max(sigma_max_seen, 1e-300)) return finish(prev2, tau);
        }

        prev2 = prev1;
        d_prev2 = d_prev1;
        s_prev2 = s_prev1;
        prev1 = stepper;
        d_prev1 = mv.det;
        s_prev1 = mv.sigma_min;
        have = std::min(have + 1, 2);
    }
    return std::nullopt;
}

std::unique_ptr<ResidualMap> conjugate_point_problem(const HamiltonianModel& model,
                                                     const Vec& base, const Vec& direction,
                                                     double t_star, const Vec& endpoint,
                                                     const IntegratorSpec& spec, Vec& u_star) {
    const RayGeometry geom = RayGeometry::make(model, base);
    const Vec dir = direction.normalized();
    const PhasePoint z0 = geom.initial_state(dir);
    if (geom.constrained) {
        u_star = geom.tangent.transpose() * (t_star * z0.y);
        const Vec target = project_to_constraint(*model.constraint, endpoint);
        return std::make_unique<ConstrainedDirichletMap>(model, spec, geom.base, target);
    }
    u_star = t_star * z0.y;
    return std::make_unique<PlaneResidualMap>(dirichlet(geom.base, endpoint), model, spec);
}

// ---------------------------------------------------------------------------
// One-parameter cusp refinement, shared by the surface tracer and the 3d
// ridge census. The family alpha -> direction(alpha) crosses a cusp where the
// leading reduced derivative c2 changes sign; frames are held fixed across
// the family so c2 is sign-stable.
// ---------------------------------------------------------------------------

namespace {

struct CuspFamilyProbe {
    const HamiltonianModel* model;
    Vec base;
    std::function<Vec(double)> direction;
    double t_max;
    IntegratorSpec spec;
    ConjugateSettings conjugate;
    ClassifySettings classify_settings;

    Vec v_fix, w_fix;
    bool frames_set = false;

    struct Eval {
        bool ok = false;
        double c2 = 0.0;
        double t_star = 0.0;
        Vec endpoint;
    };

    Eval eval(double alpha) {
        Eval out;
        const Vec dir = direction(alpha);
        const auto cp = first_conjugate_time(*model, base, dir, t_max, spec, conjugate);
        if (!cp) return out;
        Vec u_star;
        const auto map =
            conjugate_point_problem(*model, base, dir, cp->t_star, cp->endpoint, spec, u_star);
        auto [r, Dr] = map->residual_and_jacobian(u_star);
        const DegeneracyResult deg = degeneracy(Dr, 1e-3);
        if (deg.m < 1) return out;
        Vec v = deg.kernel.col(deg.kernel.cols() - 1);
        Vec w = deg.cokernel.col(deg.cokernel.cols() - 1);
        if (!frames_set) {
            v_fix = v;
            w_fix = w;
            frames_set = true;
        } else {
            if (v.dot(v_fix) < 0) v = -v;
            if (w.dot(w_fix) < 0) w = -w;
        }
        const double delta = classify_settings.fd_ladder[0];
        const int n = map->dim();
        const Mat Z = orthonormal_complement(v);
        const Mat Wp = orthonormal_complement(w);
        auto branch = [&](double s) {
            Vec q = Vec::Zero(n - 1);
            Vec res = map->residual(u_star + s * v);
            for (int it = 0; it < classify_settings.branch_max_iter && n > 1; ++it) {
                const Vec u = u_star + s * v + Z * q;
                auto [rr, jj] = map->residual_and_jacobian(u);
                res = rr;
                const Vec F = Wp.transpose() * rr;
                if (F.cwiseAbs().maxCoeff() <= classify_settings.branch_tol * (1.0 + std::abs(s)))
                    break;
                q -= (Wp.transpose() * jj * Z).partialPivLu().solve(F);
            }
            return w.dot(res);
        };
        const double c0 = branch(0.0);
        const double cp_ = branch(delta);
        const double cm_ = branch(-delta);
        out.c2 = (cp_ - 2.0 * c0 + cm_) / (delta * delta);
        out.ok = true;
        out.t_star = cp->t_star;
        out.endpoint = cp->endpoint;
        return out;
    }
};

struct CuspRefineResult {
    bool found = false;
    bool confirmed = false;  // classified A3
    double alpha = 0.0;
    double t_star = 0.0;
    Vec endpoint;
    SingularityReport report;
};

CuspRefineResult refine_cusp(CuspFamilyProbe& probe, double a_lo, double a_hi) {
    CuspRefineResult result;
    probe.frames_set = false;
    CuspFamilyProbe::Eval e_lo = probe.eval(a_lo);
    CuspFamilyProbe::Eval e_hi = probe.eval(a_hi);
    if (!e_lo.ok || !e_hi.ok) return result;

    double a = a_lo, b = a_hi, fa = e_lo.c2, fb = e_hi.c2;
    CuspFamilyProbe::Eval best = std::abs(fa) < std::abs(fb) ? e_lo : e_hi;
    double alpha_best = std::abs(fa) < std::abs(fb) ? a : b;
    if (fa * fb < 0) {
        for (int it = 0; it < 48 && b - a > 1e-11; ++it) {
            const double mid = 0.5 * (a + b);
            CuspFamilyProbe::Eval em = probe.eval(mid);
            if (!em.ok) break;
            if (std::abs(em.c2) < std::abs(best.c2)) {
                best = em;
                alpha_best = mid;
            }
            if ((fa < 0) == (em.c2 < 0)) {
                a = mid;
                fa = em.c2;
            } else {
                b = mid;
                fb = em.c2;
            }
        }
    } else {
        // No sign change: golden-section on |c2| (shallow fold tangency).
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        CuspFamilyProbe::Eval f1 = probe.eval(x1), f2 = probe.eval(x2);
        for (int it = 0; it < 40 && (b - a) > 1e-9 && f1.ok && f2.ok; ++it) {
            if (std::abs(f1.c2) < std::abs(f2.c2)) {
                if (std::abs(f1.c2) < std::abs(best.c2)) {
                    best = f1;
                    alpha_best = x1;
                }
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - gr * (b - a);
                f1 = probe.eval(x1);
            } else {
                if (std::abs(f2.c2) < std::abs(best.c2)) {
                    best = f2;
                    alpha_best = x2;
                }
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + gr * (b - a);
                f2 = probe.eval(x2);
            }
        }
    }

    Vec u_star;
    const auto map = conjugate_point_problem(*probe.model, probe.base, probe.direction(alpha_best),
                                             best.t_star, best.endpoint, probe.spec, u_star);
    result.report = classify(*map, u_star, probe.classify_settings);
    result.found = true;
    result.confirmed = result.report.type == SingularityType::A3;
    result.alpha = alpha_best;
    result.t_star = best.t_star;
    result.endpoint = best.endpoint;
    return result;
}

Vec angle_direction(double s) {
    Vec d(2);
    d << std::cos(s), std::sin(s);
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// Surface locus (n = 2)
// ---------------------------------------------------------------------------

LocusCurve trace_locus(const HamiltonianModel& model, const Vec& base, int grid, double t_max,
                       const IntegratorSpec& spec, const LocusSettings& settings) {
    if (grid < 8) throw InvalidInputError("trace_locus: grid must be at least 8");
    const RayGeometry geom = RayGeometry::make(model, base);
    if (geom.n != 2) throw InvalidInputError("trace_locus: model must have 2 manifold dimensions");

    struct Ray {
        double s = 0.0;
        std::optional<ConjugatePoint> cp;
    };
    std::vector<double> angles(grid);
    for (int i = 0; i < grid; ++i) angles[i] = 2.0 * M_PI * i / grid;

    auto run_rays = [&](const std::vector<double>& ss) {
        std::vector<Ray> rays(ss.size());
        parallel_for(static_cast<int>(ss.size()), settings.workers, [&](int i) {
            rays[i].s = ss[i];
            rays[i].cp = first_conjugate_time(model, geom.base, angle_direction(ss[i]), t_max,
                                              spec, settings.conjugate);
        });
        return rays;
    };

    std::vector<Ray> rays = run_rays(angles);

    for (int level = 0; level < settings.max_refine_levels; ++level) {
        std::vector<double> gaps;
        for (std::size_t i = 0; i + 1 < rays.size(); ++i)
            if (rays[i].cp && rays[i + 1].cp)
                gaps.push_back((rays[i].cp->endpoint - rays[i + 1].cp->endpoint).norm());
        if (gaps.size() < 4) break;
        std::vector<double> sorted = gaps;
        std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
        const double median = sorted[sorted.size() / 2];
        std::vector<double> extra;
        for (std::size_t i = 0; i + 1 < rays.size(); ++i)
            if (rays[i].cp && rays[i + 1].cp &&
                (rays[i].cp->endpoint - rays[i + 1].cp->endpoint).norm() >
                    settings.refine_factor * median)
                extra.push_back(0.5 * (rays[i].s + rays[i + 1].s));
        if (extra.empty()) break;
        std::vector<Ray> added = run_rays(extra);
        rays.insert(rays.end(), added.begin(), added.end());
        std::sort(rays.begin(), rays.end(), [](const Ray& a, const Ray& b) { return a.s < b.s; });
    }

    LocusCurve curve;
    for (const auto& ray : rays) {
        if (!ray.cp) {
            ++curve.rays_without_conjugate;
            continue;
        }
        LocusPoint p;
        p.s = ray.s;
        p.t_star = ray.cp->t_star;
        p.endpoint = ray.cp->endpoint;
        p.m = ray.cp->m;
        curve.points.push_back(std::move(p));
    }
    if (curve.points.empty()) return curve;

    double spread = 0.0;
    for (const auto& p : curve.points)
        spread = std::max(spread, (p.endpoint - curve.points.front().endpoint).norm());
    if (spread <= settings.point_locus_tol) {
        curve.point_locus = true;
        return curve;
    }

    // Cusp candidates: endpoint speed |dX/ds| dips below cusp_tol * median.
    const bool closed = curve.rays_without_conjugate == 0;
    const std::size_t np = curve.points.size();
    const std::size_t nseg = closed ? np : np - 1;
    if (nseg < 4) return curve;
    std::vector<double> speed(nseg);
    for (std::size_t i = 0; i < nseg; ++i) {
        const auto& a = curve.points[i];
        const auto& b = curve.points[(i + 1) % np];
        double ds = b.s - a.s;
        if (ds <= 0) ds += 2.0 * M_PI;
        speed[i] = (b.endpoint - a.endpoint).norm() / ds;
    }
    std::vector<double> sorted = speed;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median_speed = sorted[sorted.size() / 2];

    std::vector<bool> flagged(nseg);
    for (std::size_t i = 0; i < nseg; ++i)
        flagged[i] = speed[i] < settings.cusp_tol * median_speed;

    std::vector<std::pair<double, double>> windows;
    for (std::size_t i = 0; i < nseg; ++i) {
        if (!flagged[i]) continue;
        if (i > 0 && flagged[i - 1]) continue;
        if (closed && i == 0 && flagged[nseg - 1]) continue;  // window wraps; handled at its start
        std::size_t j = i;
        while (flagged[(j + 1) % nseg] && (j + 1 - i) < nseg) ++j;
        const std::size_t lo = i == 0 && !closed ? i : i - 1 + (i == 0 ? nseg : 0);
        const std::size_t hi = std::min(j + 2, closed ? j + 2 : np - 1);
        double s_lo = curve.points[lo % np].s;
        double s_hi = curve.points[hi % np].s;
        if (s_hi <= s_lo) s_hi += 2.0 * M_PI;
        windows.emplace_back(s_lo, s_hi);
    }

    CuspFamilyProbe probe{&model,       geom.base, angle_direction, t_max,
                          spec,         settings.conjugate,         settings.classify,
                          Vec(),        Vec(),     false};
    for (auto [s_lo, s_hi] : windows) {
        const CuspRefineResult res = refine_cusp(probe, s_lo, s_hi);
        if (!res.found) {
            ++curve.unresolved_cusp_candidates;
            continue;
        }
        LocusPoint p;
        p.s = std::fmod(res.alpha + 2.0 * M_PI, 2.0 * M_PI);
        p.t_star = res.t_star;
        p.endpoint = res.endpoint;
        p.m = res.report.m;
        p.cusp = res.confirmed;
        p.cusp_unresolved = !res.confirmed;
        if (!res.confirmed) ++curve.unresolved_cusp_candidates;
        auto it = std::lower_bound(
            curve.points.begin(), curve.points.end(), p,
            [](const LocusPoint& x, const LocusPoint& y) { return x.s < y.s; });
        curve.points.insert(it, p);
    }
    for (std::size_t i = 0; i < curve.points.size(); ++i)
        if (curve.points[i].cusp) curve.cusp_indices.push_back(static_cast<int>(i));
    return curve;
}

// ---------------------------------------------------------------------------
// 3-manifold locus sampling (n = 3)
// ---------------------------------------------------------------------------

namespace {

Vec sphere_direction(double theta, double phi) {
    Vec d(3);
    d << std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta);
    return d;
}

}  // namespace

Locus3DResult trace_locus_3d(const HamiltonianModel& model, const Vec& base, int n_theta,
                             int n_phi, double t_max, const IntegratorSpec& spec,
                             const Locus3DSettings& settings) {
    const RayGeometry geom = RayGeometry::make(model, base);
    if (geom.n != 3)
        throw InvalidInputError("trace_locus_3d: model must have 3 manifold dimensions");

    Locus3DResult result;
    result.n_theta = n_theta;
    result.n_phi = n_phi;
    result.samples.resize(static_cast<std::size_t>(n_theta) * n_phi);

    auto sample_ray = [&](double theta, double phi) -> std::optional<Locus3DSample> {
        const auto cp = first_conjugate_time(model, geom.base, sphere_direction(theta, phi), t_max,
                                             spec, settings.conjugate);
        if (!cp) return std::nullopt;
        Locus3DSample s;
        s.theta = theta;
        s.phi = phi;
        s.t_star = cp->t_star;
        s.endpoint = cp->endpoint;
        s.m = cp->m;
        s.sigma_second = cp->sigma_transverse(0);
        return s;
    };

    parallel_for(n_theta * n_phi, settings.workers, [&](int idx) {
        const int i = idx / n_phi, j = idx % n_phi;
        const double theta = M_PI * (i + 0.5) / n_theta;
        const double phi = 2.0 * M_PI * j / n_phi;
        auto s = sample_ray(theta, phi);
        if (s) {
            result.samples[idx] = *s;
        } else {
            result.samples[idx].theta = theta;
            result.samples[idx].phi = phi;
            result.samples[idx].t_star = -1.0;  // no conjugate point up to t_max
        }
    });
    for (const auto& s : result.samples)
        if (s.t_star < 0) ++result.rays_without_conjugate;

    // Umbilic candidates: grid-local minima of the second transverse sigma.
    struct Cand {
        int i, j;
        double sigma;
    };
    std::vector<Cand> cands;
    auto at = [&](int i, int j) -> const Locus3DSample& {
        return result.samples[static_cast<std::size_t>(i) * n_phi + ((j % n_phi) + n_phi) % n_phi];
    };
    for (int i = 0; i < n_theta; ++i)
        for (int j = 0; j < n_phi; ++j) {
            const auto& s = at(i, j);
            if (s.t_star < 0 || s.sigma_second > settings.umbilic_sigma_threshold) continue;
            bool is_min = true;
            for (int di = -1; di <= 1 && is_min; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    const int ii = i + di;
                    if (ii < 0 || ii >= n_theta) continue;
                    const auto& nb = at(ii, j + dj);
                    if (nb.t_star >= 0 && nb.sigma_second < s.sigma_second) {
                        is_min = false;
                        break;
                    }
                }
            if (is_min) cands.push_back({i, j, s.sigma_second});
        }
    std::sort(cands.begin(), cands.end(),
              [](const Cand& a, const Cand& b) { return a.sigma < b.sigma; });

    auto sigma_at = [&](double theta, double phi) {
        auto s = sample_ray(theta, phi);
        return s ? s->sigma_second : 1e9;
    };

    std::vector<Vec> used_dirs;
    for (const auto& cand : cands) {
        if (static_cast<int>(result.umbilics.size()) >= settings.max_candidates) break;
        double theta = M_PI * (cand.i + 0.5) / n_theta;
        double phi = 2.0 * M_PI * cand.j / n_phi;
        bool taken = false;
        for (const auto& d : used_dirs)
            if ((sphere_direction(theta, phi) - d).norm() < 2.0 * settings.ridge_circle_radius)
                taken = true;
        if (taken) continue;

        // Nelder-Mead refinement of the direction minimizing sigma_second.
        std::array<Eigen::Vector2d, 3> splx = {Eigen::Vector2d(theta, phi),
                                               Eigen::Vector2d(theta + M_PI / n_theta, phi),
                                               Eigen::Vector2d(theta, phi + M_PI / n_theta)};
        std::array<double, 3> fv;
        for (int k = 0; k < 3; ++k) fv[k] = sigma_at(splx[k](0), splx[k](1));
        for (int it = 0; it < 70; ++it) {
            std::array<int, 3> ord = {0, 1, 2};
            std::sort(ord.begin(), ord.end(), [&](int a, int b) { return fv[a] < fv[b]; });
            if ((splx[ord[0]] - splx[ord[2]]).norm() < 1e-7) break;
            const Eigen::Vector2d centroid = 0.5 * (splx[ord[0]] + splx[ord[1]]);
            const Eigen::Vector2d refl = 2.0 * centroid - splx[ord[2]];
            const double f_refl = sigma_at(refl(0), refl(1));
            if (f_refl < fv[ord[0]]) {
                const Eigen::Vector2d ext = centroid + 2.0 * (refl - centroid);
                const double f_ext = sigma_at(ext(0), ext(1));
                if (f_ext < f_refl) {
                    splx[ord[2]] = ext;
                    fv[ord[2]] = f_ext;
                } else {
                    splx[ord[2]] = refl;
                    fv[ord[2]] = f_refl;
                }
            } else if (f_refl < fv[ord[1]]) {
                splx[ord[2]] = refl;
                fv[ord[2]] = f_refl;
            } else {
                const Eigen::Vector2d contr = 0.5 * (centroid + splx[ord[2]]);
                const double f_contr = sigma_at(contr(0), contr(1));
                if (f_contr < fv[ord[2]]) {
                    splx[ord[2]] = contr;
                    fv[ord[2]] = f_contr;
                } else {
                    for (int k = 1; k < 3; ++k) {
                        splx[ord[k]] = 0.5 * (splx[ord[k]] + splx[ord[0]]);
                        fv[ord[k]] = sigma_at(splx[ord[k]](0), splx[ord[k]](1));
                    }
                }
            }
        }
        int best = 0;
        for (int k = 1; k < 3; ++k)
            if (fv[k] < fv[best]) best = k;
        theta = splx[best](0);
        phi = splx[best](1);
        const auto refined = sample_ray(theta, phi);
        if (!refined) continue;

        UmbilicCandidate umb;
        umb.theta = theta;
        umb.phi = phi;
        umb.t_star = refined->t_star;
        umb.endpoint = refined->endpoint;
        umb.sigma_second = refined->sigma_second;

        Vec u_star;
        const auto map = conjugate_point_problem(model, geom.base, sphere_direction(theta, phi),
                                                 refined->t_star, refined->endpoint, spec, u_star);
        ClassifySettings cls = settings.classify;
        cls.sigma_threshold_rel = settings.umbilic_classify_threshold;
        umb.report = classify(*map, u_star, cls);

        // Cusp-ridge census on a circle of directions around the candidate.
        const Vec d0 = sphere_direction(theta, phi);
        const Mat comp = orthonormal_complement(d0);
        const double rho = settings.ridge_circle_radius;
        const int K = settings.ridge_circle_samples;
        auto circle_dir = [&](double alpha, double radius) {
            const Vec offs = std::cos(alpha) * comp.col(0) + std::sin(alpha) * comp.col(1);
            return Vec((std::cos(radius) * d0 + std::sin(radius) * offs).normalized());
        };
        std::vector<double> rank_sigma(K, 1e9);
        parallel_for(K, settings.workers, [&](int k) {
            const double alpha = 2.0 * M_PI * k / K;
            const double eps = 1.5e-2;
            auto ep = [&](const Vec& d) -> std::optional<Vec> {
                const auto cpk =
                    first_conjugate_time(model, geom.base, d, t_max, spec, settings.conjugate);
                if (!cpk) return std::nullopt;
                return cpk->endpoint;
            };
            const auto x_rp = ep(circle_dir(alpha, rho + eps));
            const auto x_rm = ep(circle_dir(alpha, rho - eps));
            const auto x_ap = ep(circle_dir(alpha + eps, rho));
            const auto x_am = ep(circle_dir(alpha - eps, rho));
            if (!x_rp || !x_rm || !x_ap || !x_am) return;
            Mat DX(geom.amb, 2);
            DX.col(0) = (*x_rp - *x_rm) / (2 * eps);
            DX.col(1) = (*x_ap - *x_am) / (2 * eps * rho);
            Eigen::JacobiSVD<Mat> svd(DX);
            const double smax = svd.singularValues()(0);
            rank_sigma[k] = smax > 0 ? svd.singularValues()(1) / smax : 0.0;
        });

        // Dips of the rank indicator below half its median mark ridge crossings.
        std::vector<double> sorted = rank_sigma;
        std::sort(sorted.begin(), sorted.end());
        const double med = sorted[K / 2];
        for (int k = 0; k < K; ++k) {
            const double prev = rank_sigma[(k + K - 1) % K];
            const double next = rank_sigma[(k + 1) % K];
            if (rank_sigma[k] < 0.5 * med && rank_sigma[k] <= prev && rank_sigma[k] < next) {
                ++umb.ridge_dip_count;
                const double alpha = 2.0 * M_PI * k / K;
                const double width = 2.0 * M_PI / K;
                CuspFamilyProbe probe{&model,
                                      geom.base,
                                      [&](double a) { return circle_dir(a, rho); },
                                      t_max,
                                      spec,
                                      settings.conjugate,
                                      settings.classify,
                                      Vec(),
                                      Vec(),
                                      false};
                const CuspRefineResult res = refine_cusp(probe, alpha - width, alpha + width);
                if (res.found && res.confirmed) ++umb.ridge_count;
            }
        }

        result.umbilics.push_back(std::move(umb));
        used_dirs.push_back(d0);
    }
    return result;
}

}  // namespace conjatlas
