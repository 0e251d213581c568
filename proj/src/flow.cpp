#include "conjatlas/flow.hpp"

#include <Eigen/LU>
#include <atomic>
#include <cmath>
#include <vector>

namespace conjatlas {

namespace {
std::atomic<std::uint64_t> g_eval_count{0};
void count_eval(std::uint64_t k = 1) { g_eval_count.fetch_add(k, std::memory_order_relaxed); }
}  // namespace

std::uint64_t flow_eval_count() { return g_eval_count.load(std::memory_order_relaxed); }
void reset_flow_eval_count() { g_eval_count.store(0, std::memory_order_relaxed); }

FlowStepper::FlowStepper(const HamiltonianModel& model, const IntegratorSpec& spec, PhasePoint z0,
                         bool with_tangent)
    : model_(&model), spec_(spec), z_(std::move(z0)), with_tangent_(with_tangent) {
    const int n = model.dim;
    if (z_.dim() != n) throw InvalidInputError("flow: phase point dimension mismatch");
    J_ = Mat::Identity(2 * n, 2 * n);
    if (model.constraint) {
        if (spec_.scheme != Scheme::rattle)
            throw InvalidInputError("flow: constrained models require the rattle scheme");
        const auto& cs = *model.constraint;
        if (cs.value(z_.x).cwiseAbs().maxCoeff() > 1e-10)
            throw InvalidInputError("flow: initial point violates the constraint");
        if ((cs.jacobian(z_.x) * z_.y).cwiseAbs().maxCoeff() > 1e-10)
            throw InvalidInputError("flow: initial momentum violates the tangency constraint");
        // rattle assumes H(q, p) = |p|^2 / 2 + V(q)
        Vec gx(n), gy(n);
        model.gradient(z_.x, z_.y, gx, gy);
        if ((gy - z_.y).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + z_.y.cwiseAbs().maxCoeff()))
            throw InvalidInputError("rattle: model must have grad_p H = p (unit mass)");
    } else if (spec_.scheme == Scheme::rattle) {
        throw InvalidInputError("flow: rattle requires a constrained model");
    }
}

void FlowStepper::step(double h) {
    if (spec_.scheme == Scheme::rattle)
        step_rattle(h);
    else
        step_midpoint(h);
    t_ += h;
    ++step_index_;
}

void FlowStepper::step_midpoint(double h) {
    const int n = model_->dim;
    const Vec z0 = z_.to_vector();
    Vec gx(n), gy(n);

    auto field = [&](const Vec& z) {
        model_->gradient(z.head(n), z.tail(n), gx, gy);
        count_eval();
        Vec f(2 * n);
        f << gy, -gx;
        return f;
    };

    // Explicit Euler predictor.
    Vec z1 = z0 + h * field(z0);
    Vec F = z1 - z0 - h * field(0.5 * (z0 + z1));
    double fnorm = F.cwiseAbs().maxCoeff();
    const double tol = spec_.newton_tol * (1.0 + z0.cwiseAbs().maxCoeff());

    Eigen::PartialPivLU<Mat> lu;
    Mat M;
    bool converged = fnorm <= tol;
    for (int it = 0; it < spec_.newton_max_iter && !converged; ++it) {
        const Vec zm = 0.5 * (z0 + z1);
        const Mat S = model_->hessian(zm.head(n), zm.tail(n));
        count_eval(2);
        Mat df(2 * n, 2 * n);  // Omega * S
        df.topRows(n) = S.bottomRows(n);
        df.bottomRows(n) = -S.topRows(n);
        M = Mat::Identity(2 * n, 2 * n) - 0.5 * h * df;
        lu.compute(M);
        Vec dz = lu.solve(F);
        // Damped update: halve the step while the residual grows.
        double scale = 1.0;
        for (int d = 0; d < 8; ++d) {
            const Vec z_try = z1 - scale * dz;
            const Vec F_try = z_try - z0 - h * field(0.5 * (z0 + z_try));
            const double f_try = F_try.cwiseAbs().maxCoeff();
            if (f_try < fnorm || d == 7) {
                z1 = z_try;
                F = F_try;
                fnorm = f_try;
                break;
            }
            scale *= 0.5;
        }
        converged = fnorm <= tol;
    }
    if (!converged)
        throw IntegrationFailure("implicit midpoint: Newton did not converge", step_index_);

    if (with_tangent_) {
        // Exact Jacobian of the converged step map: the Cayley-type propagator
        // built from the Hessian at the final midpoint. Symplectic for any
        // symmetric S.
        const Vec zm = 0.5 * (z0 + z1);
        const Mat S = model_->hessian(zm.head(n), zm.tail(n));
        count_eval(2);
        Mat df(2 * n, 2 * n);
        df.topRows(n) = S.bottomRows(n);
        df.bottomRows(n) = -S.topRows(n);
        const Mat A = 0.5 * h * df;
        lu.compute(Mat::Identity(2 * n, 2 * n) - A);
        J_ = lu.solve((Mat::Identity(2 * n, 2 * n) + A) * J_);
    }
    z_ = PhasePoint::from_vector(z1);
}

void FlowStepper::step_rattle(double h) {
    const int m = model_->dim;
    const auto& cs = *model_->constraint;
    const int c = cs.codim;
    const Vec& q0 = z_.x;
    const Vec& p0 = z_.y;

    Vec v0(m), gy(m);
    model_->gradient(q0, p0, v0, gy);  // v0 = grad V(q0)
    count_eval();
    const Mat G0 = cs.jacobian(q0);
    count_eval();

    // Solve g(q0 + h p0 - h^2/2 (V'(q0) + G0^T lambda)) = 0 for lambda.
    Vec lambda = Vec::Zero(c);
    auto position = [&](const Vec& lam) {
        return Vec(q0 + h * (p0 - 0.5 * h * (v0 + G0.transpose() * lam)));
    };
    Vec q1 = position(lambda);
    Vec F = cs.value(q1);
    count_eval();
    double fnorm = F.cwiseAbs().maxCoeff();
    bool converged = fnorm <= spec_.newton_tol;
    for (int it = 0; it < spec_.newton_max_iter && !converged; ++it) {
        const Mat JF = -0.5 * h * h * (cs.jacobian(q1) * G0.transpose());
        count_eval();
        const Vec dl = JF.partialPivLu().solve(F);
        double scale = 1.0;
        for (int d = 0; d < 8; ++d) {
            const Vec lam_try = lambda - scale * dl;
            const Vec q_try = position(lam_try);
            const Vec F_try = cs.value(q_try);
            count_eval();
            const double f_try = F_try.cwiseAbs().maxCoeff();
            if (f_try < fnorm || d == 7) {
                lambda = lam_try;
                q1 = q_try;
                F = F_try;
                fnorm = f_try;
                break;
            }
            scale *= 0.5;
        }
        converged = fnorm <= spec_.newton_tol;
    }
    if (!converged) throw IntegrationFailure("rattle: position Newton did not converge", step_index_);

    const Vec p_half = p0 - 0.5 * h * (v0 + G0.transpose() * lambda);
    Vec v1(m);
    model_->gradient(q1, p_half, v1, gy);  // v1 = grad V(q1)
    count_eval();
    const Mat G1 = cs.jacobian(q1);
    count_eval();

    // Momentum projection: G1 p1 = 0 with p1 = p_half - h/2 (V'(q1) + G1^T mu).
    const Mat GGt = G1 * G1.transpose();
    Eigen::LLT<Mat> llt(GGt);
    const Vec mu = (2.0 / h) * llt.solve(G1 * p_half - 0.5 * h * (G1 * v1));
    const Vec p1 = p_half - 0.5 * h * (v1 + G1.transpose() * mu);

    if (with_tangent_) {
        // Differentiate the converged step map, including the implicit
        // dependence of lambda and mu on (q0, p0).
        const Mat H0 = model_->hessian(q0, p0);
        const Mat H1 = model_->hessian(q1, p1);
        count_eval(4);
        const Mat K0 = H0.topLeftCorner(m, m) + cs.weighted_hessian(q0, lambda);
        const Mat K1 = H1.topLeftCorner(m, m) + cs.weighted_hessian(q1, mu);
        count_eval(2);
        const Mat C1 = cs.hessian_action(q1, p1);  // rows p1^T Hess(g_k)(q1)
        count_eval(static_cast<std::uint64_t>(c));

        Mat Jq = J_.topRows(m);
        Mat Jp = J_.bottomRows(m);

        const Mat A_lam = (0.5 * h * h) * (G1 * G0.transpose());
        const Mat rhs_lam = G1 * ((Mat::Identity(m, m) - 0.5 * h * h * K0) * Jq + h * Jp);
        const Mat d_lambda = A_lam.partialPivLu().solve(rhs_lam);

        const Mat Jph = Jp - 0.5 * h * (K0 * Jq + G0.transpose() * d_lambda);
        const Mat Jq1 = Jq + h * Jph;
        const Mat rhs_mu = C1 * Jq1 + G1 * Jph - 0.5 * h * (G1 * (K1 * Jq1));
        const Mat d_mu = (2.0 / h) * llt.solve(rhs_mu);
        const Mat Jp1 = Jph - 0.5 * h * (K1 * Jq1 + G1.transpose() * d_mu);

        J_.topRows(m) = Jq1;
        J_.bottomRows(m) = Jp1;
    }
    z_.x = q1;
    z_.y = p1;
}

namespace {

long step_count(double t, double h) {
    const long n = std::lround(std::abs(t) / h);
    return n > 0 ? n : 1;
}

}  // namespace

PhasePoint flow(const HamiltonianModel& model, const PhasePoint& z0, double t,
                const IntegratorSpec& spec) {
    if (t == 0.0) return z0;
    if (spec.scheme == Scheme::reference_rk) return flow_reference(model, z0, t, spec.rk_tol);
    FlowStepper stepper(model, spec, z0, false);
    const long n = step_count(t, spec.step);
    const double h = t / static_cast<double>(n);
    for (long i = 0; i < n; ++i) stepper.step(h);
    return stepper.z();
}

TangentFlowState flow_with_tangent(const HamiltonianModel& model, const PhasePoint& z0, double t,
                                   const IntegratorSpec& spec) {
    if (spec.scheme == Scheme::reference_rk)
        return flow_reference_tangent(model, z0, t, spec.rk_tol);
    FlowStepper stepper(model, spec, z0, true);
    if (t != 0.0) {
        const long n = step_count(t, spec.step);
        const double h = t / static_cast<double>(n);
        for (long i = 0; i < n; ++i) stepper.step(h);
    }
    return TangentFlowState{stepper.z(), stepper.jacobian(), stepper.t()};
}

double rescaling_residual(const HamiltonianModel& model, const PhasePoint& z0, double theta,
                          double t, const IntegratorSpec& spec) {
    if (!model.homogeneity_degree)
        throw InvalidInputError("rescaling_residual: model has no homogeneity degree");
    if (theta <= 0.0) throw InvalidInputError("rescaling_residual: theta must be positive");
    const double p = *model.homogeneity_degree;

    const PhasePoint a = flow(model, z0, std::pow(theta, p - 1.0) * t, spec);
    const PhasePoint lhs(a.x, theta * a.y);
    const PhasePoint b = flow(model, PhasePoint(z0.x, theta * z0.y), t, spec);
    return std::sqrt((lhs.x - b.x).squaredNorm() + (lhs.y - b.y).squaredNorm());
}

// ---------------------------------------------------------------------------
// Reference integrator: Dormand-Prince 5(4), adaptive step.
// ---------------------------------------------------------------------------

Vec reference_rhs(const HamiltonianModel& model, const Vec& z) {
    const int m = model.dim;
    Vec gx(m), gy(m);
    model.gradient(z.head(m), z.tail(m), gx, gy);
    count_eval();
    Vec f(2 * m);
    if (!model.constraint) {
        f << gy, -gx;
        return f;
    }
    // Ambient ODE with the constraint force eliminated through the hidden
    // constraint d/dt(G p) = 0 (assumes grad_p H = p).
    const auto& cs = *model.constraint;
    const Vec q = z.head(m), p = z.tail(m);
    const Mat G = cs.jacobian(q);
    const Mat C = cs.hessian_action(q, p);
    count_eval(1 + static_cast<std::uint64_t>(cs.codim));
    const Vec lambda = (G * G.transpose()).llt().solve(C * p - G * gx);
    f.head(m) = p;
    f.tail(m) = -gx - G.transpose() * lambda;
    return f;
}

namespace {

// Dormand-Prince coefficients.
const double DP_C[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
const double DP_A[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
const double DP_B5[7] = {35.0 / 384,      0.0,  500.0 / 1113, 125.0 / 192,
                         -2187.0 / 6784, 11.0 / 84, 0.0};
const double DP_B4[7] = {5179.0 / 57600,  0.0,        7571.0 / 16695, 393.0 / 640,
                         -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

template <typename Rhs>
Vec dp54_integrate(Rhs&& rhs, Vec z, double t_end, double tol) {
    double t = 0.0;
    const double dir = t_end >= 0.0 ? 1.0 : -1.0;
    double h = dir * std::min(1e-2, std::abs(t_end));
    const int dim = static_cast<int>(z.size());
    std::vector<Vec> k(7);
    long rejected_in_row = 0;
    while (dir * (t_end - t) > 1e-15 * std::abs(t_end)) {
        if (dir * (t + h) > dir * t_end) h = t_end - t;
        k[0] = rhs(z);
        for (int s = 1; s < 7; ++s) {
            Vec zs = z;
            for (int j = 0; j < s; ++j) zs += h * DP_A[s][j] * k[j];
            k[s] = rhs(zs);
        }
        Vec z5 = z, err = Vec::Zero(dim);
        for (int s = 0; s < 7; ++s) {
            z5 += h * DP_B5[s] * k[s];
            err += h * (DP_B5[s] - DP_B4[s]) * k[s];
        }
        double err_norm = 0.0;
        for (int i = 0; i < dim; ++i) {
            const double sc = tol + tol * std::max(std::abs(z(i)), std::abs(z5(i)));
            err_norm += (err(i) / sc) * (err(i) / sc);
        }
        err_norm = std::sqrt(err_norm / dim);
        if (err_norm <= 1.0) {
            t += h;
            z = z5;
            rejected_in_row = 0;
        } else if (++rejected_in_row > 60) {
            throw IntegrationFailure("reference integrator: step size underflow", 0);
        }
        const double factor =
            std::clamp(0.9 * std::pow(std::max(err_norm, 1e-10), -0.2), 0.2, 5.0);
        h *= factor;
        if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t_end)))
            throw IntegrationFailure("reference integrator: step size underflow", 0);
    }
    return z;
}

}  // namespace

PhasePoint flow_reference(const HamiltonianModel& model, const PhasePoint& z0, double t,
                          double tol) {
    if (t == 0.0) return z0;
    auto rhs = [&](const Vec& z) { return reference_rhs(model, z); };
    const Vec z = dp54_integrate(rhs, z0.to_vector(), t, tol);
    return PhasePoint::from_vector(z);
}

TangentFlowState flow_reference_tangent(const HamiltonianModel& model, const PhasePoint& z0,
                                        double t, double tol) {
    const int d = 2 * model.dim;
    if (t == 0.0) return TangentFlowState{z0, Mat::Identity(d, d), 0.0};

    // State = (z, vec(J)); dJ/dt = DF(z) J with DF by central differences.
    auto rhs = [&](const Vec& state) {
        const Vec z = state.head(d);
        Vec out(d + d * d);
        out.head(d) = reference_rhs(model, z);
        Mat df(d, d);
        for (int j = 0; j < d; ++j) {
            const double h = 1e-7 * (1.0 + std::abs(z(j)));
            Vec zp = z, zm = z;
            zp(j) += h;
            zm(j) -= h;
            df.col(j) = (reference_rhs(model, zp) - reference_rhs(model, zm)) / (2 * h);
        }
        Eigen::Map<const Mat> J(state.data() + d, d, d);
        Eigen::Map<Mat>(out.data() + d, d, d) = df * J;
        return out;
    };

    Vec state(d + d * d);
    state.head(d) = z0.to_vector();
    Eigen::Map<Mat>(state.data() + d, d, d) = Mat::Identity(d, d);
    state = dp54_integrate(rhs, state, t, tol);

    TangentFlowState result;
    result.z = PhasePoint::from_vector(state.head(d));
    result.J = Eigen::Map<const Mat>(state.data() + d, d, d);
    result.t = t;
    return result;
}

}  // namespace conjatlas
