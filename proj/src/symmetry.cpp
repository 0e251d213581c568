#include "conjatlas/symmetry.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace conjatlas {

PhasePoint ScalingAction::apply(const Vec& lambdas, const PhasePoint& z) const {
    if (lambdas.size() != generators())
        throw InvalidInputError("scaling action: wrong number of group parameters");
    const int n = dim();
    Vec x = z.x, y = z.y;
    for (int s = 0; s < generators(); ++s) {
        if (lambdas(s) <= 0.0) throw InvalidInputError("scaling action: lambda must be positive");
        for (int j = 0; j < n; ++j) {
            x(j) *= std::pow(lambdas(s), exponents(s, j));
            y(j) *= std::pow(lambdas(s), c - exponents(s, j));
        }
    }
    return PhasePoint(std::move(x), std::move(y));
}

double ScalingAction::theta(const Vec& lambdas) const {
    double th = 1.0;
    for (int s = 0; s < generators(); ++s) th *= std::pow(lambdas(s), c);
    return th;
}

double ScalingAction::eta(const Vec& lambdas) const {
    double e = 1.0;
    for (int s = 0; s < generators(); ++s) e *= std::pow(lambdas(s), p);
    return e;
}

Vec ScalingAction::fundamental_vector(int s, const PhasePoint& z) const {
    const int n = dim();
    Vec v(2 * n);
    for (int j = 0; j < n; ++j) {
        v(j) = exponents(s, j) * z.x(j);
        v(n + j) = (c - exponents(s, j)) * z.y(j);
    }
    return v;
}

void ScalingAction::validate() const {
    const int k = generators();
    if (k < 1 || k > dim())
        throw InvalidInputError("scaling action: need 1 <= k <= n generator rows");
    Eigen::JacobiSVD<Mat> svd(exponents);
    const Vec sv = svd.singularValues();
    if (sv(0) <= 0.0 || sv(k - 1) < 1e-12 * sv(0))
        throw InvalidInputError("scaling action: exponent rows are linearly dependent");
}

double verify_invariance(const ScalingAction& action, const HamiltonianModel& model,
                         const std::vector<PhasePoint>& samples) {
    static const double lambdas[] = {0.5, 0.9, 1.1, 2.0};
    double worst = 0.0;
    for (const auto& z : samples) {
        const double h0 = model.energy_at(z);
        for (int s = 0; s < action.generators(); ++s) {
            for (double l : lambdas) {
                Vec lam = Vec::Ones(action.generators());
                lam(s) = l;
                const double h1 = model.energy_at(action.apply(lam, z));
                const double scaled = std::pow(l, action.p) * h0;
                worst = std::max(worst, std::abs(h1 - scaled) / (1.0 + std::abs(h0)));
            }
        }
    }
    return worst;
}

double verify_rescaling_lemma(const ScalingAction& action, const HamiltonianModel& model,
                              const IntegratorSpec& spec, const std::vector<PhasePoint>& samples,
                              const Vec& lambdas, double t) {
    const double factor = action.eta(lambdas) / action.theta(lambdas);  // prod l^{p-c}
    double worst = 0.0;
    for (const auto& z : samples) {
        const PhasePoint a = flow(model, z, factor * t, spec);
        const PhasePoint lhs = action.apply(lambdas, a);
        const PhasePoint rhs = flow(model, action.apply(lambdas, z), t, spec);
        const double res =
            std::sqrt((lhs.x - rhs.x).squaredNorm() + (lhs.y - rhs.y).squaredNorm());
        worst = std::max(worst, res);
    }
    return worst;
}

ScalingAction compose_actions(const ScalingAction& conformal, const ScalingAction& symplectic) {
    if (symplectic.c != 0.0)
        throw InvalidInputError("compose_actions: symplectic factor must have c = 0");
    if (conformal.generators() != symplectic.generators() || conformal.dim() != symplectic.dim())
        throw InvalidInputError("compose_actions: incompatible exponent rows");
    ScalingAction composed;
    composed.exponents = conformal.exponents + symplectic.exponents;
    composed.c = conformal.c;
    composed.p = conformal.p;
    composed.validate();
    return composed;
}

ObstructionCheckReport check_obstruction(const ScalingAction& action,
                                         const PlaneResidualMap& problem,
                                         const std::vector<SolutionPoint>& solutions,
                                         const ObstructionSettings& settings) {
    action.validate();
    const int n = action.dim();
    const int k = action.generators();
    if (problem.dim() != n)
        throw InvalidInputError("check_obstruction: action/problem dimension mismatch");

    ObstructionCheckReport report;
    report.n = n;
    report.k = k;
    report.bound = n - k;
    report.tangency_threshold = settings.tangency_threshold;
    report.transversality_threshold = settings.transversality_threshold;

    const Mat& T = problem.near_frame().frame;  // 2n x n, orthonormal
    const auto& far = problem.boundary().far;
    Mat AB(n, 2 * n);
    AB << far.A, far.B;
    const HamiltonianModel& model = problem.model();
    const bool nonstat = action.nonstationary();

    for (const auto& sol : solutions) {
        if (!sol.converged) continue;
        ObstructionSample sample;
        sample.u = sol.u;

        auto [r, Dr] = problem.residual_and_jacobian(sol.u);
        const DegeneracyResult deg = degeneracy(Dr, settings.sigma_threshold_rel);
        sample.m = deg.m;

        const PhasePoint z = problem.start_point(sol.u);
        const TangentFlowState state = flow_with_tangent(model, z, problem.time(), problem.spec());
        const PhasePoint& z_end = state.z;

        const Vec xh = model.vector_field(z_end);
        const double xh_norm = xh.norm();
        sample.transversality_component = xh_norm > 0 ? (AB * xh).norm() / xh_norm : 0.0;

        double worst_tangency = 0.0;
        double worst_identity = 0.0;
        double worst_lhs = std::numeric_limits<double>::infinity();
        for (int s = 0; s < k; ++s) {
            const Vec vf = action.fundamental_vector(s, z);
            const double vf_norm = vf.norm();
            if (vf_norm == 0.0) {
                worst_tangency = 1.0;  // stationary orbit point: hypothesis fails
                continue;
            }
            const Vec off_plane = vf - T * (T.transpose() * vf);
            worst_tangency = std::max(worst_tangency, off_plane.norm() / vf_norm);

            // Flow equivariance: J V# = V#(z') + (p - c) X_H(z').
            const Vec vf_end = action.fundamental_vector(s, z_end);
            const Vec lhs_vec = state.J * vf;
            const Vec rhs_vec = vf_end + (action.p - action.c) * xh;
            worst_identity = std::max(
                worst_identity, (lhs_vec - rhs_vec).norm() / std::max(1.0, rhs_vec.norm()));

            // Image of the projected symmetry direction under the reduced
            // Jacobian: never in the kernel when the hypotheses hold.
            const Vec image = Dr * (T.transpose() * vf);
            worst_lhs = std::min(worst_lhs, image.norm());
        }
        sample.tangency_distance = worst_tangency;
        sample.mechanism_identity_error = worst_identity;
        sample.mechanism_lhs = worst_lhs;
        sample.mechanism_rhs = 0.5 * std::abs(action.p - action.c) * (AB * xh).norm();

        sample.hypotheses_met = nonstat &&
                                sample.tangency_distance <= settings.tangency_threshold &&
                                sample.transversality_component >= settings.transversality_threshold;
        if (sample.hypotheses_met) {
            ++report.checked;
            const bool bound_ok = sample.m <= report.bound;
            const bool mech_ok = sample.mechanism_identity_error <= settings.identity_tol &&
                                 sample.mechanism_lhs >= sample.mechanism_rhs;
            sample.pass = bound_ok && mech_ok;
            if (!bound_ok) ++report.violations;
            if (!sample.pass) report.all_pass = false;
        }
        report.samples.push_back(std::move(sample));
    }
    return report;
}

namespace {
std::string fmt12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}
}  // namespace

std::string obstruction_report_to_json(const ObstructionCheckReport& report) {
    std::ostringstream os;
    os << "{\n"
       << "  \"n\": " << report.n << ",\n"
       << "  \"k\": " << report.k << ",\n"
       << "  \"bound\": " << report.bound << ",\n"
       << "  \"checked\": " << report.checked << ",\n"
       << "  \"violations\": " << report.violations << ",\n"
       << "  \"all_pass\": " << (report.all_pass ? "true" : "false") << ",\n"
       << "  \"samples\": [";
    for (std::size_t i = 0; i < report.samples.size(); ++i) {
        const auto& s = report.samples[i];
        os << (i ? ",\n    {" : "\n    {");
        os << "\"m\": " << s.m << ", \"tangency\": " << fmt12(s.tangency_distance)
           << ", \"transversality\": " << fmt12(s.transversality_component)
           << ", \"identity_error\": " << fmt12(s.mechanism_identity_error)
           << ", \"hypotheses_met\": " << (s.hypotheses_met ? "true" : "false")
           << ", \"pass\": " << (s.pass ? "true" : "false") << "}";
    }
    os << "\n  ]\n}\n";
    return os.str();
}

}  // namespace conjatlas
