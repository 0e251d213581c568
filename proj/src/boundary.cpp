#include "conjatlas/boundary.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace conjatlas {

double lagrangian_defect(const AffineLagrangianPlane& plane) {
    const Mat S = plane.A * plane.B.transpose();
    return (S - S.transpose()).cwiseAbs().maxCoeff();
}

bool is_lagrangian(const AffineLagrangianPlane& plane, double tol) {
    const int n = plane.dim();
    Mat AB(n, 2 * n);
    AB << plane.A, plane.B;
    Eigen::JacobiSVD<Mat> svd(AB);
    const double smax = svd.singularValues()(0);
    if (smax <= 0.0 || svd.singularValues()(n - 1) < 1e-12 * smax) return false;
    return lagrangian_defect(plane) <= tol * std::max(1.0, smax);
}

AffineLagrangianPlane dirichlet_plane(const Vec& x_star) {
    const int n = static_cast<int>(x_star.size());
    return {Mat::Identity(n, n), Mat::Zero(n, n), x_star};
}

AffineLagrangianPlane neumann_plane(const Vec& y_star) {
    const int n = static_cast<int>(y_star.size());
    return {Mat::Zero(n, n), Mat::Identity(n, n), y_star};
}

AffineLagrangianPlane robin_plane(const Vec& alpha, const Vec& beta) {
    const int n = static_cast<int>(alpha.size());
    if (beta.size() != n) throw InvalidInputError("robin_plane: alpha/beta size mismatch");
    return {Mat::Identity(n, n), Mat(alpha.asDiagonal()), beta};
}

SeparatedBoundary dirichlet(const Vec& x_star, const Vec& X_star) {
    return {dirichlet_plane(x_star), dirichlet_plane(X_star), {}};
}

SeparatedBoundary neumann(const Vec& y_star, const Vec& Y_star) {
    return {neumann_plane(y_star), neumann_plane(Y_star), {}};
}

NearParametrization parametrize_plane(const AffineLagrangianPlane& plane) {
    const int n = plane.dim();

    // Canonical frames for the coordinate-aligned cases keep the reduction to
    // the D_y phi^X block an exact index-level identity.
    if (plane.B.isZero(0.0) && plane.A.isIdentity(0.0)) {
        Mat T = Mat::Zero(2 * n, n);
        T.bottomRows(n) = Mat::Identity(n, n);
        Vec zb(2 * n);
        zb << plane.c, Vec::Zero(n);
        return {PhasePoint::from_vector(zb), T};
    }
    if (plane.A.isZero(0.0) && plane.B.isIdentity(0.0)) {
        Mat T = Mat::Zero(2 * n, n);
        T.topRows(n) = Mat::Identity(n, n);
        Vec zb(2 * n);
        zb << Vec::Zero(n), plane.c;
        return {PhasePoint::from_vector(zb), T};
    }
    if (plane.A.isIdentity(0.0) && plane.B.isDiagonal(0.0)) {
        // Robin x^j + a_j y^j = b_j: columns (-a_j, 1)/sqrt(1 + a_j^2) per index.
        Mat T = Mat::Zero(2 * n, n);
        Vec zb(2 * n);
        for (int j = 0; j < n; ++j) {
            const double a = plane.B(j, j);
            const double s = std::sqrt(1.0 + a * a);
            T(j, j) = -a / s;
            T(n + j, j) = 1.0 / s;
            zb(j) = plane.c(j) / (1.0 + a * a);
            zb(n + j) = a * plane.c(j) / (1.0 + a * a);
        }
        return {PhasePoint::from_vector(zb), T};
    }

    Mat AB(n, 2 * n);
    AB << plane.A, plane.B;
    Eigen::JacobiSVD<Mat> svd(AB, Eigen::ComputeFullV | Eigen::ComputeFullU);
    const Vec sv = svd.singularValues();
    if (sv(0) <= 0.0 || sv(n - 1) < 1e-12 * sv(0))
        throw InvalidBoundaryError("parametrize_near: [A B] is rank deficient");
    const Mat T = svd.matrixV().rightCols(n);
    // Minimum-norm solution of [A B] z = c.
    const Vec zb = svd.matrixV().leftCols(n) *
                   (svd.matrixU().transpose() * plane.c).cwiseQuotient(sv);
    return {PhasePoint::from_vector(zb), T};
}

NearParametrization parametrize_near(const SeparatedBoundary& b) {
    return parametrize_plane(b.near);
}

// ---------------------------------------------------------------------------

PlaneResidualMap::PlaneResidualMap(SeparatedBoundary boundary, const HamiltonianModel& model,
                                   IntegratorSpec spec, double time)
    : boundary_(std::move(boundary)),
      model_(&model),
      spec_(spec),
      near_(parametrize_near(boundary_)),
      time_(time),
      n_(boundary_.near.dim()) {
    if (model.dim != n_) throw InvalidInputError("residual: model/boundary dimension mismatch");
}

PhasePoint PlaneResidualMap::start_point(const Vec& u) const {
    const Vec z = near_.z_base.to_vector() + near_.frame * u;
    return PhasePoint::from_vector(z);
}

PhasePoint PlaneResidualMap::end_point(const Vec& u) const {
    return flow(*model_, start_point(u), time_, spec_);
}

Vec PlaneResidualMap::residual(const Vec& u) const {
    return boundary_.far.evaluate(end_point(u));
}

std::pair<Vec, Mat> PlaneResidualMap::residual_and_jacobian(const Vec& u) const {
    const TangentFlowState state = flow_with_tangent(*model_, start_point(u), time_, spec_);
    Mat AB(n_, 2 * n_);
    AB << boundary_.far.A, boundary_.far.B;
    return {boundary_.far.evaluate(state.z), AB * state.J * near_.frame};
}

std::unique_ptr<ResidualMap> PlaneResidualMap::clone() const {
    return std::make_unique<PlaneResidualMap>(*this);
}

PlaneResidualMap PlaneResidualMap::with_parameter(const Vec& mu) const {
    if (static_cast<int>(boundary_.mu_entries.size()) != mu.size())
        throw InvalidInputError("with_parameter: mu size does not match parameter hook");
    PlaneResidualMap copy(*this);
    for (int i = 0; i < mu.size(); ++i) copy.boundary_.far.c(boundary_.mu_entries[i]) += mu(i);
    return copy;
}

// ---------------------------------------------------------------------------

ConstrainedDirichletMap::ConstrainedDirichletMap(const HamiltonianModel& model,
                                                 IntegratorSpec spec, Vec q0, Vec target,
                                                 double time)
    : model_(&model), spec_(spec), q0_(std::move(q0)), target_(std::move(target)), time_(time) {
    if (!model.constraint)
        throw InvalidInputError("ConstrainedDirichletMap: model has no constraint");
    const auto& cs = *model.constraint;
    if (cs.value(q0_).cwiseAbs().maxCoeff() > 1e-10)
        throw InvalidInputError("ConstrainedDirichletMap: base point not on the constraint set");
    if (cs.value(target_).cwiseAbs().maxCoeff() > 1e-10)
        throw InvalidInputError("ConstrainedDirichletMap: target not on the constraint set");
    T0_ = constraint_tangent_basis(cs, q0_);
    TQ_ = constraint_tangent_basis(cs, target_);
    n_ = static_cast<int>(T0_.cols());
    spec_.scheme = Scheme::rattle;
}

PhasePoint ConstrainedDirichletMap::start_point(const Vec& u) const {
    return PhasePoint(q0_, T0_ * u);
}

PhasePoint ConstrainedDirichletMap::end_point(const Vec& u) const {
    return flow(*model_, start_point(u), time_, spec_);
}

Vec ConstrainedDirichletMap::residual(const Vec& u) const {
    return TQ_.transpose() * (end_point(u).x - target_);
}

std::pair<Vec, Mat> ConstrainedDirichletMap::residual_and_jacobian(const Vec& u) const {
    const TangentFlowState state = flow_with_tangent(*model_, start_point(u), time_, spec_);
    const int m = model_->dim;
    const Mat J_xp = state.J.topRightCorner(m, m);  // d(end position)/d(start momentum)
    return {TQ_.transpose() * (state.z.x - target_), TQ_.transpose() * J_xp * T0_};
}

std::unique_ptr<ResidualMap> ConstrainedDirichletMap::clone() const {
    return std::make_unique<ConstrainedDirichletMap>(*this);
}

ConstrainedDirichletMap ConstrainedDirichletMap::with_target(const Vec& target) const {
    return ConstrainedDirichletMap(*model_, spec_, q0_, target, time_);
}

// ---------------------------------------------------------------------------

Vec residual(const SeparatedBoundary& b, const HamiltonianModel& model, const IntegratorSpec& spec,
             const Vec& u) {
    return PlaneResidualMap(b, model, spec).residual(u);
}

Mat residual_jacobian(const SeparatedBoundary& b, const HamiltonianModel& model,
                      const IntegratorSpec& spec, const Vec& u) {
    return PlaneResidualMap(b, model, spec).residual_and_jacobian(u).second;
}

}  // namespace conjatlas
