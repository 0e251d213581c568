#include <doctest.h>

#include <cmath>
#include <random>

#include "conjatlas/boundary.hpp"

using namespace conjatlas;

namespace {

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

// Random Lagrangian plane oracle: y = S x + d with S symmetric gives the
// plane -S x + I y = d, which is Lagrangian by construction.
AffineLagrangianPlane random_lagrangian_plane(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> gauss;
    Mat S(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) S(i, j) = gauss(rng);
    S = 0.5 * (S + S.transpose()).eval();
    Vec d(n);
    for (int i = 0; i < n; ++i) d(i) = gauss(rng);
    return {-S, Mat::Identity(n, n), d};
}

}  // namespace

TEST_CASE("dirichlet, neumann and robin planes are Lagrangian") {
    CHECK(is_lagrangian(dirichlet_plane(vec2(0.0, 0.0))));
    CHECK(is_lagrangian(neumann_plane(vec2(1.0, -2.0))));
    CHECK(is_lagrangian(robin_plane(vec2(0.5, -1.5), vec2(1.0, 2.0))));
}

TEST_CASE("lagrangian condition equals vanishing symplectic form on the frame") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(trial % 3);
        const AffineLagrangianPlane plane = random_lagrangian_plane(rng, n);
        CHECK(is_lagrangian(plane));
        const NearParametrization np = parametrize_plane(plane);
        // frame orthonormal
        CHECK((np.frame.transpose() * np.frame - Mat::Identity(n, n)).cwiseAbs().maxCoeff() <=
              1e-12);
        // omega(v_i, v_j) = 0 for all frame pairs
        const Mat omega = symplectic_matrix(n);
        CHECK((np.frame.transpose() * omega * np.frame).cwiseAbs().maxCoeff() <= 1e-12);
        // base point on the plane
        CHECK(plane.evaluate(np.z_base).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("non-Lagrangian planes are rejected") {
    Mat A(2, 2), B(2, 2);
    A << 1, 2, 0, 1;
    B = Mat::Identity(2, 2);
    // A B^T = A is not symmetric
    CHECK_FALSE(is_lagrangian({A, B, vec2(0, 0)}));
}

TEST_CASE("near-plane frames: dirichlet spans momentum, neumann spans position") {
    const SeparatedBoundary bd = dirichlet(vec2(0, 0), vec2(1, 1));
    const NearParametrization np = parametrize_near(bd);
    CHECK(np.frame.topRows(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK((np.frame.bottomRows(2) - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);

    const SeparatedBoundary bn = neumann(vec2(0.5, 0.5), vec2(1, 1));
    const NearParametrization nn = parametrize_near(bn);
    CHECK(nn.frame.bottomRows(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK((nn.frame.topRows(2) - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rank-deficient planes raise invalid-boundary") {
    Mat A = Mat::Zero(2, 2), B = Mat::Zero(2, 2);
    A(0, 0) = 1.0;
    SeparatedBoundary b{{A, B, vec2(0, 0)}, dirichlet_plane(vec2(0, 0)), {}};
    CHECK_THROWS_AS(parametrize_near(b), InvalidBoundaryError);
}

TEST_CASE("flat dirichlet residual: r(u) = u - X*, Dr = I") {
    const HamiltonianModel model = make_flat(2);
    const IntegratorSpec spec(Scheme::implicit_midpoint, 1e-2);
    const Vec X_star = vec2(0.7, -0.2);
    const PlaneResidualMap map(dirichlet(vec2(0, 0), X_star), model, spec);
    const Vec u = vec2(0.3, 0.4);
    CHECK((map.residual(u) - (u - X_star)).cwiseAbs().maxCoeff() <= 1e-13);
    const auto [r, Dr] = map.residual_and_jacobian(u);
    CHECK((Dr - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("dirichlet residual jacobian is exactly the momentum block of the tangent flow") {
    const HamiltonianModel model = make_gaussian_graph_metric(1.0, 1.0).to_model();
    const IntegratorSpec spec(Scheme::implicit_midpoint, 1e-2);
    const Vec x_star = vec2(-1.0, 0.2);
    const PlaneResidualMap map(dirichlet(x_star, vec2(0.5, 0.5)), model, spec);
    const Vec u = vec2(0.9, -0.3);
    const auto [r, Dr] = map.residual_and_jacobian(u);
    const TangentFlowState state = flow_with_tangent(model, PhasePoint(x_star, u), 1.0, spec);
    CHECK((Dr - state.J.topRightCorner(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("residual jacobian agrees with finite differences") {
    const HamiltonianModel model = make_gaussian_graph_metric(1.0, 1.0).to_model();
    const IntegratorSpec spec(Scheme::implicit_midpoint, 1e-3);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);

    // Robin boundary on both sides exercises the general plane path.
    const SeparatedBoundary b{robin_plane(vec2(0.4, -0.7), vec2(-0.6, 0.1)),
                              robin_plane(vec2(0.2, 0.9), vec2(0.3, -0.5)),
                              {}};
    const PlaneResidualMap map(b, model, spec);
    for (int trial = 0; trial < 3; ++trial) {
        const Vec u = vec2(dist(rng), dist(rng));
        const auto [r, Dr] = map.residual_and_jacobian(u);
        const double h = 1e-6;
        for (int j = 0; j < 2; ++j) {
            Vec up = u, um = u;
            up(j) += h;
            um(j) -= h;
            const Vec col = (map.residual(up) - map.residual(um)) / (2 * h);
            CHECK((Dr.col(j) - col).cwiseAbs().maxCoeff() <= 1e-5);
        }
    }
}

TEST_CASE("constrained dirichlet residual and jacobian by finite differences") {
    Vec axes(3);
    axes << 1.05, 1.0, 0.95;
    const HamiltonianModel model = make_ellipsoid_constrained(axes).first;
    const auto& cs = *model.constraint;
    Vec q0(3), qt(3);
    q0 << 1.0, 0.5, -0.2;
    qt << -0.8, 0.4, 0.5;
    const Vec base = project_to_constraint(cs, q0);
    const Vec target = project_to_constraint(cs, qt);
    const ConstrainedDirichletMap map(model, IntegratorSpec(Scheme::rattle, 2e-3), base, target);
    CHECK(map.dim() == 2);

    const Vec u = vec2(0.8, 0.6);
    const auto [r, Dr] = map.residual_and_jacobian(u);
    const double h = 1e-6;
    for (int j = 0; j < 2; ++j) {
        Vec up = u, um = u;
        up(j) += h;
        um(j) -= h;
        const Vec col = (map.residual(up) - map.residual(um)) / (2 * h);
        CHECK((Dr.col(j) - col).cwiseAbs().maxCoeff() <= 1e-5);
    }
}

TEST_CASE("with_parameter translates the designated far entries") {
    const HamiltonianModel model = make_flat(2);
    SeparatedBoundary b = dirichlet(vec2(0, 0), vec2(1.0, 1.0));
    b.mu_entries = {1};
    const PlaneResidualMap map(b, model, IntegratorSpec(Scheme::implicit_midpoint, 1e-2));
    Vec mu(1);
    mu << 0.25;
    const PlaneResidualMap shifted = map.with_parameter(mu);
    const Vec u = vec2(1.0, 1.25);
    CHECK(shifted.residual(u).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("free function forms match the class") {
    const HamiltonianModel model = make_flat(2);
    const IntegratorSpec spec(Scheme::implicit_midpoint, 1e-2);
    const SeparatedBoundary b = dirichlet(vec2(0, 0), vec2(0.3, 0.4));
    const Vec u = vec2(0.1, 0.2);
    CHECK((residual(b, model, spec, u) - PlaneResidualMap(b, model, spec).residual(u)).norm() ==
          0.0);
    CHECK((residual_jacobian(b, model, spec, u) - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <=
          1e-12);
}
