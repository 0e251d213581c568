#include <doctest.h>

#include <cmath>
#include <random>

#include "conjatlas/phase.hpp"

using namespace conjatlas;

namespace {

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

// Independent first-fundamental-form oracle: squared stretch of the embedding
// x -> (x, f(x)) along a coordinate direction, by central differences.
double embedding_g11_fd(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
    const Vec e1 = vec2(1.0, 0.0);
    Vec a = x + h * e1, b = x - h * e1;
    const double dz = (f(a) - f(b)) / (2 * h);
    return 1.0 + dz * dz;
}

}  // namespace

TEST_CASE("flat metric is the identity") {
    const HamiltonianModel model = make_flat(2);
    const Vec x = vec2(0.3, -1.2), y = vec2(0.7, 0.4);
    CHECK(model.energy(x, y) == doctest::Approx(0.5 * y.squaredNorm()).epsilon(1e-14));
    Vec gx(2), gy(2);
    model.gradient(x, y, gx, gy);
    CHECK(gx.norm() == doctest::Approx(0.0));
    CHECK((gy - y).norm() == doctest::Approx(0.0));
}

TEST_CASE("gaussian graph metric at the peak is the identity") {
    const auto metric = make_gaussian_graph_metric(1.0, 1.0);
    const Mat A = metric.inverse_metric(vec2(0.0, 0.0));
    CHECK((A - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("gaussian graph metric matches the closed form and the embedding oracle") {
    const double a = 1.0, s = 1.0;
    auto f = [&](const Vec& x) { return a * std::exp(-0.5 * x.squaredNorm() / (s * s)); };
    const auto metric = make_gaussian_graph_metric(a, s);
    const Vec x = vec2(1.0, 0.0);

    // g11 = 1 + (df/dx1)^2 = 1 + e^{-1} at (1, 0).
    const double g11_expected = 1.0 + std::exp(-1.0);
    const Mat A = metric.inverse_metric(x);
    const Mat g = A.inverse();
    CHECK(g(0, 0) == doctest::Approx(g11_expected).epsilon(1e-12));
    CHECK(g(0, 0) == doctest::Approx(embedding_g11_fd(f, x, 1e-5)).epsilon(1e-8));
    CHECK(g(1, 1) == doctest::Approx(1.0).epsilon(1e-12));  // no x2 slope on the axis
}

TEST_CASE("metric hamiltonian is degree-2 homogeneous in the momentum") {
    const HamiltonianModel model = make_gaussian_graph_metric(1.0, 1.0).to_model();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        Vec x = vec2(dist(rng), dist(rng)), y = vec2(dist(rng), dist(rng));
        const double h1 = model.energy(x, y);
        const double h4 = model.energy(x, 2.0 * y);
        CHECK(std::abs(h4 - 4.0 * h1) <= 1e-12 * (1.0 + std::abs(h1)) * 4.0);
        for (double lambda : {0.5, 1.3, 2.0}) {
            const double hl = model.energy(x, lambda * y);
            CHECK(std::abs(hl - lambda * lambda * h1) <= 1e-10 * (1.0 + std::abs(h1)));
        }
    }
}

TEST_CASE("analytic gradients match central differences") {
    std::vector<HamiltonianModel> models;
    models.push_back(make_gaussian_graph_metric(1.0, 1.0).to_model());
    models.push_back(make_gaussian_graph_metric(0.8, 1.3, 3).to_model());
    {
        std::vector<Monomial> xm = {{1.0, {0, 0, 3}}, {0.4, {1, 1, 4}}};
        std::vector<Monomial> ym = {{1.0, {1, 1, 0}}, {0.5, {1, 1, 1}}};
        models.push_back(make_polynomial(3, xm, ym));
    }
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-1.5, 1.5);
    for (const auto& model : models) {
        const int n = model.dim;
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            Vec x(n), y(n);
            for (int i = 0; i < n; ++i) {
                x(i) = dist(rng);
                y(i) = dist(rng);
            }
            Vec gx(n), gy(n);
            model.gradient(x, y, gx, gy);
            const double h = 1e-5;
            for (int i = 0; i < n; ++i) {
                Vec xp = x, xm_ = x, yp = y, ym_ = y;
                xp(i) += h;
                xm_(i) -= h;
                yp(i) += h;
                ym_(i) -= h;
                const double fx = (model.energy(xp, y) - model.energy(xm_, y)) / (2 * h);
                const double fy = (model.energy(x, yp) - model.energy(x, ym_)) / (2 * h);
                const double scale = 1.0 + std::abs(gx(i)) + std::abs(gy(i));
                worst = std::max(worst, std::abs(fx - gx(i)) / scale);
                worst = std::max(worst, std::abs(fy - gy(i)) / scale);
            }
        }
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("model hessians are symmetric and match finite differences") {
    const HamiltonianModel model = make_gaussian_graph_metric(1.0, 1.0).to_model();
    const Vec x = vec2(0.6, -0.4), y = vec2(1.1, 0.3);
    const Mat H = model.hessian(x, y);
    CHECK((H - H.transpose()).cwiseAbs().maxCoeff() <= 1e-9);
    const Mat Hfd = fd_hessian_from_gradient(model, x, y);
    CHECK((H - Hfd).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("ellipsoid constraint: surface membership and Jacobian rank") {
    Vec axes(3);
    axes << 1.05, 1.0, 0.95;
    auto [model, cs] = make_ellipsoid_constrained(axes);
    CHECK(model.dim == 3);

    Vec q(3);
    q << 1.0, 0.0, 0.0;
    Vec q_sphere = q;
    {
        Vec unit_axes(3);
        unit_axes << 1.0, 1.0, 1.0;
        auto [m2, cs2] = make_ellipsoid_constrained(unit_axes);
        CHECK(cs2.value(q_sphere)(0) == doctest::Approx(0.0));
    }

    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 100; ++trial) {
        Vec raw(3);
        for (int i = 0; i < 3; ++i) raw(i) = gauss(rng);
        const Vec on = project_to_constraint(cs, raw);
        CHECK(std::abs(cs.value(on)(0)) <= 1e-12);
        const Mat G = cs.jacobian(on);
        CHECK(G.row(0).norm() > 0.1);  // full rank c = 1 on the surface
        const Mat T = constraint_tangent_basis(cs, on);
        CHECK((T.transpose() * T - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((G * T).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("ellipsoid rejects non-positive semi-axes") {
    Vec axes(3);
    axes << 1.0, -0.2, 0.5;
    CHECK_THROWS_AS(make_ellipsoid_constrained(axes), InvalidInputError);
}

TEST_CASE("round sphere of circumference 2 has radius 1/pi") {
    Vec axes(3);
    const double r = 1.0 / M_PI;
    axes << r, r, r;
    auto [model, cs] = make_ellipsoid_constrained(axes);
    Vec q(3);
    q << -r, 0.0, 0.0;
    CHECK(std::abs(cs.value(q)(0)) <= 1e-14);
    // circumference = 2 pi r = 2
    CHECK(2.0 * M_PI * r == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("polynomial model evaluates monomials and derivatives exactly") {
    // H = y1 y2 + x3^3
    std::vector<Monomial> xm = {{1.0, {0, 0, 3}}};
    std::vector<Monomial> ym = {{1.0, {1, 1, 0}}};
    const HamiltonianModel model = make_polynomial(3, xm, ym, 3.0);
    Vec x(3), y(3);
    x << 0.5, -1.0, 2.0;
    y << 3.0, 0.25, -1.5;
    CHECK(model.energy(x, y) == doctest::Approx(3.0 * 0.25 + 8.0).epsilon(1e-15));
    Vec gx(3), gy(3);
    model.gradient(x, y, gx, gy);
    CHECK(gx(2) == doctest::Approx(3 * 4.0));
    CHECK(gy(0) == doctest::Approx(0.25));
    CHECK(gy(1) == doctest::Approx(3.0));
    const Mat H = model.hessian(x, y);
    CHECK(H(2, 2) == doctest::Approx(6 * 2.0));
    CHECK(H(3, 4) == doctest::Approx(1.0));  // d2H/dy1 dy2
    CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}
