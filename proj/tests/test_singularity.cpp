#include <doctest.h>

#include <cmath>
#include <random>

#include "conjatlas/singularity.hpp"

using namespace conjatlas;

namespace {

// Synthetic gradient map r(u) = L^T grad g(L u) for a potential g made of a
// catastrophe germ in the leading variables plus a quadratic complement.
// Classification must be invariant under the linear change L.
class GradientMap : public ResidualMap {
  public:
    GradientMap(int n, std::function<Vec(const Vec&)> grad, std::function<Mat(const Vec&)> hess,
                Mat L)
        : n_(n), grad_(std::move(grad)), hess_(std::move(hess)), L_(std::move(L)) {}

    int dim() const override { return n_; }
    Vec residual(const Vec& u) const override { return L_.transpose() * grad_(L_ * u); }
    std::pair<Vec, Mat> residual_and_jacobian(const Vec& u) const override {
        return {residual(u), L_.transpose() * hess_(L_ * u) * L_};
    }
    PhasePoint start_point(const Vec& u) const override { return PhasePoint(u, u); }
    PhasePoint end_point(const Vec& u) const override { return PhasePoint(u, u); }
    std::unique_ptr<ResidualMap> clone() const override {
        return std::make_unique<GradientMap>(*this);
    }

  private:
    int n_;
    std::function<Vec(const Vec&)> grad_;
    std::function<Mat(const Vec&)> hess_;
    Mat L_;
};

// Germ library: gradient and Hessian of g on R^3 with the germ in the first
// variable(s) and a quadratic complement in the rest.
GradientMap make_ak_map(int k, const Mat& L, double complement_sign = 1.0) {
    auto grad = [k, complement_sign](const Vec& v) {
        Vec g(3);
        g(0) = std::pow(v(0), k);
        g(1) = complement_sign * v(1);
        g(2) = -v(2);
        return g;
    };
    auto hess = [k, complement_sign](const Vec& v) {
        Mat H = Mat::Zero(3, 3);
        H(0, 0) = k * std::pow(v(0), k - 1);
        H(1, 1) = complement_sign;
        H(2, 2) = -1.0;
        return H;
    };
    return GradientMap(3, grad, hess, L);
}

GradientMap make_d4_map(bool elliptic, const Mat& L) {
    auto grad = [elliptic](const Vec& v) {
        Vec g(3);
        if (elliptic) {  // g = v0^3 - 3 v0 v1^2
            g(0) = 3 * v(0) * v(0) - 3 * v(1) * v(1);
            g(1) = -6 * v(0) * v(1);
        } else {  // g = v0^3 + v1^3
            g(0) = 3 * v(0) * v(0);
            g(1) = 3 * v(1) * v(1);
        }
        g(2) = v(2);
        return g;
    };
    auto hess = [elliptic](const Vec& v) {
        Mat H = Mat::Zero(3, 3);
        if (elliptic) {
            H(0, 0) = 6 * v(0);
            H(0, 1) = H(1, 0) = -6 * v(1);
            H(1, 1) = -6 * v(0);
        } else {
            H(0, 0) = 6 * v(0);
            H(1, 1) = 6 * v(1);
        }
        H(2, 2) = 1.0;
        return H;
    };
    return GradientMap(3, grad, hess, L);
}

Mat random_well_conditioned(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> gauss;
    Mat A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = gauss(rng);
    Eigen::HouseholderQR<Mat> qr(A);
    Mat Q = qr.householderQ();
    std::uniform_real_distribution<double> scale(0.7, 1.4);
    Vec d(n);
    for (int i = 0; i < n; ++i) d(i) = scale(rng);
    return Q * d.asDiagonal();
}

}  // namespace

TEST_CASE("degeneracy: identity has m = 0") {
    const DegeneracyResult deg = degeneracy(Mat::Identity(3, 3));
    CHECK(deg.m == 0);
}

TEST_CASE("degeneracy: constructed rank-deficient matrix") {
    std::mt19937_64 rng(3);
    const Mat U = random_well_conditioned(rng, 4);
    const Mat V = random_well_conditioned(rng, 4);
    Eigen::HouseholderQR<Mat> qu(U), qv(V);
    const Mat Qu = qu.householderQ(), Qv = qv.householderQ();
    Vec d(4);
    d << 1.0, 0.8, 0.6, 0.0;
    const Mat Dr = Qu * d.asDiagonal() * Qv.transpose();
    const DegeneracyResult deg = degeneracy(Dr);
    CHECK(deg.m == 1);
    // kernel spans the last column of Qv up to sign
    CHECK(std::abs(std::abs(deg.kernel.col(0).dot(Qv.col(3))) - 1.0) <= 1e-10);
    CHECK((Dr * deg.kernel).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("degeneracy is scale invariant") {
    std::mt19937_64 rng(5);
    const Mat Q = random_well_conditioned(rng, 3);
    Vec d(3);
    d << 1.0, 1e-9, 0.5;
    const Mat Dr = Q * d.asDiagonal();
    for (double alpha : {1e-3, 1.0, 1e3}) {
        CHECK(degeneracy(alpha * Dr).m == degeneracy(Dr).m);
    }
    CHECK(degeneracy(Dr).m == 1);
    CHECK(degeneracy(Mat::Zero(3, 3)).m == 3);
}

TEST_CASE("classify: regular point is A1") {
    const GradientMap map = make_ak_map(2, Mat::Identity(3, 3));
    Vec u(3);
    u << 0.5, 0.0, 0.0;  // Hessian diag(2*0.5, 1, -1): nonsingular
    const SingularityReport report = classify(map, u);
    CHECK(report.m == 0);
    CHECK(report.type == SingularityType::A1);
}

TEST_CASE("classify: fold, cusp, swallowtail and butterfly germs") {
    const Vec origin = Vec::Zero(3);
    const std::pair<int, SingularityType> cases[] = {{2, SingularityType::A2},
                                                     {3, SingularityType::A3},
                                                     {4, SingularityType::A4},
                                                     {5, SingularityType::A5}};
    for (const auto& [k, expected] : cases) {
        const GradientMap map = make_ak_map(k, Mat::Identity(3, 3));
        const SingularityReport report = classify(map, origin);
        CHECK(report.m == 1);
        CHECK(report.type == expected);
    }
}

TEST_CASE("classify: order above five is unresolved, never mislabeled") {
    const GradientMap map = make_ak_map(6, Mat::Identity(3, 3));
    const SingularityReport report = classify(map, Vec::Zero(3));
    CHECK(report.m == 1);
    CHECK(report.type == SingularityType::unresolved);
}

TEST_CASE("classify: elliptic and hyperbolic umbilics by the cubic discriminant") {
    const SingularityReport elliptic = classify(make_d4_map(true, Mat::Identity(3, 3)), Vec::Zero(3));
    CHECK(elliptic.m == 2);
    CHECK(elliptic.type == SingularityType::D4_minus);
    CHECK(elliptic.cubic_discriminant < 0.0);

    const SingularityReport hyper = classify(make_d4_map(false, Mat::Identity(3, 3)), Vec::Zero(3));
    CHECK(hyper.m == 2);
    CHECK(hyper.type == SingularityType::D4_plus);
    CHECK(hyper.cubic_discriminant > 0.0);
}

TEST_CASE("classification is invariant under random linear changes of coordinates") {
    std::mt19937_64 rng(2024);
    struct Case {
        SingularityType expected;
        std::function<GradientMap(const Mat&)> build;
    };
    const Case cases[] = {
        {SingularityType::A2, [](const Mat& L) { return make_ak_map(2, L); }},
        {SingularityType::A3, [](const Mat& L) { return make_ak_map(3, L, -1.0); }},
        {SingularityType::A4, [](const Mat& L) { return make_ak_map(4, L); }},
        {SingularityType::D4_minus, [](const Mat& L) { return make_d4_map(true, L); }},
        {SingularityType::D4_plus, [](const Mat& L) { return make_d4_map(false, L); }},
    };
    for (const auto& c : cases) {
        int correct = 0;
        for (int trial = 0; trial < 20; ++trial) {
            const Mat L = random_well_conditioned(rng, 3);
            const SingularityReport report = classify(c.build(L), Vec::Zero(3));
            if (report.type == c.expected) ++correct;
            // never a different resolved label
            CHECK((report.type == c.expected || report.type == SingularityType::unresolved));
        }
        CHECK(correct >= 19);
    }
}

TEST_CASE("report json carries the schema fields") {
    const SingularityReport report = classify(make_ak_map(3, Mat::Identity(3, 3)), Vec::Zero(3));
    const std::string json = report_to_json(report);
    CHECK(json.find("\"m\": 1") != std::string::npos);
    CHECK(json.find("\"type\": \"A3\"") != std::string::npos);
    CHECK(json.find("\"derivatives\"") != std::string::npos);
    CHECK(json.find("\"c3\"") != std::string::npos);
    CHECK(json.find("cubic_discriminant") == std::string::npos);  // absent when inapplicable
}
