#include "conjatlas/phase.hpp"

#include <Eigen/QR>
#include <cmath>

namespace conjatlas {

Mat ConstraintSet::hessian_action(const Vec& q, const Vec& v) const {
    Mat out(codim, q.size());
    for (int k = 0; k < codim; ++k) {
        Vec e = Vec::Zero(codim);
        e(k) = 1.0;
        out.row(k) = (weighted_hessian(q, e) * v).transpose();
    }
    return out;
}

Vec HamiltonianModel::vector_field(const PhasePoint& z) const {
    Vec gx(dim), gy(dim);
    gradient(z.x, z.y, gx, gy);
    Vec f(2 * dim);
    f << gy, -gx;
    return f;
}

Mat fd_hessian_from_gradient(const HamiltonianModel& model, const Vec& x, const Vec& y,
                             double step) {
    const int n = model.dim;
    Mat H(2 * n, 2 * n);
    Vec gxp(n), gyp(n), gxm(n), gym(n);
    for (int k = 0; k < 2 * n; ++k) {
        Vec xp = x, yp = y, xm = x, ym = y;
        const double base = k < n ? x(k) : y(k - n);
        const double h = step * (1.0 + std::abs(base));
        if (k < n) {
            xp(k) += h;
            xm(k) -= h;
        } else {
            yp(k - n) += h;
            ym(k - n) -= h;
        }
        model.gradient(xp, yp, gxp, gyp);
        model.gradient(xm, ym, gxm, gym);
        H.col(k).head(n) = (gxp - gxm) / (2 * h);
        H.col(k).tail(n) = (gyp - gym) / (2 * h);
    }
    return 0.5 * (H + H.transpose());
}

HamiltonianModel MetricHamiltonian::to_model() const {
    const int n = dim;
    auto inv_metric = inverse_metric;
    auto inv_metric_grad = inverse_metric_grad;

    HamiltonianModel model;
    model.dim = n;
    model.homogeneity_degree = 2.0;
    model.energy = [inv_metric](const Vec& x, const Vec& y) {
        return 0.5 * y.dot(inv_metric(x) * y);
    };
    model.gradient = [inv_metric, inv_metric_grad, n](const Vec& x, const Vec& y, Vec& gx,
                                                      Vec& gy) {
        gy = inv_metric(x) * y;
        const auto dA = inv_metric_grad(x);
        gx.resize(n);
        for (int k = 0; k < n; ++k) gx(k) = 0.5 * y.dot(dA[k] * y);
    };
    // H_yy = A and H_xy = dA/dx_k * y are analytic; only the H_xx block uses
    // central differences of the analytic x-gradient (the builders only carry
    // first derivatives of A).
    auto grad = model.gradient;
    model.hessian = [inv_metric, inv_metric_grad, grad, n](const Vec& x, const Vec& y) {
        Mat H = Mat::Zero(2 * n, 2 * n);
        H.bottomRightCorner(n, n) = inv_metric(x);
        const auto dA = inv_metric_grad(x);
        for (int k = 0; k < n; ++k) {
            const Vec col = dA[k] * y;
            H.col(k).tail(n) = col;
            H.row(k).tail(n) = col.transpose();
        }
        Vec gxp(n), gyp(n), gxm(n), gym(n);
        for (int k = 0; k < n; ++k) {
            const double h = 1e-6 * (1.0 + std::abs(x(k)));
            Vec xp = x, xm = x;
            xp(k) += h;
            xm(k) -= h;
            grad(xp, y, gxp, gyp);
            grad(xm, y, gxm, gym);
            H.col(k).head(n) = (gxp - gxm) / (2 * h);
        }
        H.topLeftCorner(n, n) = 0.5 * (H.topLeftCorner(n, n) + H.topLeftCorner(n, n).transpose()).eval();
        return H;
    };
    model.hessian_is_fd = true;  // the H_xx block is finite-difference based
    return model;
}

HamiltonianModel make_flat(int n) {
    MetricHamiltonian metric;
    metric.dim = n;
    metric.inverse_metric = [n](const Vec&) { return Mat::Identity(n, n); };
    metric.inverse_metric_grad = [n](const Vec&) {
        return std::vector<Mat>(n, Mat::Zero(n, n));
    };
    HamiltonianModel model = metric.to_model();
    // Flat Hessian is exact; replace the FD fallback with the constant block form.
    model.hessian = [n](const Vec&, const Vec&) {
        Mat H = Mat::Zero(2 * n, 2 * n);
        H.bottomRightCorner(n, n) = Mat::Identity(n, n);
        return H;
    };
    model.hessian_is_fd = false;
    return model;
}

MetricHamiltonian make_surface_graph_metric(std::function<double(const Vec&)> f,
                                            std::function<Vec(const Vec&)> grad_f,
                                            std::function<Mat(const Vec&)> hess_f, int n) {
    (void)f;  // the metric depends on f only through its derivatives
    MetricHamiltonian metric;
    metric.dim = n;
    metric.inverse_metric = [grad_f, n](const Vec& x) {
        const Vec u = grad_f(x);
        const double s = 1.0 + u.squaredNorm();
        return Mat(Mat::Identity(n, n) - (u * u.transpose()) / s);
    };
    metric.inverse_metric_grad = [grad_f, hess_f, n](const Vec& x) {
        const Vec u = grad_f(x);
        const Mat Hf = hess_f(x);
        const double s = 1.0 + u.squaredNorm();
        std::vector<Mat> dA(n);
        for (int k = 0; k < n; ++k) {
            const Vec uk = Hf.col(k);  // d(grad f)/dx_k
            dA[k] = -(uk * u.transpose() + u * uk.transpose()) / s +
                    (2.0 * u.dot(uk) / (s * s)) * (u * u.transpose());
        }
        return dA;
    };
    return metric;
}

MetricHamiltonian make_gaussian_graph_metric(double amplitude, double sigma, int n,
                                             double perturbation) {
    if (sigma <= 0.0) throw InvalidInputError("gaussian metric: sigma must be positive");
    const double inv_s2 = 1.0 / (sigma * sigma);
    // Secondary bump (half width, fixed offset); off by default.
    Vec offset = Vec::Zero(n);
    offset(0) = 0.5;
    if (n > 1) offset(1) = 0.3;
    const double inv_s2p = 4.0 * inv_s2;

    auto f = [=](const Vec& x) {
        double v = amplitude * std::exp(-0.5 * x.squaredNorm() * inv_s2);
        if (perturbation != 0.0) {
            const Vec d = x - offset;
            v += perturbation * amplitude * std::exp(-0.5 * d.squaredNorm() * inv_s2p);
        }
        return v;
    };
    auto grad_f = [=](const Vec& x) {
        Vec g = -amplitude * inv_s2 * std::exp(-0.5 * x.squaredNorm() * inv_s2) * x;
        if (perturbation != 0.0) {
            const Vec d = x - offset;
            g += -perturbation * amplitude * inv_s2p * std::exp(-0.5 * d.squaredNorm() * inv_s2p) * d;
        }
        return g;
    };
    auto hess_f = [=](const Vec& x) {
        const double e = amplitude * std::exp(-0.5 * x.squaredNorm() * inv_s2);
        Mat H = e * (inv_s2 * inv_s2 * (x * x.transpose()) - inv_s2 * Mat::Identity(n, n));
        if (perturbation != 0.0) {
            const Vec d = x - offset;
            const double ep =
                perturbation * amplitude * std::exp(-0.5 * d.squaredNorm() * inv_s2p);
            H += ep * (inv_s2p * inv_s2p * (d * d.transpose()) - inv_s2p * Mat::Identity(n, n));
        }
        return H;
    };
    return make_surface_graph_metric(f, grad_f, hess_f, n);
}

std::pair<HamiltonianModel, ConstraintSet> make_ellipsoid_constrained(const Vec& semi_axes) {
    const int m = static_cast<int>(semi_axes.size());
    if (m < 3 || m > 4) throw InvalidInputError("ellipsoid: ambient dimension must be 3 or 4");
    for (int i = 0; i < m; ++i)
        if (semi_axes(i) <= 0.0) throw InvalidInputError("ellipsoid: semi-axes must be positive");

    Vec inv_a2(m);
    for (int i = 0; i < m; ++i) inv_a2(i) = 1.0 / (semi_axes(i) * semi_axes(i));

    ConstraintSet cs;
    cs.codim = 1;
    cs.value = [inv_a2](const Vec& q) {
        Vec g(1);
        g(0) = q.cwiseProduct(q).dot(inv_a2) - 1.0;
        return g;
    };
    cs.jacobian = [inv_a2](const Vec& q) {
        Mat G(1, q.size());
        G.row(0) = 2.0 * q.cwiseProduct(inv_a2).transpose();
        return G;
    };
    cs.weighted_hessian = [inv_a2](const Vec& q, const Vec& w) {
        return Mat(2.0 * w(0) * inv_a2.asDiagonal());
        (void)q;
    };

    HamiltonianModel model;
    model.dim = m;
    model.homogeneity_degree = 2.0;
    model.energy = [](const Vec&, const Vec& p) { return 0.5 * p.squaredNorm(); };
    model.gradient = [m](const Vec&, const Vec& p, Vec& gx, Vec& gy) {
        gx = Vec::Zero(m);
        gy = p;
    };
    model.hessian = [m](const Vec&, const Vec&) {
        Mat H = Mat::Zero(2 * m, 2 * m);
        H.bottomRightCorner(m, m) = Mat::Identity(m, m);
        return H;
    };
    model.constraint = cs;
    return {model, cs};
}

namespace {

double eval_monomial(const Monomial& mono, const Vec& v) {
    double r = mono.coef;
    for (std::size_t j = 0; j < mono.exponents.size(); ++j)
        for (int e = 0; e < mono.exponents[j]; ++e) r *= v(static_cast<int>(j));
    return r;
}

// d/dv_i of the monomial
double eval_monomial_deriv(const Monomial& mono, const Vec& v, int i) {
    if (mono.exponents[i] == 0) return 0.0;
    double r = mono.coef * mono.exponents[i];
    for (std::size_t j = 0; j < mono.exponents.size(); ++j) {
        int e = mono.exponents[j] - (static_cast<int>(j) == i ? 1 : 0);
        for (int k = 0; k < e; ++k) r *= v(static_cast<int>(j));
    }
    return r;
}

double eval_monomial_deriv2(const Monomial& mono, const Vec& v, int i, int j) {
    Monomial d = mono;
    if (d.exponents[i] == 0) return 0.0;
    d.coef *= d.exponents[i];
    d.exponents[i] -= 1;
    return eval_monomial_deriv(d, v, j);
}

}  // namespace

HamiltonianModel make_polynomial(int n, const std::vector<Monomial>& x_monomials,
                                 const std::vector<Monomial>& y_monomials,
                                 std::optional<double> homogeneity_degree) {
    for (const auto& m : x_monomials)
        if (static_cast<int>(m.exponents.size()) != n)
            throw InvalidInputError("polynomial: exponent list length must equal dim");
    for (const auto& m : y_monomials)
        if (static_cast<int>(m.exponents.size()) != n)
            throw InvalidInputError("polynomial: exponent list length must equal dim");

    HamiltonianModel model;
    model.dim = n;
    model.homogeneity_degree = homogeneity_degree;
    model.energy = [x_monomials, y_monomials](const Vec& x, const Vec& y) {
        double h = 0.0;
        for (const auto& m : x_monomials) h += eval_monomial(m, x);
        for (const auto& m : y_monomials) h += eval_monomial(m, y);
        return h;
    };
    model.gradient = [x_monomials, y_monomials, n](const Vec& x, const Vec& y, Vec& gx, Vec& gy) {
        gx = Vec::Zero(n);
        gy = Vec::Zero(n);
        for (const auto& m : x_monomials)
            for (int i = 0; i < n; ++i) gx(i) += eval_monomial_deriv(m, x, i);
        for (const auto& m : y_monomials)
            for (int i = 0; i < n; ++i) gy(i) += eval_monomial_deriv(m, y, i);
    };
    model.hessian = [x_monomials, y_monomials, n](const Vec& x, const Vec& y) {
        Mat H = Mat::Zero(2 * n, 2 * n);
        for (const auto& m : x_monomials)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) H(i, j) += eval_monomial_deriv2(m, x, i, j);
        for (const auto& m : y_monomials)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) H(n + i, n + j) += eval_monomial_deriv2(m, y, i, j);
        return H;
    };
    return model;
}

Vec project_to_constraint(const ConstraintSet& cs, Vec q, double tol, int max_iter) {
    for (int it = 0; it < max_iter; ++it) {
        const Vec g = cs.value(q);
        if (g.cwiseAbs().maxCoeff() <= tol) return q;
        const Mat G = cs.jacobian(q);
        // Gauss-Newton step along the constraint gradient directions.
        const Vec dq = G.transpose() * (G * G.transpose()).ldlt().solve(g);
        q -= dq;
    }
    throw InvalidInputError("project_to_constraint: Newton did not converge");
}

Mat constraint_tangent_basis(const ConstraintSet& cs, const Vec& q) {
    const Mat G = cs.jacobian(q);
    const int m = static_cast<int>(q.size());
    Eigen::HouseholderQR<Mat> qr(G.transpose());
    const Mat Q = qr.householderQ();
    return Q.rightCols(m - cs.codim);
}

}  // namespace conjatlas
