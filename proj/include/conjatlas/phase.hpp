#ifndef CONJATLAS_PHASE_HPP
#define CONJATLAS_PHASE_HPP

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "conjatlas/types.hpp"

namespace conjatlas {

/// Level set g(q) = 0 of codimension `codim` in ambient R^m, with full-rank Jacobian
/// on the surface. Used for embedded manifolds (spheres, ellipsoids).
struct ConstraintSet {
    int codim = 0;
    std::function<Vec(const Vec& q)> value;     // g(q), length codim
    std::function<Mat(const Vec& q)> jacobian;  // G(q), codim x m
    // Sum_k w_k * Hess(g_k)(q), m x m. Needed by the tangent flow of the
    // constrained integrator.
    std::function<Mat(const Vec& q, const Vec& w)> weighted_hessian;

    // Rows (Hess(g_k) v)^T stacked, codim x m.
    Mat hessian_action(const Vec& q, const Vec& v) const;
};

/// Evaluatable energy H(x, y) with analytic gradient. The Hessian is either
/// analytic or a central-difference fallback of the gradient (flagged).
struct HamiltonianModel {
    int dim = 0;  // n: chart dimension, or ambient dimension for constrained models
    std::function<double(const Vec& x, const Vec& y)> energy;
    std::function<void(const Vec& x, const Vec& y, Vec& gx, Vec& gy)> gradient;
    std::function<Mat(const Vec& x, const Vec& y)> hessian;  // symmetric 2n x 2n
    bool hessian_is_fd = false;  // true when hessian falls back to finite differences
    std::optional<double> homogeneity_degree;  // p with H(x, l*y) = l^p H(x, y)
    std::optional<ConstraintSet> constraint;

    double energy_at(const PhasePoint& z) const { return energy(z.x, z.y); }
    void gradient_at(const PhasePoint& z, Vec& gx, Vec& gy) const { gradient(z.x, z.y, gx, gy); }

    /// Hamiltonian vector field (grad_y H, -grad_x H) as a 2n-vector.
    Vec vector_field(const PhasePoint& z) const;
};

/// Symmetrized central finite differences of the analytic gradient.
Mat fd_hessian_from_gradient(const HamiltonianModel& model, const Vec& x, const Vec& y,
                             double step = 1e-6);

/// H(x, y) = 1/2 y^T A(x) y with A(x) = g(x)^{-1} symmetric positive definite.
/// Carries the derivative tensor of A so the gradient is analytic.
struct MetricHamiltonian {
    int dim = 0;
    std::function<Mat(const Vec& x)> inverse_metric;                   // A(x)
    std::function<std::vector<Mat>(const Vec& x)> inverse_metric_grad; // dA/dx_k, k = 0..n-1

    /// Builds the HamiltonianModel: analytic gradient and H_yy/H_xy blocks,
    /// H_xx block by central differences of the analytic x-gradient.
    HamiltonianModel to_model() const;
};

/// Flat metric A = I on R^n (free particle in a chart).
HamiltonianModel make_flat(int n);

/// Induced metric of the graph z = f(x^1..x^n): g = I + grad_f grad_f^T,
/// A = g^{-1} by Sherman-Morrison. Needs f, grad_f and hess_f only.
MetricHamiltonian make_surface_graph_metric(std::function<double(const Vec&)> f,
                                            std::function<Vec(const Vec&)> grad_f,
                                            std::function<Mat(const Vec&)> hess_f, int n = 2);

/// Gaussian bump surface f(x) = amplitude * exp(-|x|^2 / (2 sigma^2)), with an
/// optional off-center secondary bump of relative size `perturbation`.
MetricHamiltonian make_gaussian_graph_metric(double amplitude, double sigma, int n = 2,
                                             double perturbation = 0.0);

/// Ambient free Hamiltonian H(q, p) = 1/2 |p|^2 constrained to the ellipsoid
/// sum_i q_i^2 / a_i^2 = 1. Geodesics of the induced metric are the constrained flow.
/// Throws InvalidInputError for non-positive semi-axes.
std::pair<HamiltonianModel, ConstraintSet> make_ellipsoid_constrained(const Vec& semi_axes);

/// One monomial coef * prod_j v_j^{exponents[j]} in either the x or the y variables.
struct Monomial {
    double coef = 0.0;
    std::vector<int> exponents;
};

/// Separated polynomial H(x, y) = sum of x-monomials + sum of y-monomials,
/// with analytic gradient and Hessian.
HamiltonianModel make_polynomial(int n, const std::vector<Monomial>& x_monomials,
                                 const std::vector<Monomial>& y_monomials,
                                 std::optional<double> homogeneity_degree = std::nullopt);

/// Projects an ambient point onto the constraint surface by Newton along the
/// constraint gradient. Used to seed tests and to validate base points.
Vec project_to_constraint(const ConstraintSet& cs, Vec q, double tol = 1e-13, int max_iter = 50);

/// Orthonormal basis of the tangent space ker G at q, m x (m - codim).
Mat constraint_tangent_basis(const ConstraintSet& cs, const Vec& q);

}  // namespace conjatlas

#endif
