#ifndef CONJATLAS_BOUNDARY_HPP
#define CONJATLAS_BOUNDARY_HPP

#include <memory>
#include <vector>

#include "conjatlas/flow.hpp"
#include "conjatlas/phase.hpp"

namespace conjatlas {

/// Affine plane {(x, y) : A x + B y = c} in Darboux coordinates. Lagrangian
/// iff rank [A B] = n and A B^T is symmetric.
struct AffineLagrangianPlane {
    Mat A;
    Mat B;
    Vec c;

    int dim() const { return static_cast<int>(c.size()); }

    /// Row-space evaluation [A B] z - c; zero on the plane.
    Vec evaluate(const PhasePoint& z) const { return A * z.x + B * z.y - c; }
};

/// Max asymmetry of A B^T; exactly zero for Lagrangian planes.
double lagrangian_defect(const AffineLagrangianPlane& plane);

/// Checks rank [A B] = n and the Lagrangian condition to `tol`.
bool is_lagrangian(const AffineLagrangianPlane& plane, double tol = 1e-12);

AffineLagrangianPlane dirichlet_plane(const Vec& x_star);  // {x = x*}
AffineLagrangianPlane neumann_plane(const Vec& y_star);    // {y = y*}
AffineLagrangianPlane robin_plane(const Vec& alpha, const Vec& beta);  // x + diag(a) y = b

/// Near plane Lambda for the start point, far plane Lambda' for the time-1
/// image. Entries of far.c listed in mu_entries translate with the family
/// parameter mu.
struct SeparatedBoundary {
    AffineLagrangianPlane near;
    AffineLagrangianPlane far;
    std::vector<int> mu_entries;  // indices into far.c
};

SeparatedBoundary dirichlet(const Vec& x_star, const Vec& X_star);
SeparatedBoundary neumann(const Vec& y_star, const Vec& Y_star);

/// Orthonormal frame of the near plane: u -> z_base + T u parametrizes Lambda,
/// columns of T span ker [A B], z_base is the minimum-norm solution.
struct NearParametrization {
    PhasePoint z_base;
    Mat frame;  // 2n x n, orthonormal columns
};

/// Throws InvalidBoundaryError when rank [A B] < n. Dirichlet/Neumann/diagonal
/// Robin planes get exact canonical frames; general planes use the SVD null space.
NearParametrization parametrize_near(const SeparatedBoundary& b);
NearParametrization parametrize_plane(const AffineLagrangianPlane& plane);

/// Shooting residual r: R^n -> R^n with Jacobian through the tangent flow.
/// Implementations are pure and safe to evaluate concurrently.
class ResidualMap {
  public:
    virtual ~ResidualMap() = default;
    virtual int dim() const = 0;
    virtual Vec residual(const Vec& u) const = 0;
    virtual std::pair<Vec, Mat> residual_and_jacobian(const Vec& u) const = 0;
    virtual PhasePoint start_point(const Vec& u) const = 0;
    virtual PhasePoint end_point(const Vec& u) const = 0;
    virtual std::unique_ptr<ResidualMap> clone() const = 0;
};

/// r(u) = A' phi^x(z(u)) + B' phi^y(z(u)) - c', z(u) = z_base + T u, phi the
/// time-1 flow. Dr(u) = [A' B'] J T. For Dirichlet boundaries this reduces
/// index-for-index to h_mu and the D_y phi^X block.
class PlaneResidualMap : public ResidualMap {
  public:
    PlaneResidualMap(SeparatedBoundary boundary, const HamiltonianModel& model,
                     IntegratorSpec spec, double time = 1.0);

    int dim() const override { return n_; }
    Vec residual(const Vec& u) const override;
    std::pair<Vec, Mat> residual_and_jacobian(const Vec& u) const override;
    PhasePoint start_point(const Vec& u) const override;
    PhasePoint end_point(const Vec& u) const override;
    std::unique_ptr<ResidualMap> clone() const override;

    /// Copy with far.c translated by mu along the boundary's mu_entries.
    PlaneResidualMap with_parameter(const Vec& mu) const;

    const SeparatedBoundary& boundary() const { return boundary_; }
    const NearParametrization& near_frame() const { return near_; }
    const HamiltonianModel& model() const { return *model_; }
    const IntegratorSpec& spec() const { return spec_; }
    double time() const { return time_; }

  private:
    SeparatedBoundary boundary_;
    const HamiltonianModel* model_;
    IntegratorSpec spec_;
    NearParametrization near_;
    double time_;
    int n_;
};

/// Geodesic Dirichlet problem on a constrained model: start at q0 on the
/// surface, momentum p = T0 u in the tangent fiber, endpoint matched to the
/// target Q through the target's tangent frame. r(u) = TQ^T (phi^q(z(u)) - Q).
class ConstrainedDirichletMap : public ResidualMap {
  public:
    ConstrainedDirichletMap(const HamiltonianModel& model, IntegratorSpec spec, Vec q0, Vec target,
                            double time = 1.0);

    int dim() const override { return n_; }
    Vec residual(const Vec& u) const override;
    std::pair<Vec, Mat> residual_and_jacobian(const Vec& u) const override;
    PhasePoint start_point(const Vec& u) const override;
    PhasePoint end_point(const Vec& u) const override;
    std::unique_ptr<ResidualMap> clone() const override;

    /// Copy with the target translated to Q + mu (projected back to the surface).
    ConstrainedDirichletMap with_target(const Vec& target) const;

    const Vec& base_point() const { return q0_; }
    const Vec& target() const { return target_; }
    const Mat& start_tangent_basis() const { return T0_; }
    const Mat& target_tangent_basis() const { return TQ_; }

  private:
    const HamiltonianModel* model_;
    IntegratorSpec spec_;
    Vec q0_, target_;
    Mat T0_, TQ_;  // ambient_dim x n tangent frames at q0 and at the target
    double time_;
    int n_;
};

/// Free-function forms of the residual contract.
Vec residual(const SeparatedBoundary& b, const HamiltonianModel& model, const IntegratorSpec& spec,
             const Vec& u);
Mat residual_jacobian(const SeparatedBoundary& b, const HamiltonianModel& model,
                      const IntegratorSpec& spec, const Vec& u);

}  // namespace conjatlas

#endif
