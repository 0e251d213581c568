#ifndef CONJATLAS_FLOW_HPP
#define CONJATLAS_FLOW_HPP

#include <cstdint>
#include <memory>

#include "conjatlas/phase.hpp"

namespace conjatlas {

enum class Scheme { implicit_midpoint, rattle, reference_rk };

struct IntegratorSpec {
    Scheme scheme = Scheme::implicit_midpoint;
    double step = 1e-3;
    double newton_tol = 1e-12;
    int newton_max_iter = 25;
    double rk_tol = 1e-9;  // adaptive tolerance of the reference scheme

    IntegratorSpec() = default;
    IntegratorSpec(Scheme s, double h) : scheme(s), step(h) {}
};

/// Phase point carried together with the Jacobian of the flow map at the
/// initial point and the elapsed time. J(0) = I.
struct TangentFlowState {
    PhasePoint z;
    Mat J;
    double t = 0.0;
};

/// Counts model evaluations (energy/gradient/hessian and constraint calls)
/// made by the integrators. Used to compare scheme cost.
std::uint64_t flow_eval_count();
void reset_flow_eval_count();

/// Single-trajectory stepper: advances (z, J) one step at a time with the
/// configured scheme. Copyable, so callers can branch mid-trajectory
/// (bisection refinement in conjugate-point searches).
class FlowStepper {
  public:
    FlowStepper(const HamiltonianModel& model, const IntegratorSpec& spec, PhasePoint z0,
                bool with_tangent);

    /// One step of size h (h may differ from spec.step; partial steps are allowed).
    void step(double h);

    const PhasePoint& z() const { return z_; }
    const Mat& jacobian() const { return J_; }
    double t() const { return t_; }
    long step_index() const { return step_index_; }

  private:
    void step_midpoint(double h);
    void step_rattle(double h);

    const HamiltonianModel* model_;
    IntegratorSpec spec_;
    PhasePoint z_;
    Mat J_;
    bool with_tangent_;
    double t_ = 0.0;
    long step_index_ = 0;
};

/// phi_t(z0) with N = round(t / spec.step) uniform steps (so t is hit exactly).
/// Constrained models require scheme = rattle and z0 on the constraint set.
PhasePoint flow(const HamiltonianModel& model, const PhasePoint& z0, double t,
                const IntegratorSpec& spec);

/// Flow together with the Jacobian of the flow map, propagated by
/// differentiating the same discrete scheme step by step.
TangentFlowState flow_with_tangent(const HamiltonianModel& model, const PhasePoint& z0, double t,
                                   const IntegratorSpec& spec);

/// || chi_theta(phi_{theta^{p-1} t}(z0)) - phi_t(chi_theta(z0)) || with
/// chi_theta(x, y) = (x, theta y). Exact for the continuous flow of a
/// y-homogeneous Hamiltonian; the returned value is discretization noise.
double rescaling_residual(const HamiltonianModel& model, const PhasePoint& z0, double theta,
                          double t, const IntegratorSpec& spec);

/// Adaptive Dormand-Prince 5(4) reference integrator. Oracle only: it is not
/// symplectic and never feeds singularity classification. Constrained models
/// are integrated as the ambient ODE with the constraint force eliminated.
PhasePoint flow_reference(const HamiltonianModel& model, const PhasePoint& z0, double t,
                          double tol);

/// Reference tangent flow: integrates the variational equations alongside the
/// trajectory with the same adaptive scheme; the vector-field Jacobian is
/// obtained by central differences of the right-hand side.
TangentFlowState flow_reference_tangent(const HamiltonianModel& model, const PhasePoint& z0,
                                        double t, double tol);

/// Ambient right-hand side used by the reference scheme (public for tests):
/// the Hamiltonian vector field, with the constraint force eliminated via the
/// hidden constraint for constrained models.
Vec reference_rhs(const HamiltonianModel& model, const Vec& z);

}  // namespace conjatlas

#endif
