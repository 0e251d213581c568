#ifndef CONJATLAS_SYMMETRY_HPP
#define CONJATLAS_SYMMETRY_HPP

#include <vector>

#include "conjatlas/shooting.hpp"

namespace conjatlas {

/// Diagonal conformal scaling action of (R+)^k: generator s sends
/// x^j -> l^{a_sj} x^j and y_j -> l^{c - a_sj} y_j. The symplectic form picks
/// up the factor theta(l) = l^c per generator; a Hamiltonian with claimed
/// scaling degree p satisfies H o chi = l^p H.
struct ScalingAction {
    Mat exponents;  // k x n, rows a^(1)..a^(k), linearly independent
    double c = 1.0;
    double p = 0.0;

    int generators() const { return static_cast<int>(exponents.rows()); }
    int dim() const { return static_cast<int>(exponents.cols()); }

    /// chi for the group element (l_1..l_k), all l_s > 0.
    PhasePoint apply(const Vec& lambdas, const PhasePoint& z) const;

    /// theta(l) = prod l_s^c (conformal factor of the pullback of omega).
    double theta(const Vec& lambdas) const;
    /// eta(l) = prod l_s^p (scaling factor of the Hamiltonian).
    double eta(const Vec& lambdas) const;

    /// Fundamental vector of generator s at z: a_j x^j d/dx^j + (c-a_j) y_j d/dy_j.
    Vec fundamental_vector(int s, const PhasePoint& z) const;

    /// The time-scaling factor eta/theta is non-stationary iff p != c.
    bool nonstationary() const { return p != c; }

    /// Throws unless the exponent rows are linearly independent and k <= n.
    void validate() const;
};

/// max over samples and l in {0.5, 0.9, 1.1, 2} (per generator) of
/// |H(chi_l(z)) - l^p H(z)| / (1 + |H(z)|).
double verify_invariance(const ScalingAction& action, const HamiltonianModel& model,
                         const std::vector<PhasePoint>& samples);

/// max over samples of || chi_l(phi_{l^{p-c} t}(z)) - phi_t(chi_l(z)) || for
/// the given group parameters; O(h^2) for the symplectic schemes.
double verify_rescaling_lemma(const ScalingAction& action, const HamiltonianModel& model,
                              const IntegratorSpec& spec, const std::vector<PhasePoint>& samples,
                              const Vec& lambdas, double t);

/// Composition of a conformal action with a symplectic one (c = 0): exponent
/// rows add, the conformal factor is unchanged. Throws when the symplectic
/// factor is not symplectic or the resulting rows become dependent.
ScalingAction compose_actions(const ScalingAction& conformal, const ScalingAction& symplectic);

struct ObstructionSample {
    Vec u;
    int m = 0;
    double tangency_distance = 0.0;       // max over generators, unit-normalized
    double transversality_component = 0.0;  // |[A' B'] X_H(z')| / |X_H(z')|
    double mechanism_identity_error = 0.0;  // J V# vs V#' + (p-c) X_H(z')
    double mechanism_lhs = 0.0;             // |Dr T^+ V#| (worst generator)
    double mechanism_rhs = 0.0;             // 0.5 |p-c| |[A' B'] X_H(z')|
    bool hypotheses_met = false;
    bool pass = false;  // m <= n - k when the hypotheses are met
};

struct ObstructionCheckReport {
    int n = 0;
    int k = 0;
    int bound = 0;  // n - k
    double tangency_threshold = 1e-6;
    double transversality_threshold = 1e-6;
    std::vector<ObstructionSample> samples;
    int checked = 0;     // samples with hypotheses met
    int violations = 0;  // checked samples with m > bound
    bool all_pass = true;
};

struct ObstructionSettings {
    double tangency_threshold = 1e-6;
    double transversality_threshold = 1e-6;
    double sigma_threshold_rel = 1e-6;
    double identity_tol = 1e-4;  // discretization allowance on the mechanism identity
};

/// Checks the degeneracy bound m <= n - k at every converged solution: the
/// group must act tangentially to the near plane, the Hamiltonian vector
/// field must be transversal to the far plane, and the action non-stationary;
/// where the hypotheses hold the bound and the flow-equivariance mechanism
/// J V# = V#' + (p - c) X_H(z') are asserted.
ObstructionCheckReport check_obstruction(const ScalingAction& action,
                                         const PlaneResidualMap& problem,
                                         const std::vector<SolutionPoint>& solutions,
                                         const ObstructionSettings& settings = {});

std::string obstruction_report_to_json(const ObstructionCheckReport& report);

}  // namespace conjatlas

#endif
