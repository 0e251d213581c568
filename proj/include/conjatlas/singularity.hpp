#ifndef CONJATLAS_SINGULARITY_HPP
#define CONJATLAS_SINGULARITY_HPP

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "conjatlas/boundary.hpp"

namespace conjatlas {

enum class SingularityType { A1, A2, A3, A4, A5, D4_minus, D4_plus, unresolved };

std::string to_string(SingularityType type);

struct DegeneracyResult {
    int m = 0;
    Mat kernel;    // n x m, orthonormal (right singular vectors)
    Mat cokernel;  // n x m, orthonormal (left singular vectors)
    Vec singular_values;
};

/// m = #{sigma_i < sigma_threshold_rel * sigma_max}; the sigma_max = 0 case
/// degenerates to m = n. Scale invariant by construction.
DegeneracyResult degeneracy(const Mat& Dr, double sigma_threshold_rel = 1e-6);

struct ClassifySettings {
    double sigma_threshold_rel = 1e-6;
    std::array<double, 2> fd_ladder = {1e-2, 3e-3};  // branch sampling scales
    double eval_noise = 1e-12;  // absolute noise of one residual evaluation
    double safety = 8.0;        // floor multiplier separating signal from noise
    double branch_tol = 1e-11;
    int branch_max_iter = 25;
    double cubic_disc_tol = 1e-4;       // relative discriminant resolution (m = 2)
    double cubic_asymmetry_tol = 0.35;  // relative non-conservativity guard (m = 2)
};

struct SingularityReport {
    Vec u;                   // solution the report refers to
    double residual_norm = 0.0;
    int m = 0;
    Mat kernel, cokernel;
    Vec singular_values;
    SingularityType type = SingularityType::unresolved;

    // m = 1: reduced directional derivatives c2..c5 and their noise floors.
    bool has_derivatives = false;
    std::array<double, 4> derivatives{};  // c2, c3, c4, c5
    std::array<double, 4> noise_floor{};

    // m = 2: binary cubic of the reduced potential and its quadratic-form
    // discriminant (negative = elliptic, positive = hyperbolic).
    bool has_cubic = false;
    std::array<double, 4> cubic{};  // coefficients a s1^3 + b s1^2 s2 + c s1 s2^2 + d s2^3
    double cubic_discriminant = std::numeric_limits<double>::quiet_NaN();
    double cubic_asymmetry = 0.0;

    bool hessian_fd_flagged = false;  // model Hessian uses the FD fallback
    std::string note;
};

/// Numerical Lyapunov-Schmidt reduction along the kernel directions of Dr(u).
/// m = 0 -> A1. m = 1 -> first reduced derivative above the noise floor gives
/// A_k (k <= 5). m = 2 -> cubic form of the reduced two-parameter potential,
/// classified by the sign of its Hessian-determinant discriminant. Anything
/// ambiguous is reported `unresolved`, never guessed.
SingularityReport classify(const ResidualMap& map, const Vec& u_star,
                           const ClassifySettings& settings = {});

/// JSON form of the report: {m, type, kernel, derivatives{c2..c5},
/// cubic_discriminant}; fields absent when inapplicable.
std::string report_to_json(const SingularityReport& report);

}  // namespace conjatlas

#endif
