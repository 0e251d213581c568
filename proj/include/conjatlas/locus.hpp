#ifndef CONJATLAS_LOCUS_HPP
#define CONJATLAS_LOCUS_HPP

#include <optional>

#include "conjatlas/shooting.hpp"

namespace conjatlas {

struct ConjugateSettings {
    double t_tol = 1e-8;               // bisection resolution of the conjugate time
    double sigma_threshold_rel = 1e-6; // degeneracy threshold at the conjugate point
    double dip_ratio = 1e-3;           // tangential-zero trigger on the monitor sigma_min
};

/// First conjugate point along a unit-speed ray. `direction` lives in tangent
/// coordinates: the chart momentum direction for unconstrained models, or the
/// coefficients over the tangent frame at the base point for constrained ones.
struct ConjugatePoint {
    double t_star = 0.0;
    int m = 0;                // degeneracy of the transverse block at t_star
    Vec endpoint;             // chart position or ambient position
    PhasePoint z_end;
    Vec sigma_transverse;     // singular values of the transverse block
    double monitor_value = 0.0;
};

/// Walks the tangent flow along the ray, monitors the determinant of the
/// transverse block of D_y phi^X (flow direction and radial direction
/// projected out), brackets the first zero by sign change and refines it by
/// bisection; sigma_min dips catch tangential (even multiplicity) zeros.
/// Returns nullopt when no conjugate point exists in (0, t_max].
std::optional<ConjugatePoint> first_conjugate_time(const HamiltonianModel& model, const Vec& base,
                                                   const Vec& direction, double t_max,
                                                   const IntegratorSpec& spec,
                                                   const ConjugateSettings& settings = {});

struct LocusSettings {
    ConjugateSettings conjugate;
    double cusp_tol = 0.12;        // relative endpoint-speed threshold for cusp candidates
    int max_refine_levels = 3;
    double refine_factor = 3.0;    // endpoint-jump factor that triggers grid refinement
    double point_locus_tol = 1e-4; // endpoint spread below which the locus is a point
    int workers = 1;
    ClassifySettings classify;
};

struct LocusPoint {
    double s = 0.0;       // direction angle
    double t_star = 0.0;  // first conjugate time (arc length at unit speed)
    Vec endpoint;
    int m = 0;
    bool cusp = false;
    bool cusp_unresolved = false;
};

struct LocusCurve {
    std::vector<LocusPoint> points;   // ordered by direction angle
    std::vector<int> cusp_indices;    // confirmed A3 cusps
    int unresolved_cusp_candidates = 0;
    int rays_without_conjugate = 0;
    bool point_locus = false;         // locus collapsed to a single point
};

/// Conjugate locus of a 2-dimensional model (chart n = 2, or constrained
/// surface in R^3). Directions are angles over a fixed tangent frame; cusp
/// candidates are confirmed by classification as A3.
LocusCurve trace_locus(const HamiltonianModel& model, const Vec& base, int grid, double t_max,
                       const IntegratorSpec& spec, const LocusSettings& settings = {});

struct Locus3DSample {
    double theta = 0.0, phi = 0.0;
    double t_star = 0.0;
    Vec endpoint;
    int m = 0;
    double sigma_second = 0.0;  // larger singular value of the 2x2 transverse block
};

struct UmbilicCandidate {
    double theta = 0.0, phi = 0.0;
    double t_star = 0.0;
    Vec endpoint;
    double sigma_second = 0.0;
    SingularityReport report;       // classification at the refined direction
    int ridge_count = 0;            // confirmed A3 ridges through the point
    int ridge_dip_count = 0;        // rank-drop dips found around the point
};

struct Locus3DResult {
    std::vector<Locus3DSample> samples;  // row-major over the (theta, phi) grid
    int n_theta = 0, n_phi = 0;
    std::vector<UmbilicCandidate> umbilics;
    int rays_without_conjugate = 0;
};

struct Locus3DSettings {
    ConjugateSettings conjugate;
    double umbilic_sigma_threshold = 2e-2;  // sigma_second below this marks a candidate
    double umbilic_classify_threshold = 1e-3;  // relative rank threshold for m=2 at the candidate
    double ridge_circle_radius = 0.2;        // direction-space radius for ridge counting
    int ridge_circle_samples = 60;
    int max_candidates = 3;
    int workers = 1;
    ClassifySettings classify;
};

/// Conjugate locus of a 3-dimensional model (constrained hypersurface in R^4
/// or chart n = 3): samples the first-conjugate sheet over the direction
/// sphere, refines directions where the transverse block loses a second rank,
/// classifies them (D4 types), and counts the cusp ridges through each.
Locus3DResult trace_locus_3d(const HamiltonianModel& model, const Vec& base, int n_theta,
                             int n_phi, double t_max, const IntegratorSpec& spec,
                             const Locus3DSettings& settings = {});

/// Builds the time-1 boundary problem whose solution is the conjugate point of
/// the given ray (chart models: Dirichlet planes; constrained: ambient
/// Dirichlet). Exposed so classification and symmetry checks can re-use it.
std::unique_ptr<ResidualMap> conjugate_point_problem(const HamiltonianModel& model,
                                                     const Vec& base, const Vec& direction,
                                                     double t_star, const Vec& endpoint,
                                                     const IntegratorSpec& spec, Vec& u_star);

}  // namespace conjatlas

#endif
