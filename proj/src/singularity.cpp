#include "conjatlas/singularity.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace conjatlas {

std::string to_string(SingularityType type) {
    switch (type) {
        case SingularityType::A1: return "A1";
        case SingularityType::A2: return "A2";
        case SingularityType::A3: return "A3";
        case SingularityType::A4: return "A4";
        case SingularityType::A5: return "A5";
        case SingularityType::D4_minus: return "D4_minus";
        case SingularityType::D4_plus: return "D4_plus";
        case SingularityType::unresolved: return "unresolved";
    }
    return "unresolved";
}

DegeneracyResult degeneracy(const Mat& Dr, double sigma_threshold_rel) {
    const int n = static_cast<int>(Dr.rows());
    Eigen::JacobiSVD<Mat> svd(Dr, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec sv = svd.singularValues();
    const double smax = sv(0);

    DegeneracyResult result;
    result.singular_values = sv;
    if (smax == 0.0) {
        result.m = n;
        result.kernel = svd.matrixV();
        result.cokernel = svd.matrixU();
        return result;
    }
    int m = 0;
    for (int i = 0; i < n; ++i)
        if (sv(i) < sigma_threshold_rel * smax) ++m;
    result.m = m;
    result.kernel = svd.matrixV().rightCols(m);
    result.cokernel = svd.matrixU().rightCols(m);
    return result;
}

namespace {

// Rotates the cokernel basis onto the kernel basis (orthogonal Procrustes).
// The zero-singular-value subspaces of U and V are computed independently by
// the SVD, so without alignment the reduced components <w_i, r> would mix an
// arbitrary rotation into the Lyapunov-Schmidt coordinates.
Mat align_cokernel(const Mat& kernel, const Mat& cokernel) {
    if (kernel.cols() == 0) return cokernel;
    Eigen::JacobiSVD<Mat> svd(Mat(cokernel.transpose() * kernel),
                              Eigen::ComputeFullU | Eigen::ComputeFullV);
    return cokernel * (svd.matrixU() * svd.matrixV().transpose());
}

// Branch evaluator: corrects the complement component by Newton so that the
// residual is zero transversally to the cokernel, then reads off the reduced
// scalar components <w_i, r>.
class BranchEvaluator {
  public:
    BranchEvaluator(const ResidualMap& map, Vec u_star, Mat kernel, Mat cokernel,
                    const ClassifySettings& settings)
        : map_(&map),
          u_star_(std::move(u_star)),
          V_(std::move(kernel)),
          W_(std::move(cokernel)),
          settings_(settings) {
        const int n = map.dim();
        const int m = static_cast<int>(V_.cols());
        // Orthonormal complements from a full SVD of the projectors.
        Eigen::JacobiSVD<Mat> svd_v(Mat(Mat::Identity(n, n) - V_ * V_.transpose()),
                                    Eigen::ComputeFullU);
        Z_ = svd_v.matrixU().leftCols(n - m);
        Eigen::JacobiSVD<Mat> svd_w(Mat(Mat::Identity(n, n) - W_ * W_.transpose()),
                                    Eigen::ComputeFullU);
        Wp_ = svd_w.matrixU().leftCols(n - m);
        q_warm_ = Vec::Zero(n - m);
    }

    /// Reduced components at kernel offset s (length = kernel dimension).
    /// Returns false when the complement Newton fails to converge.
    bool evaluate(const Vec& s, Vec& c_out) {
        const int nc = static_cast<int>(Z_.cols());
        Vec q = q_warm_;
        Vec r;
        if (nc == 0) {
            r = map_->residual(u_star_ + V_ * s);
        } else {
            bool converged = false;
            for (int it = 0; it < settings_.branch_max_iter; ++it) {
                const Vec u = u_star_ + V_ * s + Z_ * q;
                auto [res, jac] = map_->residual_and_jacobian(u);
                r = res;
                const Vec F = Wp_.transpose() * r;
                if (F.cwiseAbs().maxCoeff() <= settings_.branch_tol * (1.0 + s.norm())) {
                    converged = true;
                    break;
                }
                const Mat JF = Wp_.transpose() * jac * Z_;
                q -= JF.partialPivLu().solve(F);
            }
            if (!converged) return false;
            q_warm_ = q;
        }
        c_out = W_.transpose() * r;
        return true;
    }

    void reset_warm_start() { q_warm_.setZero(); }

  private:
    const ResidualMap* map_;
    Vec u_star_;
    Mat V_, W_, Z_, Wp_;
    ClassifySettings settings_;
    Vec q_warm_;
};

// Taylor coefficients t_1..t_6 of a scalar branch from samples at
// s = {-3,-2,-1,1,2,3} * delta, via the scaled Vandermonde system.
struct TaylorFit {
    std::array<double, 6> coeff;      // t_k = c^(k)(0) / k!
    std::array<double, 6> noise_amp;  // |row sums| of the inverse, per k
};

TaylorFit fit_taylor(const std::array<double, 6>& samples, double delta) {
    static const std::array<double, 6> nodes = {-3.0, -2.0, -1.0, 1.0, 2.0, 3.0};
    static Mat inverse = [] {
        Mat M(6, 6);
        for (int i = 0; i < 6; ++i) {
            double p = 1.0;
            for (int k = 0; k < 6; ++k) {
                p *= nodes[i];
                M(i, k) = p;
            }
        }
        return Mat(M.inverse());
    }();

    TaylorFit fit;
    Vec b(6);
    for (int i = 0; i < 6; ++i) b(i) = samples[i];
    const Vec tau = inverse * b;
    double dk = 1.0;
    for (int k = 0; k < 6; ++k) {
        dk *= delta;
        fit.coeff[k] = tau(k) / dk;
        fit.noise_amp[k] = inverse.row(k).cwiseAbs().sum() / dk;
    }
    return fit;
}

double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

void classify_corank_one(const ResidualMap& map, const Vec& u_star,
                         const ClassifySettings& settings, SingularityReport& report) {
    BranchEvaluator branch(map, u_star, report.kernel, report.cokernel, settings);

    Vec c0(1);
    if (!branch.evaluate(Vec::Zero(1), c0)) {
        report.note = "branch correction did not converge at the base point";
        return;
    }

    struct LadderResult {
        std::array<double, 4> c{};      // c2..c5
        std::array<double, 4> floor{};  // matching noise floors
        int first_above = -1;
        bool ok = false;
    };
    std::array<LadderResult, 2> ladder;

    for (int li = 0; li < 2; ++li) {
        const double delta = settings.fd_ladder[li];
        std::array<double, 6> samples{};
        static const std::array<double, 6> nodes = {-3.0, -2.0, -1.0, 1.0, 2.0, 3.0};
        bool all_ok = true;
        // Walk outward per sign so the complement Newton warm-starts follow
        // the branch continuously.
        for (int half = 0; half < 2 && all_ok; ++half) {
            branch.reset_warm_start();
            const std::array<int, 3> order =
                half == 0 ? std::array<int, 3>{3, 4, 5} : std::array<int, 3>{2, 1, 0};
            for (int idx : order) {
                Vec s(1), c(1);
                s(0) = nodes[idx] * delta;
                if (!branch.evaluate(s, c)) {
                    all_ok = false;
                    break;
                }
                samples[idx] = c(0) - c0(0);
            }
        }
        if (!all_ok) continue;

        const TaylorFit fit = fit_taylor(samples, delta);
        LadderResult& lr = ladder[li];
        lr.ok = true;
        for (int k = 2; k <= 5; ++k) {
            lr.c[k - 2] = factorial(k) * fit.coeff[k - 1];
            lr.floor[k - 2] =
                settings.safety * settings.eval_noise * factorial(k) * fit.noise_amp[k - 1];
            if (lr.first_above < 0 && std::abs(lr.c[k - 2]) > lr.floor[k - 2]) lr.first_above = k;
        }
    }

    if (ladder[0].ok) {
        report.has_derivatives = true;
        report.derivatives = ladder[0].c;
        report.noise_floor = ladder[0].floor;
    }
    if (!ladder[0].ok || !ladder[1].ok) {
        report.note = "branch sampling failed on the step ladder";
        return;
    }
    const int k = ladder[0].first_above;  // the larger step has the lower floors
    if (k < 0) {
        report.note = "no reduced derivative above the noise floor";
        return;
    }
    const double c_a = ladder[0].c[k - 2], c_b = ladder[1].c[k - 2];
    if (ladder[1].first_above == k) {
        const double ratio = std::abs(c_a) / std::abs(c_b);
        if (c_a * c_b <= 0.0 || ratio < 1.0 / 3.0 || ratio > 3.0) {
            report.note = "leading derivative inconsistent across the step ladder";
            return;
        }
    } else if (ladder[1].first_above < 0) {
        // The finer step resolves nothing on its own (floors grow like
        // delta^-k); accept only if its raw estimate closely matches.
        if (std::abs(c_b - c_a) > 0.3 * std::abs(c_a)) {
            report.note = "leading derivative inconsistent across the step ladder";
            return;
        }
    } else {
        report.note = "step ladder disagrees on the leading order";
        return;
    }
    switch (k) {
        case 2: report.type = SingularityType::A2; break;
        case 3: report.type = SingularityType::A3; break;
        case 4: report.type = SingularityType::A4; break;
        case 5: report.type = SingularityType::A5; break;
        default: break;
    }
}

struct CubicEstimate {
    std::array<double, 4> cubic{};  // a, b, c, d
    double asymmetry = 0.0;         // relative conservativity defect
    double scale = 0.0;
    double floor = 0.0;
    bool ok = false;
};

CubicEstimate estimate_cubic(BranchEvaluator& branch, const Vec& c0, double delta,
                             const ClassifySettings& settings) {
    CubicEstimate est;
    // Q[i](j,k) = d^2 c_i / ds_j ds_k by central differences.
    auto sample = [&](double s1, double s2, Vec& c) {
        Vec s(2);
        s << s1, s2;
        branch.reset_warm_start();
        if (!branch.evaluate(s, c)) return false;
        c -= c0;
        return true;
    };
    Vec cp0(2), cm0(2), c0p(2), c0m(2), cpp(2), cpm(2), cmp(2), cmm(2);
    if (!sample(delta, 0, cp0) || !sample(-delta, 0, cm0) || !sample(0, delta, c0p) ||
        !sample(0, -delta, c0m) || !sample(delta, delta, cpp) || !sample(delta, -delta, cpm) ||
        !sample(-delta, delta, cmp) || !sample(-delta, -delta, cmm))
        return est;

    const double d2 = delta * delta;
    Mat Q1(2, 2), Q2(2, 2);
    Q1(0, 0) = (cp0(0) + cm0(0)) / d2;
    Q1(1, 1) = (c0p(0) + c0m(0)) / d2;
    Q1(0, 1) = Q1(1, 0) = (cpp(0) - cpm(0) - cmp(0) + cmm(0)) / (4 * d2);
    Q2(0, 0) = (cp0(1) + cm0(1)) / d2;
    Q2(1, 1) = (c0p(1) + c0m(1)) / d2;
    Q2(0, 1) = Q2(1, 0) = (cpp(1) - cpm(1) - cmp(1) + cmm(1)) / (4 * d2);

    // Fully symmetric third derivatives B_ijk of the reduced potential.
    const double B111 = Q1(0, 0);
    const double B112 = (2.0 * Q1(0, 1) + Q2(0, 0)) / 3.0;
    const double B122 = (Q1(1, 1) + 2.0 * Q2(0, 1)) / 3.0;
    const double B222 = Q2(1, 1);
    est.cubic = {B111, 3.0 * B112, 3.0 * B122, B222};
    est.scale = std::max({std::abs(B111), std::abs(B112), std::abs(B122), std::abs(B222)});
    est.floor = settings.safety * settings.eval_noise * 4.0 / d2;
    // Conservativity demands d2c_2/ds1^2 = d2c_1/ds1ds2 and symmetrically.
    const double asym =
        std::max(std::abs(Q2(0, 0) - Q1(0, 1)), std::abs(Q1(1, 1) - Q2(0, 1)));
    est.asymmetry = est.scale > 0 ? asym / est.scale : 0.0;
    est.ok = true;
    return est;
}

// Discriminant of the quadratic form det Hess(C) for the binary cubic
// C = a x^3 + b x^2 y + c x y^2 + d y^3. Negative iff det Hess is definite
// (elliptic umbilic), positive iff indefinite (hyperbolic umbilic).
double cubic_hessian_discriminant(const std::array<double, 4>& f) {
    const double a = f[0], b = f[1], c = f[2], d = f[3];
    return (9 * a * d - b * c) * (9 * a * d - b * c) -
           4 * (3 * a * c - b * b) * (3 * b * d - c * c);
}

void classify_corank_two(const ResidualMap& map, const Vec& u_star,
                         const ClassifySettings& settings, SingularityReport& report) {
    BranchEvaluator branch(map, u_star, report.kernel, report.cokernel, settings);
    Vec c0(2);
    if (!branch.evaluate(Vec::Zero(2), c0)) {
        report.note = "branch correction did not converge at the base point";
        return;
    }

    std::array<CubicEstimate, 2> est;
    for (int li = 0; li < 2; ++li)
        est[li] = estimate_cubic(branch, c0, settings.fd_ladder[li], settings);
    if (!est[0].ok || !est[1].ok) {
        report.note = "branch sampling failed on the step ladder";
        return;
    }

    report.has_cubic = true;
    report.cubic = est[0].cubic;
    report.cubic_asymmetry = est[0].asymmetry;
    const double disc = cubic_hessian_discriminant(est[0].cubic);
    double norm2 = 0.0;
    for (double v : est[0].cubic) norm2 += v * v;
    report.cubic_discriminant = norm2 > 0 ? disc / (norm2 * norm2) : 0.0;

    if (est[0].scale <= est[0].floor || est[1].scale <= est[1].floor) {
        report.note = "cubic form below the noise floor";
        return;
    }
    if (est[0].asymmetry > settings.cubic_asymmetry_tol ||
        est[1].asymmetry > settings.cubic_asymmetry_tol) {
        report.note = "reduced map is not conservative within tolerance";
        return;
    }
    const double disc_b = cubic_hessian_discriminant(est[1].cubic);
    double norm2_b = 0.0;
    for (double v : est[1].cubic) norm2_b += v * v;
    const double disc_n = report.cubic_discriminant;
    const double disc_n_b = norm2_b > 0 ? disc_b / (norm2_b * norm2_b) : 0.0;
    if (std::abs(disc_n) < settings.cubic_disc_tol ||
        std::abs(disc_n_b) < settings.cubic_disc_tol || disc_n * disc_n_b <= 0.0) {
        report.note = "cubic discriminant unresolved";
        return;
    }
    report.type = disc_n < 0.0 ? SingularityType::D4_minus : SingularityType::D4_plus;
}

std::string fmt12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

SingularityReport classify(const ResidualMap& map, const Vec& u_star,
                           const ClassifySettings& settings) {
    SingularityReport report;
    report.u = u_star;

    auto [r, Dr] = map.residual_and_jacobian(u_star);
    report.residual_norm = r.norm();
    const DegeneracyResult deg = degeneracy(Dr, settings.sigma_threshold_rel);
    report.m = deg.m;
    report.kernel = deg.kernel;
    report.cokernel = align_cokernel(deg.kernel, deg.cokernel);
    report.singular_values = deg.singular_values;

    if (deg.m == 0) {
        report.type = SingularityType::A1;
        return report;
    }
    if (deg.m == 1) {
        classify_corank_one(map, u_star, settings, report);
        return report;
    }
    if (deg.m == 2) {
        classify_corank_two(map, u_star, settings, report);
        return report;
    }
    report.note = "degeneracy above 2: reported without a type";
    return report;
}

std::string report_to_json(const SingularityReport& report) {
    std::ostringstream os;
    os << "{\n  \"m\": " << report.m << ",\n  \"type\": \"" << to_string(report.type) << "\"";
    if (report.kernel.cols() > 0) {
        os << ",\n  \"kernel\": [";
        for (int j = 0; j < report.kernel.cols(); ++j) {
            os << (j ? ", [" : "[");
            for (int i = 0; i < report.kernel.rows(); ++i)
                os << (i ? ", " : "") << fmt12(report.kernel(i, j));
            os << "]";
        }
        os << "]";
    }
    if (report.has_derivatives) {
        os << ",\n  \"derivatives\": {";
        const char* names[4] = {"c2", "c3", "c4", "c5"};
        for (int k = 0; k < 4; ++k)
            os << (k ? ", " : "") << "\"" << names[k] << "\": " << fmt12(report.derivatives[k]);
        os << "}";
    }
    if (report.has_cubic)
        os << ",\n  \"cubic_discriminant\": " << fmt12(report.cubic_discriminant);
    if (!report.note.empty()) os << ",\n  \"note\": \"" << report.note << "\"";
    os << "\n}\n";
    return os.str();
}

}  // namespace conjatlas
