#ifndef CONJATLAS_TYPES_HPP
#define CONJATLAS_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace conjatlas {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A point (x, y) in 2n-dimensional Darboux coordinates: x position, y momentum.
struct PhasePoint {
    Vec x;
    Vec y;

    PhasePoint() = default;
    PhasePoint(Vec x_, Vec y_) : x(std::move(x_)), y(std::move(y_)) {
        if (x.size() != y.size() || x.size() < 1)
            throw std::invalid_argument("PhasePoint: x and y must have equal length >= 1");
    }

    int dim() const { return static_cast<int>(x.size()); }

    Vec to_vector() const {
        Vec z(2 * x.size());
        z << x, y;
        return z;
    }
    static PhasePoint from_vector(const Vec& z) {
        const auto n = z.size() / 2;
        return PhasePoint(z.head(n), z.tail(n));
    }
};

/// Standard symplectic matrix Omega = [[0, I], [-I, 0]] on R^{2n}.
inline Mat symplectic_matrix(int n) {
    Mat omega = Mat::Zero(2 * n, 2 * n);
    omega.topRightCorner(n, n) = Mat::Identity(n, n);
    omega.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
    return omega;
}

/// || J^T Omega J - Omega ||_inf, the symplecticity defect of a 2n x 2n Jacobian.
inline double symplecticity_defect(const Mat& J) {
    const int n = static_cast<int>(J.rows()) / 2;
    const Mat omega = symplectic_matrix(n);
    return (J.transpose() * omega * J - omega).cwiseAbs().maxCoeff();
}

struct InvalidInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InvalidBoundaryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Thrown when an inner Newton solve inside an integrator fails to converge.
struct IntegrationFailure : std::runtime_error {
    long step_index;
    IntegrationFailure(const std::string& what, long step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_index(step) {}
};

}  // namespace conjatlas

#endif
