#pragma once

#include "moblur/core.hpp"

namespace moblur {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Six-parameter motion model over centered pixel coordinates
// (px, py) = (x - (w-1)/2, y - (h-1)/2):
//   u_x(p) = a1 + a2*py + a3*px
//   u_y(p) = a4 + a5*py + a6*px
// The vector encodes total displacement over the exposure.
struct AffineParams {
    Vec6 a = Vec6::Zero();

    AffineParams() = default;
    explicit AffineParams(const Vec6& v) : a(v) {}
    AffineParams(double a1, double a2, double a3, double a4, double a5, double a6) {
        a << a1, a2, a3, a4, a5, a6;
    }

    static AffineParams translation(double tx, double ty) {
        return AffineParams(tx, 0, 0, ty, 0, 0);
    }

    bool finite() const { return a.allFinite(); }
    bool is_translation(double tol = 0.0) const {
        return std::abs(a[1]) <= tol && std::abs(a[2]) <= tol && std::abs(a[4]) <= tol &&
               std::abs(a[5]) <= tol;
    }

    Vec2 displacement(double px, double py) const {
        return {a[0] + a[1] * py + a[2] * px, a[3] + a[4] * py + a[5] * px};
    }

    AffineParams operator-() const { return AffineParams(Vec6(-a)); }
};

struct MotionField {
    Planed ux, uy;

    Eigen::Index rows() const { return ux.rows(); }
    Eigen::Index cols() const { return ux.cols(); }
    Planed magnitude() const { return (ux.square() + uy.square()).sqrt(); }
    double max_magnitude() const {
        return rows() == 0 ? 0.0 : std::sqrt((ux.square() + uy.square()).maxCoeff());
    }
};

inline double centered_x(Eigen::Index x, Eigen::Index cols) {
    return static_cast<double>(x) - 0.5 * static_cast<double>(cols - 1);
}
inline double centered_y(Eigen::Index y, Eigen::Index rows) {
    return static_cast<double>(y) - 0.5 * static_cast<double>(rows - 1);
}

MotionField motion_field(const AffineParams& a, Eigen::Index rows, Eigen::Index cols);

// Largest |u| over the four image corners; equals the field max for an
// affine (linear-in-coordinates) model.
double max_corner_displacement(const AffineParams& a, Eigen::Index rows, Eigen::Index cols);

}  // namespace moblur
