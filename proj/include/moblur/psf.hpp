#pragma once

#include <Eigen/Dense>

namespace moblur {

// Tukey biweight bump: compactly supported on ||xi - mu|| <= c, c in [1,2],
// and differentiable everywhere including the support boundary.
template <typename Scalar>
Scalar psf(const Eigen::Matrix<Scalar, 2, 1>& xi, const Eigen::Matrix<Scalar, 2, 1>& mu,
           Scalar c) {
    const Scalar d2 = (xi - mu).squaredNorm();
    const Scalar c2 = c * c;
    if (d2 > c2) return Scalar(0);
    const Scalar t = Scalar(1) - d2 / c2;
    return t * t;
}

// d psf / d mu; zero outside the support and continuous at the boundary.
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> psf_grad(const Eigen::Matrix<Scalar, 2, 1>& xi,
                                     const Eigen::Matrix<Scalar, 2, 1>& mu, Scalar c) {
    const Eigen::Matrix<Scalar, 2, 1> d = xi - mu;
    const Scalar d2 = d.squaredNorm();
    const Scalar c2 = c * c;
    if (d2 > c2) return Eigen::Matrix<Scalar, 2, 1>::Zero();
    return Scalar(4) / c2 * (Scalar(1) - d2 / c2) * d;
}

}  // namespace moblur
