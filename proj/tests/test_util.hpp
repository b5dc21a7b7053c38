#pragma once

#include "moblur/core.hpp"
#include "moblur/rng.hpp"

inline moblur::Planed random_plane(Eigen::Index rows, Eigen::Index cols, moblur::Rng& rng,
                                   double lo = 0.0, double hi = 1.0) {
    moblur::Planed p(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) p(y, x) = rng.uniform(lo, hi);
    return p;
}

inline double max_abs_diff(const moblur::Planed& a, const moblur::Planed& b) {
    return (a - b).abs().maxCoeff();
}
