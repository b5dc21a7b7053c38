#pragma once

#include "moblur/affine.hpp"
#include "moblur/blur_operator.hpp"
#include "moblur/core.hpp"

#include <vector>

namespace moblur {

// Color-wheel encoding: hue from the flow angle, saturation from the
// magnitude normalized by the per-image maximum; zero motion is white.
Image flow_to_color(const MotionField& field);

// Grayscale image with the color-coded field blended inside the mask.
Image flow_overlay(const Planed& gray, const MotionField& field, const Planed& mask);

// Tile grid of per-location kernels. which = -1 renders the kernel itself
// (dark on white); 0..5 renders dk/da_p with red positive / blue negative.
Image kernel_montage(const AffineParams& a, Eigen::Index rows, Eigen::Index cols, double c,
                     int T, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& locations,
                     int which = -1);

}  // namespace moblur
