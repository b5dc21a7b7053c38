#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace moblur {

template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Primary scalar plane: (row, col) = (y, x), so cols() is width.
using Planed = Plane<double>;
using Vec2 = Eigen::Vector2d;

enum class Domain { intensity, gradient };

// 1- or 3-channel image with intensities nominally in [0,1]; gradient-domain
// planes may leave that range.
struct Image {
    std::vector<Planed> planes;
    Domain domain = Domain::intensity;

    Image() = default;
    explicit Image(Planed p, Domain d = Domain::intensity) : domain(d) {
        planes.push_back(std::move(p));
    }

    int channels() const { return static_cast<int>(planes.size()); }
    Eigen::Index height() const { return planes.empty() ? 0 : planes[0].rows(); }
    Eigen::Index width() const { return planes.empty() ? 0 : planes[0].cols(); }
    const Planed& plane(int c = 0) const { return planes.at(c); }
    Planed& plane(int c = 0) { return planes.at(c); }
};

struct GradientPair {
    Planed dx, dy;
};

struct Pyramid {
    std::vector<Planed> levels;  // [0] full resolution, coarsest last
    double scale_factor = 0.5;
    int num_levels() const { return static_cast<int>(levels.size()); }
};

// Maps the padded latent index space onto the observation index space:
// latent dims == observation dims + 2*pad per axis.
struct CropOperator {
    int pad = 0;
    Eigen::Index obs_rows = 0, obs_cols = 0;

    CropOperator() = default;
    CropOperator(int pad_, Eigen::Index rows, Eigen::Index cols)
        : pad(pad_), obs_rows(rows), obs_cols(cols) {}

    Eigen::Index latent_rows() const { return obs_rows + 2 * pad; }
    Eigen::Index latent_cols() const { return obs_cols + 2 * pad; }

    Planed crop(const Planed& latent) const;      // I_y x
    Planed uncrop(const Planed& obs) const;       // I_y^T v (zero pad)
    Planed pad_replicate(const Planed& obs) const;
};

struct FilterStencil {
    std::string id;
    // taps: (dy, dx, weight); weights sum to 0 for derivative filters
    std::vector<std::array<double, 3>> taps;
};

struct DerivativeFilterBank {
    std::vector<FilterStencil> filters;
    int size() const { return static_cast<int>(filters.size()); }

    // Forward differences in x and y, the default Gamma = 2 bank.
    static DerivativeFilterBank forward_differences();
};

// Response of one stencil over a plane. Rows whose taps would leave the plane
// are zero, matching the gradient convention below.
Planed apply_filter(const FilterStencil& f, const Planed& x);
// Adjoint (scatter) of apply_filter.
Planed apply_filter_transpose(const FilterStencil& f, const Planed& v);
// (D o D) sigma: squared-tap gather, used for expected squared responses.
Planed apply_filter_squared(const FilterStencil& f, const Planed& sigma);
// diag(D^T diag(w) D)
Planed filter_normal_diag(const FilterStencil& f, const Planed& w);

// Rec.601 luma of a 3-channel image (identity on single-channel input).
Planed luma(const Image& img);

// Forward differences, zero on the last column (dx) / row (dy).
GradientPair to_gradient_domain(const Image& img);
GradientPair to_gradient_domain(const Planed& img);

// Exact inverse of to_gradient_domain given the original top-left sample.
Planed integrate_gradients(const GradientPair& g, const Planed& original);

// 3x3 binomial antialias followed by bilinear resampling to ceil(dims/2).
Planed downsample_half(const Planed& img);
Planed resize_bilinear(const Planed& img, Eigen::Index rows, Eigen::Index cols);

// Halve while min(dims) > min_dim; every produced level is kept.
Pyramid build_pyramid(const Planed& img, int min_dim = 32);

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace moblur
