#pragma once

#include "moblur/affine.hpp"
#include "moblur/core.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace moblur {

// One pixel's blur kernel: weights over the integer offset window
// [-rx,rx]x[-ry,ry], normalized to sum 1 and point-symmetric.
struct BlurKernel {
    int rx = 0, ry = 0;
    Planed weights;        // (2ry+1) x (2rx+1), indexed (dy+ry, dx+rx)
    double normalizer = 0; // Z before normalization

    double at(int dy, int dx) const { return weights(dy + ry, dx + rx); }
    double sum() const { return weights.sum(); }
};

// Direction-derivative fields of a normalized kernel. The six parameter
// derivatives are coordinate-scaled copies:
//   dk/da1 = gx, dk/da2 = py*gx, dk/da3 = px*gx,
//   dk/da4 = gy, dk/da5 = py*gy, dk/da6 = px*gy.
struct BlurKernelGrad {
    int rx = 0, ry = 0;
    Planed gx, gy;
    std::array<Planed, 6> dk;
};

// Number of Eq.-style discretization intervals for a maximum displacement;
// even, so the sample count is odd and one sample hits the path center.
int auto_time_steps(double max_displacement);

// Kernel for a single displacement vector u (total motion over the exposure).
BlurKernel build_kernel(const Vec2& u, double c, int T);
BlurKernel build_kernel(const AffineParams& a, Eigen::Index y, Eigen::Index x,
                        Eigen::Index rows, Eigen::Index cols, double c, int T);
BlurKernelGrad build_kernel_grad(const AffineParams& a, Eigen::Index y, Eigen::Index x,
                                 Eigen::Index rows, Eigen::Index cols, double c, int T);

struct BlurOperatorOptions {
    double c = 1.5;      // psf width, in [1,2]
    int time_steps = 0;  // 0 = auto from the max field displacement
};

// Implicit blur matrix K^a over an observation grid: row i holds pixel i's
// kernel scattered at its support in the padded latent grid. Apply-style
// members are safe to call concurrently once constructed (and once
// ensure_derivatives() has run, for the derivative-based ones).
class BlurOperator {
public:
    BlurOperator(const AffineParams& a, Eigen::Index obs_rows, Eigen::Index obs_cols, int pad,
                 BlurOperatorOptions opt = {});

    const AffineParams& params() const { return a_; }
    const CropOperator& crop() const { return crop_; }
    const MotionField& field() const { return field_; }
    double psf_width() const { return c_; }
    int time_steps() const { return T_; }
    int pad() const { return crop_.pad; }
    int max_half_extent() const { return max_half_extent_; }

    // Smallest pad that keeps every kernel tap inside the latent grid, plus
    // the ceil(c) margin the crop bookkeeping carries.
    static int required_pad(const AffineParams& a, Eigen::Index obs_rows, Eigen::Index obs_cols,
                            double c);

    Planed apply(const Planed& latent) const;            // K x
    Planed apply_transpose(const Planed& obs) const;     // K^T v
    Planed apply_squared(const Planed& latent) const;    // (K o K) sigma
    // diag(K^T diag(r) K) on the latent grid
    Planed weighted_square_diag(const Planed& r_obs) const;

    void ensure_derivatives();
    bool has_derivatives() const { return !gx_.empty(); }

    // Directional gathers (dK/du_x x, dK/du_y x); the six jacobian columns
    // are coordinate-scaled copies of these.
    void jacobian_gathers(const Planed& latent, Planed& jx, Planed& jy) const;
    std::array<Planed, 6> jacobian_apply(const Planed& latent) const;

    // H0_ij = r^T (dK/da_i o dK/da_j) sigma,  h0_i = r^T (dK/da_i o K) sigma
    void gauss_newton_terms(const Planed& sigma_latent, const Planed& r_obs, Mat6& H0,
                            Vec6& h0) const;

    BlurKernel kernel_at(Eigen::Index y, Eigen::Index x) const;
    BlurKernelGrad kernel_grad_at(Eigen::Index y, Eigen::Index x) const;

private:
    void build_weights(bool with_grads);
    std::size_t block_index(Eigen::Index y, Eigen::Index x) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(cols_) +
               static_cast<std::size_t>(x);
    }

    AffineParams a_;
    Eigen::Index rows_ = 0, cols_ = 0;
    CropOperator crop_;
    double c_ = 1.5;
    int T_ = 6;
    int max_half_extent_ = 0;
    MotionField field_;

    std::vector<std::int32_t> rx_, ry_;
    std::vector<std::size_t> off_;  // per pixel start into w_/gx_/gy_, plus end sentinel
    std::vector<double> w_;
    std::vector<double> gx_, gy_;   // empty until ensure_derivatives()
};

}  // namespace moblur
