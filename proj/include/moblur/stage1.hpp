#pragma once

#include "moblur/blur_operator.hpp"
#include "moblur/core.hpp"
#include "moblur/gsm.hpp"
#include "moblur/potts.hpp"

#include <optional>
#include <string>
#include <vector>

namespace moblur {

struct InferenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoiseModel {
    double sigma_n = 0.01;  // observation noise std, intensity units
};

// Gaussian q(x) moments plus per-filter scale indicators for one channel.
struct ChannelState {
    Planed mu;                            // latent grid
    Planed sigma;                         // latent grid, >= 0
    std::vector<std::vector<Planed>> v;   // [gamma][j], latent grid
};

struct PosteriorState {
    std::vector<ChannelState> ch;
    Planed r;  // observation grid, clamped to [kREps, 1-kREps]
    static constexpr double kREps = 1e-6;
};

// One inference level: observation channels (the two gradient planes in
// stage 1, a single intensity plane in stage 2), priors, noise, and the
// padded-latent bookkeeping. The blur operator is built per motion estimate.
struct Stage1Problem {
    std::vector<Planed> obs;
    GsmPrior gsm;
    PottsPrior potts;
    NoiseModel noise;
    CropOperator crop;
    BlurOperatorOptions kopt;  // fixed psf width and time steps for the level

    double cg_tol = 1e-6;
    int cg_max_iters = 200;
    double armijo_sigma = 1e-4;
    double armijo_beta = 0.5;
    int armijo_max_backtracks = 20;
    double levenberg_tau_init = 1e-3;
    double seg_damping = 1.0;

    Eigen::Index obs_rows() const { return crop.obs_rows; }
    Eigen::Index obs_cols() const { return crop.obs_cols; }
    int channels() const { return static_cast<int>(obs.size()); }

    BlurOperator make_operator(const AffineParams& a) const {
        return BlurOperator(a, obs_rows(), obs_cols(), crop.pad, kopt);
    }
};

struct StepRecord {
    int level = 0;
    int iter = 0;
    std::string step;
    double F = 0;
    double delta_F = 0;
    Vec6 a = Vec6::Zero();
};

struct Diagnostics {
    std::vector<StepRecord> trace;
    std::vector<std::string> warnings;

    void record(int level, int iter, const std::string& step, double F, const Vec6& a);
    std::string to_tsv() const;  // header + one line per sub-step
};

struct MotionOptState {
    double tau = 1e-3;  // Levenberg damping, raised x10 when no step is accepted
};

// Fresh state: r = 1/2, v uniform, mu = replicate-padded observation,
// sigma = sigma_n^2.
PosteriorState init_posterior(const Stage1Problem& problem);

double free_energy(const Stage1Problem& problem, const PosteriorState& state,
                   const BlurOperator& K);
double free_energy(const Stage1Problem& problem, const PosteriorState& state,
                   const AffineParams& a);
// Only the terms of the expected log-likelihood that depend on a; differences
// over a equal free-energy differences.
double motion_likelihood_energy(const Stage1Problem& problem, const PosteriorState& state,
                                const BlurOperator& K);

// Closed-form scale-indicator update (exact conditional minimizer).
void update_indicators(const Stage1Problem& problem, PosteriorState& state);

// mu by preconditioned CG on the normal equations, sigma as the exact inverse
// diagonal. Warm-started, so a repeated call is a no-op.
void update_image(const Stage1Problem& problem, PosteriorState& state, const BlurOperator& K,
                  Diagnostics* diag = nullptr);

// Per-pixel unaries g: bias + expected blurry-explanation cost minus
// sharp-explanation cost, summed over channels.
Planed segmentation_unaries(const Stage1Problem& problem, const PosteriorState& state,
                            const BlurOperator& K);

// One damped variational-message-passing sweep; extra_unary (stage 2's color
// term) is added to g when present.
void update_segmentation(const Stage1Problem& problem, PosteriorState& state,
                         const BlurOperator& K, const Planed* extra_unary = nullptr);

struct MotionStepResult {
    AffineParams a;
    bool accepted = false;
    std::optional<BlurOperator> op;  // operator at the accepted a
};

// Quadratic model of the a-dependent free-energy terms around K's operating
// point: F(a0 + d) ~ 1/2 d^T A0 d + d^T b0 + const, so b0 is the free-energy
// gradient over a. Requires K.ensure_derivatives().
void motion_quadratic_model(const Stage1Problem& problem, const PosteriorState& state,
                            const BlurOperator& K, Mat6& A0, Vec6& b0);

// Gauss-Newton step on the linearized blur operator with Levenberg damping
// and Armijo backtracking; never increases the free energy. Throws
// InferenceError when the linearization is degenerate (e.g. a == 0).
MotionStepResult update_motion(const Stage1Problem& problem, const PosteriorState& state,
                               BlurOperator& K, MotionOptState& opt,
                               Diagnostics* diag = nullptr);

struct LevelResult {
    PosteriorState state;
    AffineParams a;
};

LevelResult run_stage1_level(const Stage1Problem& problem, PosteriorState state, AffineParams a,
                             int iters, int level_index, Diagnostics& diag,
                             double early_stop_rel = 1e-4);

}  // namespace moblur
