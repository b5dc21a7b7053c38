#pragma once

#include "moblur/stage1.hpp"
#include "moblur/stage2.hpp"

#include <string>

namespace moblur {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Every tunable, loadable from flat key=value text; unknown keys and
// out-of-range values are rejected. CLI flags of the same name override.
struct Config {
    double c = 1.5;
    int time_steps = 0;  // 0 = auto per level
    double sigma_n = 0.01;
    double sigma_n_coarse = 0.05;
    double lambda = 2.0;
    double lambda0 = 0.05;
    double lambda0_stage2 = 0.0;
    double lambda_c = 0.5;
    std::string gsm_file;  // empty = shipped default parameters
    int min_dim = 32;
    int stage1_iters = 10;
    int stage2_iters = 6;
    double init_translation = 0.5;
    std::string init_axis = "x";
    double armijo_sigma = 1e-4;
    double armijo_beta = 0.5;
    int armijo_max_backtracks = 20;
    double levenberg_tau = 1e-3;
    double cg_tol = 1e-6;
    int cg_max_iters = 200;
    double seg_damping = 1.0;
    int gmm_components = 5;
    unsigned long long seed = 0;
    int threads = 0;  // 0 = hardware concurrency

    void set(const std::string& key, const std::string& value);
    void validate() const;
    static Config load(const std::string& path);          // validates
    void apply_file(const std::string& path);             // overlay, then validate
    static const std::vector<std::string>& key_names();
};

struct Result {
    AffineParams a;      // full-resolution scale
    Planed mask;         // r thresholded at 0.5 (values 0/1)
    Planed r;            // continuous foreground probability
    MotionField field;   // motion_field(a, image dims)
    Planed latent_mean;  // stage-2 latent mean, intensity domain
    Diagnostics diag;
};

// r = 1/2, v uniform, mu = padded observation, sigma = sigma_n^2, and a small
// translation along cfg.init_axis. A zero translation is rejected: the motion
// linearization is singular at a = 0.
std::pair<PosteriorState, AffineParams> initialize(const Stage1Problem& problem,
                                                   const Config& cfg);

// Doubles translations, keeps the linear coefficients (scale-invariant under
// centered coordinates), bilinearly upsamples r/mu/sigma and resets v.
std::pair<PosteriorState, AffineParams> propagate_level(const PosteriorState& state,
                                                        const AffineParams& a,
                                                        const CropOperator& from,
                                                        const CropOperator& to);

// Full two-stage coarse-to-fine estimate. Deterministic given cfg.seed and
// independent of cfg.threads.
Result estimate(const Image& image, const Config& cfg);

}  // namespace moblur
