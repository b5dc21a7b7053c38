#pragma once

#include "moblur/color_gmm.hpp"
#include "moblur/stage1.hpp"

namespace moblur {

// Image-space refinement: motion fixed, segmentation prior augmented with
// foreground/background color mixtures.
struct Stage2Problem {
    Stage1Problem core;  // single intensity channel; lambda0 usually 0 here
    Image color;         // 3-channel image at this level's resolution
    AffineParams a;      // fixed motion from stage 1, at this level's scale
    double lambda_c = 0.5;
};

// lambda_c * (-log GMM(y|theta_f) + log GMM(y|theta_b)) per pixel.
Planed color_unary(const Stage2Problem& problem, const ColorGmm& fg, const ColorGmm& bg);

// g~ = g + color_unary.
Planed augmented_unaries(const Stage2Problem& problem, const PosteriorState& state,
                         const BlurOperator& K, const ColorGmm& fg, const ColorGmm& bg);

// F~ = F - lambda_c sum_i r_i log GMM(y_i|f) + (1-r_i) log GMM(y_i|b).
double stage2_free_energy(const Stage2Problem& problem, const PosteriorState& state,
                          const BlurOperator& K, const ColorGmm& fg, const ColorGmm& bg);

struct Stage2Result {
    PosteriorState state;
    ColorGmm fg, bg;
    Planed latent_mean;  // cropped to observation dims
};

// Alternates indicator/image/segmentation updates with one weighted EM pass
// per color model; the augmented free energy is non-increasing over accepted
// steps. Trace steps are tagged ind2/img2/seg2/em.
Stage2Result run_stage2_level(const Stage2Problem& problem, PosteriorState state, ColorGmm fg,
                              ColorGmm bg, int iters, int level_index, Diagnostics& diag,
                              double early_stop_rel = 1e-4);

}  // namespace moblur
