#include "moblur/stage2.hpp"

namespace moblur {

Planed color_unary(const Stage2Problem& problem, const ColorGmm& fg, const ColorGmm& bg) {
    if (problem.lambda_c == 0.0)
        return Planed::Zero(problem.core.obs_rows(), problem.core.obs_cols());
    return problem.lambda_c *
           (gmm_loglik_map(bg, problem.color) - gmm_loglik_map(fg, problem.color));
}

Planed augmented_unaries(const Stage2Problem& problem, const PosteriorState& state,
                         const BlurOperator& K, const ColorGmm& fg, const ColorGmm& bg) {
    return segmentation_unaries(problem.core, state, K) + color_unary(problem, fg, bg);
}

double stage2_free_energy(const Stage2Problem& problem, const PosteriorState& state,
                          const BlurOperator& K, const ColorGmm& fg, const ColorGmm& bg) {
    double F = free_energy(problem.core, state, K);
    if (problem.lambda_c != 0.0) {
        const Planed lf = gmm_loglik_map(fg, problem.color);
        const Planed lb = gmm_loglik_map(bg, problem.color);
        F -= problem.lambda_c * ((state.r * lf).sum() + ((1.0 - state.r) * lb).sum());
    }
    return F;
}

Stage2Result run_stage2_level(const Stage2Problem& problem, PosteriorState state, ColorGmm fg,
                              ColorGmm bg, int iters, int level_index, Diagnostics& diag,
                              double early_stop_rel) {
    require(problem.core.channels() == 1, "stage 2 runs on the intensity channel");
    require(problem.lambda_c >= 0, "lambda_c >= 0");
    require(iters >= 1, "run_stage2_level: iters >= 1");
    const BlurOperator K = problem.core.make_operator(problem.a);
    const Eigen::Matrix3Xd pixels = image_as_pixels(problem.color);

    auto weights_of = [&](const Planed& r, bool foreground) {
        Eigen::VectorXd w(pixels.cols());
        Eigen::Index i = 0;
        for (Eigen::Index y = 0; y < r.rows(); ++y)
            for (Eigen::Index x = 0; x < r.cols(); ++x, ++i)
                w[i] = foreground ? r(y, x) : 1.0 - r(y, x);
        return w;
    };

    double F_prev_outer = stage2_free_energy(problem, state, K, fg, bg);
    for (int it = 1; it <= iters; ++it) {
        update_indicators(problem.core, state);
        diag.record(level_index, it, "ind2", stage2_free_energy(problem, state, K, fg, bg),
                    problem.a.a);
        update_image(problem.core, state, K, &diag);
        diag.record(level_index, it, "img2", stage2_free_energy(problem, state, K, fg, bg),
                    problem.a.a);
        const Planed cu = color_unary(problem, fg, bg);
        update_segmentation(problem.core, state, K, &cu);
        diag.record(level_index, it, "seg2", stage2_free_energy(problem, state, K, fg, bg),
                    problem.a.a);
        if (problem.lambda_c > 0.0) {
            fg = weighted_em_step(fg, pixels, weights_of(state.r, true));
            bg = weighted_em_step(bg, pixels, weights_of(state.r, false));
            diag.record(level_index, it, "em", stage2_free_energy(problem, state, K, fg, bg),
                        problem.a.a);
        }
        const double F = stage2_free_energy(problem, state, K, fg, bg);
        if (F_prev_outer - F < early_stop_rel * std::abs(F_prev_outer) && it > 1) break;
        F_prev_outer = F;
    }

    Stage2Result out{std::move(state), std::move(fg), std::move(bg), {}};
    out.latent_mean = problem.core.crop.crop(out.state.ch[0].mu);
    return out;
}

}  // namespace moblur
