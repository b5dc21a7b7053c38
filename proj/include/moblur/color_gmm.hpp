#pragma once

#include "moblur/core.hpp"
#include "moblur/rng.hpp"

#include <vector>

namespace moblur {

// Full-covariance RGB mixture for the foreground/background color models.
// Covariances carry an eigenvalue floor of 1e-5 to stay SPD.
struct ColorGmm {
    struct Component {
        double pi = 0;
        Eigen::Vector3d mu = Eigen::Vector3d::Zero();
        Eigen::Matrix3d cov = Eigen::Matrix3d::Identity();
    };
    std::vector<Component> comps;

    int components() const { return static_cast<int>(comps.size()); }
    void validate() const;
    static constexpr double kEigFloor = 1e-5;
};

double gmm_loglik(const ColorGmm& gmm, const Eigen::Vector3d& pixel);
// per-pixel log-likelihood map for a 3-channel image
Planed gmm_loglik_map(const ColorGmm& gmm, const Image& rgb);
// sum_i w_i log GMM(y_i)
double gmm_weighted_loglik(const ColorGmm& gmm, const Eigen::Matrix3Xd& pixels,
                           const Eigen::VectorXd& weights);

// One EM step where every statistic is weighted by the per-pixel Bernoulli
// weight. A component whose weighted mass drops below 1e-8 is reseeded on the
// pixel the current model explains worst.
ColorGmm weighted_em_step(const ColorGmm& gmm, const Eigen::Matrix3Xd& pixels,
                          const Eigen::VectorXd& weights);

// k-means++-seeded models for the two sides (weights r and 1-r), each
// followed by one weighted EM pass. Components shrink if a side has fewer
// distinct colors than requested.
std::pair<ColorGmm, ColorGmm> init_color_models(const Image& rgb, const Planed& r,
                                                int components, Rng& rng);

Eigen::Matrix3Xd image_as_pixels(const Image& rgb);

}  // namespace moblur
