#pragma once

#include "moblur/core.hpp"

#include <string>
#include <vector>

namespace moblur {

// Gaussian scale mixture over derivative-filter responses: a zero-mean
// mixture with weights pi_j and standard deviations sigma_j (strictly
// increasing), shared across the Gamma filters of the bank.
struct GsmPrior {
    Eigen::VectorXd pi;
    Eigen::VectorXd sigma;
    DerivativeFilterBank filterbank = DerivativeFilterBank::forward_differences();

    int components() const { return static_cast<int>(pi.size()); }
    void validate() const;

    // Plain-text format: comment lines, then "J <n>", "filters <ids...>",
    // then J lines of "pi sigma".
    static GsmPrior load(const std::string& path);
    void save(const std::string& path) const;

    // Parameters fit from the derivative statistics of the bundled asset
    // images; data/gsm_default.txt ships the same values.
    static GsmPrior shipped_default();
};

// Zero-mean GSM fit by EM over the scale indicators. The per-iteration log
// likelihood is non-decreasing. Throws on degenerate (all-zero) samples.
GsmPrior fit_gsm(const std::vector<double>& samples, int components,
                 int max_iters = 200, std::vector<double>* loglik_trace = nullptr);

// v_j for one filter's expected squared responses fhat (>= 0):
// v_j ~ exp(-fhat / (2 sigma_j^2)) pi_j / sigma_j, normalized per pixel in
// log space. Returns J planes.
std::vector<Planed> gsm_indicator_update(const GsmPrior& prior, const Planed& fhat);

// sum_j v_j / sigma_j^2, the per-pixel precision the image update sees.
Planed gsm_mixing_weights(const GsmPrior& prior, const std::vector<Planed>& v);

}  // namespace moblur
