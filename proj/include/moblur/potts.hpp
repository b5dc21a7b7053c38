#pragma once

#include "moblur/core.hpp"

namespace moblur {

// Pairwise Potts smoothness over an 8-neighborhood plus a background bias:
// -log p(h) = lambda0 * |fg| + lambda * #{disagreeing neighbor pairs} + const.
struct PottsPrior {
    double lambda = 2.0;
    double lambda0 = 0.05;
};

// Number of in-bounds 8-neighbors per pixel (3 at corners, 5 at edges, 8 inside).
Planed neighbor_count(Eigen::Index rows, Eigen::Index cols);

// (L_N r)_i = sum of r over the in-bounds 8-neighborhood.
Planed neighbor_sum(const Planed& r);

// The variational-message-passing pairwise term: -lambda L_N 1 + 2 lambda L_N r.
Planed potts_message(const PottsPrior& prior, const Planed& r);

// Expected energy under independent Bernoulli(r):
// lambda0 sum r_i + lambda sum_{(i,j) in N} r_i + r_j - 2 r_i r_j.
double potts_expected_energy(const PottsPrior& prior, const Planed& r);

}  // namespace moblur
