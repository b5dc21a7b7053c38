#include "moblur/potts.hpp"

namespace moblur {

namespace {
constexpr int kOffsets[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                {0, 1},   {1, -1}, {1, 0},  {1, 1}};
// unordered pairs counted once
constexpr int kPairOffsets[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
}  // namespace

Planed neighbor_count(Eigen::Index rows, Eigen::Index cols) {
    Planed n(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            int c = 0;
            for (const auto& o : kOffsets) {
                const Eigen::Index ny = y + o[0], nx = x + o[1];
                if (ny >= 0 && ny < rows && nx >= 0 && nx < cols) ++c;
            }
            n(y, x) = c;
        }
    return n;
}

Planed neighbor_sum(const Planed& r) {
    const Eigen::Index rows = r.rows(), cols = r.cols();
    Planed s = Planed::Zero(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            double acc = 0;
            for (const auto& o : kOffsets) {
                const Eigen::Index ny = y + o[0], nx = x + o[1];
                if (ny >= 0 && ny < rows && nx >= 0 && nx < cols) acc += r(ny, nx);
            }
            s(y, x) = acc;
        }
    return s;
}

Planed potts_message(const PottsPrior& prior, const Planed& r) {
    return prior.lambda * (2.0 * neighbor_sum(r) - neighbor_count(r.rows(), r.cols()));
}

double potts_expected_energy(const PottsPrior& prior, const Planed& r) {
    const Eigen::Index rows = r.rows(), cols = r.cols();
    double pair_term = 0;
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x)
            for (const auto& o : kPairOffsets) {
                const Eigen::Index ny = y + o[0], nx = x + o[1];
                if (ny < 0 || ny >= rows || nx < 0 || nx >= cols) continue;
                const double ri = r(y, x), rj = r(ny, nx);
                pair_term += ri + rj - 2.0 * ri * rj;
            }
    return prior.lambda0 * r.sum() + prior.lambda * pair_term;
}

}  // namespace moblur
