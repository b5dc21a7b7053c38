#pragma once

// Dense test-side materializations of the implicit operators. These are the
// independent route the matrix-free implementations are checked against.

#include "moblur/blur_operator.hpp"
#include "moblur/stage1.hpp"

#include <array>

inline Eigen::VectorXd flatten(const moblur::Planed& p) {
    Eigen::VectorXd v(p.size());
    Eigen::Index i = 0;
    for (Eigen::Index y = 0; y < p.rows(); ++y)
        for (Eigen::Index x = 0; x < p.cols(); ++x) v[i++] = p(y, x);
    return v;
}

inline moblur::Planed unflatten(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
    moblur::Planed p(rows, cols);
    Eigen::Index i = 0;
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) p(y, x) = v[i++];
    return p;
}

inline Eigen::MatrixXd dense_matrix(const moblur::BlurOperator& K) {
    const Eigen::Index rows = K.crop().obs_rows, cols = K.crop().obs_cols;
    const Eigen::Index lc = K.crop().latent_cols();
    Eigen::MatrixXd M =
        Eigen::MatrixXd::Zero(rows * cols, K.crop().latent_rows() * lc);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            const moblur::BlurKernel k = K.kernel_at(y, x);
            for (int dy = -k.ry; dy <= k.ry; ++dy)
                for (int dx = -k.rx; dx <= k.rx; ++dx)
                    M(y * cols + x, (y + K.pad() + dy) * lc + (x + K.pad() + dx)) =
                        k.at(dy, dx);
        }
    return M;
}

inline Eigen::MatrixXd dense_derivative(const moblur::BlurOperator& K, int p) {
    const Eigen::Index rows = K.crop().obs_rows, cols = K.crop().obs_cols;
    const Eigen::Index lc = K.crop().latent_cols();
    Eigen::MatrixXd M =
        Eigen::MatrixXd::Zero(rows * cols, K.crop().latent_rows() * lc);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            const moblur::BlurKernelGrad g = K.kernel_grad_at(y, x);
            for (int dy = -g.ry; dy <= g.ry; ++dy)
                for (int dx = -g.rx; dx <= g.rx; ++dx)
                    M(y * cols + x, (y + K.pad() + dy) * lc + (x + K.pad() + dx)) =
                        g.dk[p](dy + g.ry, dx + g.rx);
        }
    return M;
}

// dense crop matrix I_y
inline Eigen::MatrixXd dense_crop(const moblur::CropOperator& crop) {
    const Eigen::Index rows = crop.obs_rows, cols = crop.obs_cols;
    const Eigen::Index lc = crop.latent_cols();
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(rows * cols, crop.latent_rows() * lc);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x)
            C(y * cols + x, (y + crop.pad) * lc + (x + crop.pad)) = 1.0;
    return C;
}

// dense filter matrix D_gamma over the latent grid, rows zeroed at the border
inline Eigen::MatrixXd dense_filter(const moblur::FilterStencil& f, Eigen::Index rows,
                                    Eigen::Index cols) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(rows * cols, rows * cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            bool fits = true;
            for (const auto& t : f.taps) {
                const Eigen::Index ty = y + Eigen::Index(t[0]), tx = x + Eigen::Index(t[1]);
                if (ty < 0 || ty >= rows || tx < 0 || tx >= cols) fits = false;
            }
            if (!fits) continue;
            for (const auto& t : f.taps)
                D(y * cols + x, (y + Eigen::Index(t[0])) * cols + (x + Eigen::Index(t[1]))) +=
                    t[2];
        }
    return D;
}
