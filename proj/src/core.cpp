#include "moblur/core.hpp"

#include <algorithm>
#include <cmath>

namespace moblur {

Planed CropOperator::crop(const Planed& latent) const {
    require(latent.rows() == latent_rows() && latent.cols() == latent_cols(),
            "crop: latent dims mismatch");
    return latent.block(pad, pad, obs_rows, obs_cols);
}

Planed CropOperator::uncrop(const Planed& obs) const {
    require(obs.rows() == obs_rows && obs.cols() == obs_cols, "uncrop: obs dims mismatch");
    Planed out = Planed::Zero(latent_rows(), latent_cols());
    out.block(pad, pad, obs_rows, obs_cols) = obs;
    return out;
}

Planed CropOperator::pad_replicate(const Planed& obs) const {
    require(obs.rows() == obs_rows && obs.cols() == obs_cols, "pad: obs dims mismatch");
    Planed out(latent_rows(), latent_cols());
    for (Eigen::Index y = 0; y < out.rows(); ++y) {
        const Eigen::Index sy = std::clamp<Eigen::Index>(y - pad, 0, obs_rows - 1);
        for (Eigen::Index x = 0; x < out.cols(); ++x) {
            const Eigen::Index sx = std::clamp<Eigen::Index>(x - pad, 0, obs_cols - 1);
            out(y, x) = obs(sy, sx);
        }
    }
    return out;
}

DerivativeFilterBank DerivativeFilterBank::forward_differences() {
    DerivativeFilterBank bank;
    bank.filters.push_back({"dx", {{{0, 0, -1.0}}, {{0, 1, 1.0}}}});
    bank.filters.push_back({"dy", {{{0, 0, -1.0}}, {{1, 0, 1.0}}}});
    return bank;
}

namespace {

bool stencil_fits(const FilterStencil& f, Eigen::Index y, Eigen::Index x,
                  Eigen::Index rows, Eigen::Index cols) {
    for (const auto& t : f.taps) {
        const Eigen::Index ty = y + static_cast<Eigen::Index>(t[0]);
        const Eigen::Index tx = x + static_cast<Eigen::Index>(t[1]);
        if (ty < 0 || ty >= rows || tx < 0 || tx >= cols) return false;
    }
    return true;
}

}  // namespace

Planed apply_filter(const FilterStencil& f, const Planed& x) {
    Planed out = Planed::Zero(x.rows(), x.cols());
    for (Eigen::Index y = 0; y < x.rows(); ++y)
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            if (!stencil_fits(f, y, c, x.rows(), x.cols())) continue;
            double s = 0;
            for (const auto& t : f.taps)
                s += t[2] * x(y + static_cast<Eigen::Index>(t[0]), c + static_cast<Eigen::Index>(t[1]));
            out(y, c) = s;
        }
    return out;
}

Planed apply_filter_transpose(const FilterStencil& f, const Planed& v) {
    Planed out = Planed::Zero(v.rows(), v.cols());
    for (Eigen::Index y = 0; y < v.rows(); ++y)
        for (Eigen::Index c = 0; c < v.cols(); ++c) {
            if (!stencil_fits(f, y, c, v.rows(), v.cols())) continue;
            for (const auto& t : f.taps)
                out(y + static_cast<Eigen::Index>(t[0]), c + static_cast<Eigen::Index>(t[1])) += t[2] * v(y, c);
        }
    return out;
}

Planed apply_filter_squared(const FilterStencil& f, const Planed& sigma) {
    Planed out = Planed::Zero(sigma.rows(), sigma.cols());
    for (Eigen::Index y = 0; y < sigma.rows(); ++y)
        for (Eigen::Index c = 0; c < sigma.cols(); ++c) {
            if (!stencil_fits(f, y, c, sigma.rows(), sigma.cols())) continue;
            double s = 0;
            for (const auto& t : f.taps)
                s += t[2] * t[2] * sigma(y + static_cast<Eigen::Index>(t[0]), c + static_cast<Eigen::Index>(t[1]));
            out(y, c) = s;
        }
    return out;
}

Planed filter_normal_diag(const FilterStencil& f, const Planed& w) {
    Planed out = Planed::Zero(w.rows(), w.cols());
    for (Eigen::Index y = 0; y < w.rows(); ++y)
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            if (!stencil_fits(f, y, c, w.rows(), w.cols())) continue;
            for (const auto& t : f.taps)
                out(y + static_cast<Eigen::Index>(t[0]), c + static_cast<Eigen::Index>(t[1])) += t[2] * t[2] * w(y, c);
        }
    return out;
}

Planed luma(const Image& img) {
    require(img.channels() == 1 || img.channels() == 3, "luma: 1 or 3 channels expected");
    if (img.channels() == 1) return img.plane(0);
    return 0.299 * img.plane(0) + 0.587 * img.plane(1) + 0.114 * img.plane(2);
}

GradientPair to_gradient_domain(const Image& img) {
    require(img.channels() == 1, "to_gradient_domain: convert to luma first");
    return to_gradient_domain(img.plane(0));
}

GradientPair to_gradient_domain(const Planed& img) {
    const Eigen::Index h = img.rows(), w = img.cols();
    GradientPair g;
    g.dx = Planed::Zero(h, w);
    g.dy = Planed::Zero(h, w);
    if (w > 1) g.dx.leftCols(w - 1) = img.rightCols(w - 1) - img.leftCols(w - 1);
    if (h > 1) g.dy.topRows(h - 1) = img.bottomRows(h - 1) - img.topRows(h - 1);
    return g;
}

Planed integrate_gradients(const GradientPair& g, const Planed& original) {
    const Eigen::Index h = original.rows(), w = original.cols();
    Planed out(h, w);
    out(0, 0) = original(0, 0);
    for (Eigen::Index x = 1; x < w; ++x) out(0, x) = out(0, x - 1) + g.dx(0, x - 1);
    for (Eigen::Index y = 1; y < h; ++y) out.row(y) = out.row(y - 1) + g.dy.row(y - 1);
    return out;
}

namespace {

Planed binomial3(const Planed& img) {
    const Eigen::Index h = img.rows(), w = img.cols();
    auto at = [&](Eigen::Index y, Eigen::Index x) {
        y = std::clamp<Eigen::Index>(y, 0, h - 1);
        x = std::clamp<Eigen::Index>(x, 0, w - 1);
        return img(y, x);
    };
    Planed tmp(h, w), out(h, w);
    for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x)
            tmp(y, x) = 0.25 * at(y, x - 1) + 0.5 * at(y, x) + 0.25 * at(y, x + 1);
    auto at2 = [&](Eigen::Index y, Eigen::Index x) {
        y = std::clamp<Eigen::Index>(y, 0, h - 1);
        return tmp(y, x);
    };
    for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x)
            out(y, x) = 0.25 * at2(y - 1, x) + 0.5 * at2(y, x) + 0.25 * at2(y + 1, x);
    return out;
}

}  // namespace

Planed resize_bilinear(const Planed& img, Eigen::Index rows, Eigen::Index cols) {
    require(rows >= 1 && cols >= 1, "resize: empty target");
    const Eigen::Index h = img.rows(), w = img.cols();
    Planed out(rows, cols);
    const double sy = static_cast<double>(h) / static_cast<double>(rows);
    const double sx = static_cast<double>(w) / static_cast<double>(cols);
    for (Eigen::Index y = 0; y < rows; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
        const Eigen::Index y0 = static_cast<Eigen::Index>(std::floor(fy));
        const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (Eigen::Index x = 0; x < cols; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
            const Eigen::Index x0 = static_cast<Eigen::Index>(std::floor(fx));
            const Eigen::Index x1 = std::min<Eigen::Index>(x0 + 1, w - 1);
            const double wx = fx - static_cast<double>(x0);
            out(y, x) = (1 - wy) * ((1 - wx) * img(y0, x0) + wx * img(y0, x1)) +
                        wy * ((1 - wx) * img(y1, x0) + wx * img(y1, x1));
        }
    }
    return out;
}

Planed downsample_half(const Planed& img) {
    const Eigen::Index rows = (img.rows() + 1) / 2;
    const Eigen::Index cols = (img.cols() + 1) / 2;
    return resize_bilinear(binomial3(img), rows, cols);
}

Pyramid build_pyramid(const Planed& img, int min_dim) {
    require(min_dim >= 16, "build_pyramid: min_dim >= 16");
    Pyramid pyr;
    pyr.levels.push_back(img);
    while (std::min(pyr.levels.back().rows(), pyr.levels.back().cols()) > min_dim)
        pyr.levels.push_back(downsample_half(pyr.levels.back()));
    return pyr;
}

}  // namespace moblur
