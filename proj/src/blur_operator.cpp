#include "moblur/blur_operator.hpp"

#include "moblur/parallel.hpp"
#include "moblur/psf.hpp"

#include <cmath>

namespace moblur {

namespace {

// Accumulates Eq.-3 style time samples for one tap offset. Samples are taken
// in symmetric (+s, -s) pairs so that the sums for (u, xi), (u, -xi) and
// (-u, xi) are bitwise identical; the sign-ambiguity and point-symmetry
// invariants then hold exactly rather than to roundoff.
struct TapAccumulator {
    double w = 0;      // sum_t psf(xi | s_t u)
    double wx = 0;     // sum_t s_t dpsf/dmu_x
    double wy = 0;     // sum_t s_t dpsf/dmu_y

    inline void add(double xi_x, double xi_y, double ux, double uy, double c2, double s,
                    bool grads) {
        // pair (+s, -s); for s == 0 the caller passes the center once
        const double bump = [&](double sg) {
            const double mx = sg * ux, my = sg * uy;
            const double dx = xi_x - mx, dy = xi_y - my;
            const double d2 = dx * dx + dy * dy;
            if (d2 > c2) return 0.0;
            const double t = 1.0 - d2 / c2;
            return t * t;
        }(s);
        const double bump_m = s == 0.0 ? 0.0 : [&](double sg) {
            const double mx = sg * ux, my = sg * uy;
            const double dx = xi_x - mx, dy = xi_y - my;
            const double d2 = dx * dx + dy * dy;
            if (d2 > c2) return 0.0;
            const double t = 1.0 - d2 / c2;
            return t * t;
        }(-s);
        w += bump + bump_m;
        if (!grads) return;
        auto grad = [&](double sg, double& gx, double& gy) {
            const double mx = sg * ux, my = sg * uy;
            const double dx = xi_x - mx, dy = xi_y - my;
            const double d2 = dx * dx + dy * dy;
            if (d2 > c2) {
                gx = 0;
                gy = 0;
                return;
            }
            const double t = 4.0 / c2 * (1.0 - d2 / c2);
            gx = t * dx;
            gy = t * dy;
        };
        double gxp, gyp, gxm = 0, gym = 0;
        grad(s, gxp, gyp);
        if (s != 0.0) grad(-s, gxm, gym);
        wx += s * gxp + (-s) * gxm;
        wy += s * gyp + (-s) * gym;
    }
};

// Fills one kernel block (column-major tap layout: idx = (dx+rx)*(2ry+1) + dy+ry).
// w has size (2rx+1)(2ry+1); gx/gy may be null. Returns Z.
double fill_kernel_block(const Vec2& u, double c, int T, int rx, int ry, double* w, double* gx,
                         double* gy) {
    const double c2 = c * c;
    const double ux = u.x(), uy = u.y();
    const double A = ux * ux + uy * uy;
    const int bh = 2 * ry + 1;
    const bool grads = gx != nullptr;
    const int t_center = T / 2;  // valid center sample only when T is even
    const bool has_center = (T % 2) == 0;
    const int t_pair_max = has_center ? t_center - 1 : (T - 1) / 2;

    double Z = 0;
    double sum_wx = 0, sum_wy = 0;
    for (int dx = -rx; dx <= rx; ++dx) {
        for (int dy = -ry; dy <= ry; ++dy) {
            const double xx = dx, xy = dy;
            const double E = xx * xx + xy * xy - c2;
            int t_lo = 0, t_hi = t_pair_max;
            bool center_ok = has_center && E <= 0;
            bool any_pair = true;
            if (A > 1e-300) {
                const double B = xx * ux + xy * uy;
                const double D = B * B - A * E;
                if (D < 0) {
                    any_pair = false;
                    center_ok = false;
                } else {
                    const double sqrtD = std::sqrt(D);
                    const double s_hi = (std::abs(B) + sqrtD) / A;
                    const double s_lo = std::max(0.0, (std::abs(B) - sqrtD) / A);
                    // s_t = (T - 2t)/(2T) for the positive member of pair t
                    const double tf_lo = 0.5 * T - T * s_hi;
                    const double tf_hi = 0.5 * T - T * s_lo;
                    t_lo = std::max(0, static_cast<int>(std::ceil(tf_lo - 1e-9)));
                    t_hi = std::min(t_pair_max, static_cast<int>(std::floor(tf_hi + 1e-9)));
                    if (t_lo > t_hi) any_pair = false;
                }
            }
            TapAccumulator acc;
            if (any_pair)
                for (int t = t_lo; t <= t_hi; ++t) {
                    const double s = static_cast<double>(T - 2 * t) / (2.0 * T);
                    acc.add(xx, xy, ux, uy, c2, s, grads);
                }
            if (center_ok) acc.add(xx, xy, ux, uy, c2, 0.0, grads);

            const int idx = (dx + rx) * bh + (dy + ry);
            w[idx] = acc.w;
            Z += acc.w;
            if (grads) {
                gx[idx] = acc.wx;
                gy[idx] = acc.wy;
                sum_wx += acc.wx;
                sum_wy += acc.wy;
            }
        }
    }
    // Z > 0 always: the time sample nearest the path center lies within c of
    // some integer tap.
    const int n = (2 * rx + 1) * bh;
    const double inv_z = 1.0 / Z;
    for (int i = 0; i < n; ++i) w[i] *= inv_z;
    if (grads) {
        // quotient rule through the normalizer; each field sums to 0
        for (int i = 0; i < n; ++i) {
            gx[i] = (gx[i] - w[i] * sum_wx) * inv_z;
            gy[i] = (gy[i] - w[i] * sum_wy) * inv_z;
        }
    }
    return Z;
}

inline int half_extent(double component, double c) {
    return static_cast<int>(std::ceil(std::abs(component) * 0.5)) +
           static_cast<int>(std::ceil(c));
}

}  // namespace

int auto_time_steps(double max_displacement) {
    const int T = 2 * static_cast<int>(std::ceil(max_displacement));
    return std::max(6, T);
}

BlurKernel build_kernel(const Vec2& u, double c, int T) {
    require(T >= 1, "build_kernel: T >= 1");
    require(u.allFinite(), "build_kernel: non-finite displacement");
    require(c >= 1.0 && c <= 2.0, "build_kernel: c in [1,2]");
    BlurKernel k;
    k.rx = half_extent(u.x(), c);
    k.ry = half_extent(u.y(), c);
    const int bw = 2 * k.rx + 1, bh = 2 * k.ry + 1;
    std::vector<double> w(static_cast<std::size_t>(bw) * bh);
    k.normalizer = fill_kernel_block(u, c, T, k.rx, k.ry, w.data(), nullptr, nullptr);
    require(k.normalizer > 0, "build_kernel: zero normalizer");
    k.weights.resize(bh, bw);
    for (int dx = 0; dx < bw; ++dx)
        for (int dy = 0; dy < bh; ++dy) k.weights(dy, dx) = w[dx * bh + dy];
    return k;
}

BlurKernel build_kernel(const AffineParams& a, Eigen::Index y, Eigen::Index x,
                        Eigen::Index rows, Eigen::Index cols, double c, int T) {
    return build_kernel(a.displacement(centered_x(x, cols), centered_y(y, rows)), c, T);
}

BlurKernelGrad build_kernel_grad(const AffineParams& a, Eigen::Index y, Eigen::Index x,
                                 Eigen::Index rows, Eigen::Index cols, double c, int T) {
    const double px = centered_x(x, cols), py = centered_y(y, rows);
    const Vec2 u = a.displacement(px, py);
    BlurKernelGrad g;
    g.rx = half_extent(u.x(), c);
    g.ry = half_extent(u.y(), c);
    const int bw = 2 * g.rx + 1, bh = 2 * g.ry + 1;
    std::vector<double> w(static_cast<std::size_t>(bw) * bh), gx(w.size()), gy(w.size());
    fill_kernel_block(u, c, T, g.rx, g.ry, w.data(), gx.data(), gy.data());
    g.gx.resize(bh, bw);
    g.gy.resize(bh, bw);
    for (int dx = 0; dx < bw; ++dx)
        for (int dy = 0; dy < bh; ++dy) {
            g.gx(dy, dx) = gx[dx * bh + dy];
            g.gy(dy, dx) = gy[dx * bh + dy];
        }
    g.dk = {g.gx, py * g.gx, px * g.gx, g.gy, py * g.gy, px * g.gy};
    return g;
}

int BlurOperator::required_pad(const AffineParams& a, Eigen::Index obs_rows,
                               Eigen::Index obs_cols, double c) {
    double mx = 0, my = 0;
    for (Eigen::Index y : {Eigen::Index(0), obs_rows - 1})
        for (Eigen::Index x : {Eigen::Index(0), obs_cols - 1}) {
            const Vec2 u = a.displacement(centered_x(x, obs_cols), centered_y(y, obs_rows));
            mx = std::max(mx, std::abs(u.x()));
            my = std::max(my, std::abs(u.y()));
        }
    const int ext = std::max(half_extent(mx, c), half_extent(my, c));
    return ext + static_cast<int>(std::ceil(c));
}

BlurOperator::BlurOperator(const AffineParams& a, Eigen::Index obs_rows, Eigen::Index obs_cols,
                           int pad, BlurOperatorOptions opt)
    : a_(a), rows_(obs_rows), cols_(obs_cols), crop_(pad, obs_rows, obs_cols), c_(opt.c) {
    require(a.finite(), "BlurOperator: non-finite params");
    require(c_ >= 1.0 && c_ <= 2.0, "BlurOperator: c in [1,2]");
    field_ = motion_field(a, rows_, cols_);
    T_ = opt.time_steps > 0 ? opt.time_steps : auto_time_steps(field_.max_magnitude());

    const std::size_t n = static_cast<std::size_t>(rows_) * cols_;
    rx_.resize(n);
    ry_.resize(n);
    off_.resize(n + 1);
    std::size_t total = 0;
    for (Eigen::Index y = 0; y < rows_; ++y)
        for (Eigen::Index x = 0; x < cols_; ++x) {
            const std::size_t i = block_index(y, x);
            rx_[i] = half_extent(field_.ux(y, x), c_);
            ry_[i] = half_extent(field_.uy(y, x), c_);
            off_[i] = total;
            total += static_cast<std::size_t>(2 * rx_[i] + 1) * (2 * ry_[i] + 1);
            max_half_extent_ = std::max({max_half_extent_, rx_[i], ry_[i]});
        }
    off_[n] = total;
    require(pad >= max_half_extent_, "BlurOperator: pad too small for kernel support");
    build_weights(false);
}

void BlurOperator::build_weights(bool with_grads) {
    const std::size_t total = off_.back();
    if (!with_grads)
        w_.resize(total);
    else {
        gx_.resize(total);
        gy_.resize(total);
    }
    parallel_for(static_cast<std::size_t>(rows_), [&](std::size_t y0, std::size_t y1) {
        for (std::size_t y = y0; y < y1; ++y)
            for (Eigen::Index x = 0; x < cols_; ++x) {
                const std::size_t i = block_index(y, x);
                const Vec2 u(field_.ux(y, x), field_.uy(y, x));
                fill_kernel_block(u, c_, T_, rx_[i], ry_[i], w_.data() + off_[i],
                                  with_grads ? gx_.data() + off_[i] : nullptr,
                                  with_grads ? gy_.data() + off_[i] : nullptr);
            }
    });
}

void BlurOperator::ensure_derivatives() {
    if (has_derivatives()) return;
    build_weights(true);
}

Planed BlurOperator::apply(const Planed& latent) const {
    require(latent.rows() == crop_.latent_rows() && latent.cols() == crop_.latent_cols(),
            "apply: latent dims mismatch");
    Planed out(rows_, cols_);
    const int pad = crop_.pad;
    parallel_for(static_cast<std::size_t>(rows_), [&](std::size_t y0, std::size_t y1) {
        for (std::size_t y = y0; y < y1; ++y)
            for (Eigen::Index x = 0; x < cols_; ++x) {
                const std::size_t i = block_index(y, x);
                const int rx = rx_[i], ry = ry_[i], bh = 2 * ry + 1;
                const double* w = w_.data() + off_[i];
                double acc = 0;
                for (int dx = -rx; dx <= rx; ++dx) {
                    const double* col = &latent(y + pad - ry, x + pad + dx);
                    const double* wc = w + (dx + rx) * bh;
                    for (int dy = 0; dy < bh; ++dy) acc += wc[dy] * col[dy];
                }
                out(y, x) = acc;
            }
    });
    return out;
}

Planed BlurOperator::apply_squared(const Planed& latent) const {
    require(latent.rows() == crop_.latent_rows() && latent.cols() == crop_.latent_cols(),
            "apply_squared: latent dims mismatch");
    Planed out(rows_, cols_);
    const int pad = crop_.pad;
    parallel_for(static_cast<std::size_t>(rows_), [&](std::size_t y0, std::size_t y1) {
        for (std::size_t y = y0; y < y1; ++y)
            for (Eigen::Index x = 0; x < cols_; ++x) {
                const std::size_t i = block_index(y, x);
                const int rx = rx_[i], ry = ry_[i], bh = 2 * ry + 1;
                const double* w = w_.data() + off_[i];
                double acc = 0;
                for (int dx = -rx; dx <= rx; ++dx) {
                    const double* col = &latent(y + pad - ry, x + pad + dx);
                    const double* wc = w + (dx + rx) * bh;
                    for (int dy = 0; dy < bh; ++dy) acc += wc[dy] * wc[dy] * col[dy];
                }
                out(y, x) = acc;
            }
    });
    return out;
}

// Transpose and diagonal are gathers over the latent grid: every obs pixel
// within the global max extent is tested against its own support. This keeps
// the summation order per output pixel fixed regardless of thread count.
Planed BlurOperator::apply_transpose(const Planed& obs) const {
    require(obs.rows() == rows_ && obs.cols() == cols_, "apply_transpose: obs dims mismatch");
    const Eigen::Index lr = crop_.latent_rows(), lc = crop_.latent_cols();
    Planed out(lr, lc);
    const int pad = crop_.pad;
    const int R = max_half_extent_;
    parallel_for(static_cast<std::size_t>(lr), [&](std::size_t ly0, std::size_t ly1) {
        for (std::size_t ly = ly0; ly < ly1; ++ly)
            for (Eigen::Index lx = 0; lx < lc; ++lx) {
                const Eigen::Index cy = static_cast<Eigen::Index>(ly) - pad;
                const Eigen::Index cx = lx - pad;
                double acc = 0;
                const Eigen::Index y_lo = std::max<Eigen::Index>(0, cy - R);
                const Eigen::Index y_hi = std::min<Eigen::Index>(rows_ - 1, cy + R);
                const Eigen::Index x_lo = std::max<Eigen::Index>(0, cx - R);
                const Eigen::Index x_hi = std::min<Eigen::Index>(cols_ - 1, cx + R);
                for (Eigen::Index oy = y_lo; oy <= y_hi; ++oy)
                    for (Eigen::Index ox = x_lo; ox <= x_hi; ++ox) {
                        const std::size_t i = block_index(oy, ox);
                        const int rx = rx_[i], ry = ry_[i];
                        const int dy = static_cast<int>(cy - oy), dx = static_cast<int>(cx - ox);
                        if (dx < -rx || dx > rx || dy < -ry || dy > ry) continue;
                        acc += w_[off_[i] + static_cast<std::size_t>(dx + rx) * (2 * ry + 1) +
                                  (dy + ry)] *
                               obs(oy, ox);
                    }
                out(ly, lx) = acc;
            }
    });
    return out;
}

Planed BlurOperator::weighted_square_diag(const Planed& r_obs) const {
    require(r_obs.rows() == rows_ && r_obs.cols() == cols_, "diag: obs dims mismatch");
    const Eigen::Index lr = crop_.latent_rows(), lc = crop_.latent_cols();
    Planed out(lr, lc);
    const int pad = crop_.pad;
    const int R = max_half_extent_;
    parallel_for(static_cast<std::size_t>(lr), [&](std::size_t ly0, std::size_t ly1) {
        for (std::size_t ly = ly0; ly < ly1; ++ly)
            for (Eigen::Index lx = 0; lx < lc; ++lx) {
                const Eigen::Index cy = static_cast<Eigen::Index>(ly) - pad;
                const Eigen::Index cx = lx - pad;
                double acc = 0;
                const Eigen::Index y_lo = std::max<Eigen::Index>(0, cy - R);
                const Eigen::Index y_hi = std::min<Eigen::Index>(rows_ - 1, cy + R);
                const Eigen::Index x_lo = std::max<Eigen::Index>(0, cx - R);
                const Eigen::Index x_hi = std::min<Eigen::Index>(cols_ - 1, cx + R);
                for (Eigen::Index oy = y_lo; oy <= y_hi; ++oy)
                    for (Eigen::Index ox = x_lo; ox <= x_hi; ++ox) {
                        const std::size_t i = block_index(oy, ox);
                        const int rx = rx_[i], ry = ry_[i];
                        const int dy = static_cast<int>(cy - oy), dx = static_cast<int>(cx - ox);
                        if (dx < -rx || dx > rx || dy < -ry || dy > ry) continue;
                        const double w = w_[off_[i] + static_cast<std::size_t>(dx + rx) *
                                                          (2 * ry + 1) +
                                            (dy + ry)];
                        acc += w * w * r_obs(oy, ox);
                    }
                out(ly, lx) = acc;
            }
    });
    return out;
}

void BlurOperator::jacobian_gathers(const Planed& latent, Planed& jx, Planed& jy) const {
    require(has_derivatives(), "jacobian_gathers: call ensure_derivatives() first");
    require(latent.rows() == crop_.latent_rows() && latent.cols() == crop_.latent_cols(),
            "jacobian_gathers: latent dims mismatch");
    jx.resize(rows_, cols_);
    jy.resize(rows_, cols_);
    const int pad = crop_.pad;
    parallel_for(static_cast<std::size_t>(rows_), [&](std::size_t y0, std::size_t y1) {
        for (std::size_t y = y0; y < y1; ++y)
            for (Eigen::Index x = 0; x < cols_; ++x) {
                const std::size_t i = block_index(y, x);
                const int rx = rx_[i], ry = ry_[i], bh = 2 * ry + 1;
                const double* gx = gx_.data() + off_[i];
                const double* gy = gy_.data() + off_[i];
                double ax = 0, ay = 0;
                for (int dx = -rx; dx <= rx; ++dx) {
                    const double* col = &latent(y + pad - ry, x + pad + dx);
                    const double* gxc = gx + (dx + rx) * bh;
                    const double* gyc = gy + (dx + rx) * bh;
                    for (int dy = 0; dy < bh; ++dy) {
                        ax += gxc[dy] * col[dy];
                        ay += gyc[dy] * col[dy];
                    }
                }
                jx(y, x) = ax;
                jy(y, x) = ay;
            }
    });
}

std::array<Planed, 6> BlurOperator::jacobian_apply(const Planed& latent) const {
    Planed jx, jy;
    jacobian_gathers(latent, jx, jy);
    std::array<Planed, 6> cols;
    Planed px(rows_, cols_), py(rows_, cols_);
    for (Eigen::Index y = 0; y < rows_; ++y)
        for (Eigen::Index x = 0; x < cols_; ++x) {
            px(y, x) = centered_x(x, cols_);
            py(y, x) = centered_y(y, rows_);
        }
    cols[0] = jx;
    cols[1] = py * jx;
    cols[2] = px * jx;
    cols[3] = jy;
    cols[4] = py * jy;
    cols[5] = px * jy;
    return cols;
}

void BlurOperator::gauss_newton_terms(const Planed& sigma_latent, const Planed& r_obs, Mat6& H0,
                                      Vec6& h0) const {
    require(has_derivatives(), "gauss_newton_terms: call ensure_derivatives() first");
    require(sigma_latent.rows() == crop_.latent_rows() &&
                sigma_latent.cols() == crop_.latent_cols(),
            "gauss_newton_terms: sigma dims mismatch");
    require(r_obs.rows() == rows_ && r_obs.cols() == cols_, "gauss_newton_terms: r dims mismatch");

    const int pad = crop_.pad;
    const std::size_t nrows = static_cast<std::size_t>(rows_);
    const std::size_t grain = std::max<std::size_t>(1, nrows / 32);
    const std::size_t nchunks = (nrows + grain - 1) / grain;
    std::vector<Mat6> Hc(nchunks, Mat6::Zero());
    std::vector<Vec6> hc(nchunks, Vec6::Zero());

    parallel_for_chunked(nrows, grain, [&](std::size_t y0, std::size_t y1) {
        const std::size_t chunk = y0 / grain;
        Mat6 H = Mat6::Zero();
        Vec6 h = Vec6::Zero();
        for (std::size_t y = y0; y < y1; ++y) {
            const double py = centered_y(y, rows_);
            for (Eigen::Index x = 0; x < cols_; ++x) {
                const double px = centered_x(x, cols_);
                const std::size_t i = block_index(y, x);
                const int rx = rx_[i], ry = ry_[i], bh = 2 * ry + 1;
                const double* w = w_.data() + off_[i];
                const double* gx = gx_.data() + off_[i];
                const double* gy = gy_.data() + off_[i];
                double qxx = 0, qyy = 0, qxy = 0, sxk = 0, syk = 0;
                for (int dx = -rx; dx <= rx; ++dx) {
                    const double* col = &sigma_latent(y + pad - ry, x + pad + dx);
                    const std::size_t base = static_cast<std::size_t>(dx + rx) * bh;
                    for (int dy = 0; dy < bh; ++dy) {
                        const double s = col[dy];
                        const double a = gx[base + dy], b = gy[base + dy];
                        qxx += a * a * s;
                        qyy += b * b * s;
                        qxy += a * b * s;
                        sxk += a * w[base + dy] * s;
                        syk += b * w[base + dy] * s;
                    }
                }
                const double r = r_obs(y, x);
                const double cc[3] = {1.0, py, px};
                for (int p = 0; p < 3; ++p)
                    for (int q = 0; q < 3; ++q) {
                        H(p, q) += r * cc[p] * cc[q] * qxx;
                        H(p, 3 + q) += r * cc[p] * cc[q] * qxy;
                        H(3 + p, q) += r * cc[p] * cc[q] * qxy;
                        H(3 + p, 3 + q) += r * cc[p] * cc[q] * qyy;
                    }
                for (int p = 0; p < 3; ++p) {
                    h(p) += r * cc[p] * sxk;
                    h(3 + p) += r * cc[p] * syk;
                }
            }
        }
        Hc[chunk] = H;
        hc[chunk] = h;
    });
    H0.setZero();
    h0.setZero();
    for (std::size_t c = 0; c < nchunks; ++c) {
        H0 += Hc[c];
        h0 += hc[c];
    }
}

BlurKernel BlurOperator::kernel_at(Eigen::Index y, Eigen::Index x) const {
    const std::size_t i = block_index(y, x);
    BlurKernel k;
    k.rx = rx_[i];
    k.ry = ry_[i];
    const int bw = 2 * k.rx + 1, bh = 2 * k.ry + 1;
    k.weights.resize(bh, bw);
    for (int dx = 0; dx < bw; ++dx)
        for (int dy = 0; dy < bh; ++dy) k.weights(dy, dx) = w_[off_[i] + dx * bh + dy];
    return k;
}

BlurKernelGrad BlurOperator::kernel_grad_at(Eigen::Index y, Eigen::Index x) const {
    require(has_derivatives(), "kernel_grad_at: call ensure_derivatives() first");
    const std::size_t i = block_index(y, x);
    BlurKernelGrad g;
    g.rx = rx_[i];
    g.ry = ry_[i];
    const int bw = 2 * g.rx + 1, bh = 2 * g.ry + 1;
    g.gx.resize(bh, bw);
    g.gy.resize(bh, bw);
    for (int dx = 0; dx < bw; ++dx)
        for (int dy = 0; dy < bh; ++dy) {
            g.gx(dy, dx) = gx_[off_[i] + dx * bh + dy];
            g.gy(dy, dx) = gy_[off_[i] + dx * bh + dy];
        }
    const double px = centered_x(x, cols_), py = centered_y(y, rows_);
    g.dk = {g.gx, py * g.gx, px * g.gx, g.gy, py * g.gy, px * g.gy};
    return g;
}

}  // namespace moblur
