#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "moblur/blur_operator.hpp"
#include "moblur/psf.hpp"
#include "test_util.hpp"

using namespace moblur;

namespace {

// Direct Eq.-3 style evaluation: plain triple loop over taps and time samples,
// independent of the production path's interval pruning and pairing.
Planed naive_kernel(const Vec2& u, double c, int T, int rx, int ry) {
    Planed w = Planed::Zero(2 * ry + 1, 2 * rx + 1);
    for (int dy = -ry; dy <= ry; ++dy)
        for (int dx = -rx; dx <= rx; ++dx)
            for (int t = 0; t <= T; ++t) {
                const double s = double(t) / T - 0.5;
                const Vec2 xi(dx, dy), mu = s * u;
                w(dy + ry, dx + rx) += psf<double>(xi, mu, c);
            }
    return w / w.sum();
}

// embeds a kernel block into a frame with half extents (RX, RY)
Planed embed(const Planed& block, int rx, int ry, int RX, int RY) {
    Planed out = Planed::Zero(2 * RY + 1, 2 * RX + 1);
    out.block(RY - ry, RX - rx, block.rows(), block.cols()) = block;
    return out;
}

AffineParams random_params(Rng& rng, double tmax = 6.0, double lmax = 0.05) {
    return AffineParams(rng.uniform(-tmax, tmax), rng.uniform(-lmax, lmax),
                        rng.uniform(-lmax, lmax), rng.uniform(-tmax, tmax),
                        rng.uniform(-lmax, lmax), rng.uniform(-lmax, lmax));
}

// dense blur matrix from per-pixel kernels (test-side scatter)
Eigen::MatrixXd dense_matrix(const BlurOperator& K) {
    const Eigen::Index rows = K.crop().obs_rows, cols = K.crop().obs_cols;
    const Eigen::Index lr = K.crop().latent_rows(), lc = K.crop().latent_cols();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rows * cols, lr * lc);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            const BlurKernel k = K.kernel_at(y, x);
            for (int dy = -k.ry; dy <= k.ry; ++dy)
                for (int dx = -k.rx; dx <= k.rx; ++dx) {
                    const Eigen::Index ly = y + K.pad() + dy, lx = x + K.pad() + dx;
                    M(y * cols + x, ly * lc + lx) = k.at(dy, dx);
                }
        }
    return M;
}

Eigen::MatrixXd dense_derivative(const BlurOperator& K, int p) {
    const Eigen::Index rows = K.crop().obs_rows, cols = K.crop().obs_cols;
    const Eigen::Index lr = K.crop().latent_rows(), lc = K.crop().latent_cols();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rows * cols, lr * lc);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            const BlurKernelGrad g = K.kernel_grad_at(y, x);
            for (int dy = -g.ry; dy <= g.ry; ++dy)
                for (int dx = -g.rx; dx <= g.rx; ++dx) {
                    const Eigen::Index ly = y + K.pad() + dy, lx = x + K.pad() + dx;
                    M(y * cols + x, ly * lc + lx) = g.dk[p](dy + g.ry, dx + g.rx);
                }
        }
    return M;
}

Eigen::VectorXd flatten(const Planed& p) {
    Eigen::VectorXd v(p.size());
    Eigen::Index i = 0;
    for (Eigen::Index y = 0; y < p.rows(); ++y)
        for (Eigen::Index x = 0; x < p.cols(); ++x) v[i++] = p(y, x);
    return v;
}

}  // namespace

TEST_CASE("psf values and gradient") {
    const Vec2 zero(0, 0);
    CHECK(psf<double>(zero, zero, 1.5) == 1.0);
    CHECK(psf<double>(Vec2(1.5, 0), zero, 1.5) == 0.0);
    CHECK(psf<double>(Vec2(0.75, 0), zero, 1.5) == doctest::Approx(0.5625));
    CHECK(psf_grad<double>(zero, zero, 1.5).norm() == 0.0);
    CHECK(psf_grad<double>(Vec2(1.5, 0), zero, 1.5).norm() == 0.0);

    SUBCASE("gradient matches central finite differences") {
        Rng rng(21);
        for (int i = 0; i < 50; ++i) {
            const double c = rng.uniform(1.0, 2.0);
            const Vec2 xi(rng.uniform(-2, 2), rng.uniform(-2, 2));
            const Vec2 mu(rng.uniform(-2, 2), rng.uniform(-2, 2));
            const Eigen::Vector2d g = psf_grad<double>(xi, mu, c);
            const double eps = 1e-5;
            for (int d = 0; d < 2; ++d) {
                Vec2 hi = mu, lo = mu;
                hi[d] += eps;
                lo[d] -= eps;
                const double fd =
                    (psf<double>(xi, hi, c) - psf<double>(xi, lo, c)) / (2 * eps);
                CHECK(std::abs(g[d] - fd) < 1e-6);
            }
        }
    }
}

TEST_CASE("motion_field layout") {
    SUBCASE("pure translation") {
        const MotionField f = motion_field(AffineParams::translation(5, 0), 6, 8);
        CHECK(f.ux.minCoeff() == 5.0);
        CHECK(f.ux.maxCoeff() == 5.0);
        CHECK(f.uy.abs().maxCoeff() == 0.0);
    }
    SUBCASE("zero params give the zero field") {
        const MotionField f = motion_field(AffineParams(), 4, 4);
        CHECK(f.max_magnitude() == 0.0);
    }
    SUBCASE("rotation-like coefficients at the corners") {
        const double w = 0.1;
        const AffineParams a(0, -w, 0, 0, 0, w);
        const Eigen::Index rows = 9, cols = 13;
        const MotionField f = motion_field(a, rows, cols);
        for (Eigen::Index y : {Eigen::Index(0), rows - 1})
            for (Eigen::Index x : {Eigen::Index(0), cols - 1}) {
                const double px = x - 0.5 * (cols - 1), py = y - 0.5 * (rows - 1);
                CHECK(f.ux(y, x) == doctest::Approx(-w * py));
                CHECK(f.uy(y, x) == doctest::Approx(w * px));
                CHECK(std::hypot(f.ux(y, x), f.uy(y, x)) ==
                      doctest::Approx(w * std::hypot(px, py)));
            }
    }
}

TEST_CASE("build_kernel") {
    SUBCASE("zero motion gives an isotropic bump") {
        const BlurKernel k = build_kernel(Vec2(0, 0), 1.5, 6);
        CHECK(k.sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(k.at(0, 0) == k.weights.maxCoeff());
        CHECK(k.at(0, 1) == doctest::Approx(k.at(0, -1)));
        CHECK(k.at(1, 0) == doctest::Approx(k.at(0, 1)));
        // compact support: nothing beyond radius c
        CHECK(k.at(0, 2) == 0.0);
    }
    SUBCASE("horizontal motion gives a line-like kernel with symmetric y-marginal") {
        const BlurKernel k = build_kernel(Vec2(8, 0), 1.5, 16);
        CHECK(k.sum() == doctest::Approx(1.0).epsilon(1e-12));
        const Eigen::VectorXd ymarg = k.weights.rowwise().sum();
        for (int d = 1; d <= k.ry; ++d)
            CHECK(ymarg[k.ry + d] == doctest::Approx(ymarg[k.ry - d]).epsilon(1e-12));
        // spread along x dominates spread along y
        CHECK(k.weights.row(k.ry).sum() > 0.3);
        CHECK(k.rx >= 3 * k.ry);
    }
    SUBCASE("matches a direct Eq.-style triple-loop evaluation") {
        Rng rng(31);
        for (int i = 0; i < 25; ++i) {
            const Vec2 u(rng.uniform(-9, 9), rng.uniform(-9, 9));
            const double c = rng.uniform(1.0, 2.0);
            const int T = 2 * (3 + int(rng.below(12)));
            const BlurKernel k = build_kernel(u, c, T);
            const Planed naive = naive_kernel(u, c, T, k.rx, k.ry);
            CHECK(max_abs_diff(k.weights, naive) < 1e-12);
        }
    }
    SUBCASE("point symmetry is exact") {
        Rng rng(32);
        for (int i = 0; i < 20; ++i) {
            const Vec2 u(rng.uniform(-10, 10), rng.uniform(-10, 10));
            const BlurKernel k = build_kernel(u, 1.5, auto_time_steps(u.norm()));
            for (int dy = -k.ry; dy <= k.ry; ++dy)
                for (int dx = -k.rx; dx <= k.rx; ++dx)
                    CHECK(k.at(dy, dx) == k.at(-dy, -dx));  // bitwise by construction
        }
    }
    SUBCASE("sign flip gives the identical kernel") {
        const Vec2 u(5.3, -2.1);
        const BlurKernel k1 = build_kernel(u, 1.5, 12);
        const BlurKernel k2 = build_kernel(-u, 1.5, 12);
        CHECK(max_abs_diff(k1.weights, k2.weights) == 0.0);
    }
    SUBCASE("support grows linearly with displacement") {
        const BlurKernel k1 = build_kernel(Vec2(10, 0), 1.5, 20);
        const BlurKernel k2 = build_kernel(Vec2(20, 0), 1.5, 40);
        CHECK(k2.rx <= 2 * k1.rx);
        CHECK(k2.ry == k1.ry);
    }
}

TEST_CASE("build_kernel_grad") {
    Rng rng(41);
    const Eigen::Index rows = 24, cols = 20;
    SUBCASE("each derivative kernel sums to zero") {
        for (int i = 0; i < 10; ++i) {
            const AffineParams a = random_params(rng);
            const Eigen::Index y = rng.below(rows), x = rng.below(cols);
            const BlurKernelGrad g = build_kernel_grad(a, y, x, rows, cols, 1.5, 14);
            for (int p = 0; p < 6; ++p) CHECK(std::abs(g.dk[p].sum()) < 1e-9);
        }
    }
    SUBCASE("matches central finite differences of build_kernel") {
        for (int i = 0; i < 12; ++i) {
            const AffineParams a = random_params(rng);
            const Eigen::Index y = rng.below(rows), x = rng.below(cols);
            const double c = rng.uniform(1.0, 2.0);
            const int T = 2 * (4 + int(rng.below(8)));
            const BlurKernelGrad g = build_kernel_grad(a, y, x, rows, cols, c, T);
            const double eps = 1e-4;
            for (int p = 0; p < 6; ++p) {
                Vec6 hi = a.a, lo = a.a;
                hi[p] += eps;
                lo[p] -= eps;
                const BlurKernel kh = build_kernel(AffineParams(hi), y, x, rows, cols, c, T);
                const BlurKernel kl = build_kernel(AffineParams(lo), y, x, rows, cols, c, T);
                const int RX = std::max({kh.rx, kl.rx, g.rx});
                const int RY = std::max({kh.ry, kl.ry, g.ry});
                const Planed fd = (embed(kh.weights, kh.rx, kh.ry, RX, RY) -
                                   embed(kl.weights, kl.rx, kl.ry, RX, RY)) /
                                  (2 * eps);
                const Planed an = embed(g.dk[p], g.rx, g.ry, RX, RY);
                const double scale = std::max(an.abs().maxCoeff(), 1e-12);
                CHECK(max_abs_diff(fd, an) <= 1e-3 * scale + 1e-9);
            }
        }
    }
    SUBCASE("translation derivative is spatially invariant for pure translations") {
        const AffineParams a = AffineParams::translation(4.2, -1.3);
        const BlurKernelGrad g1 = build_kernel_grad(a, 2, 3, rows, cols, 1.5, 12);
        const BlurKernelGrad g2 = build_kernel_grad(a, 20, 15, rows, cols, 1.5, 12);
        CHECK(max_abs_diff(g1.dk[0], g2.dk[0]) == 0.0);
        CHECK(max_abs_diff(g1.dk[3], g2.dk[3]) == 0.0);
    }
}

TEST_CASE("blur operator apply family") {
    Rng rng(51);
    const Eigen::Index rows = 8, cols = 8;
    const AffineParams a = random_params(rng, 3.0, 0.08);
    const int pad = BlurOperator::required_pad(a, rows, cols, 1.5);
    BlurOperator K(a, rows, cols, pad, {1.5, 10});
    const Eigen::MatrixXd M = dense_matrix(K);

    SUBCASE("kernel rows are normalized") {
        const Eigen::VectorXd rowsum = M.rowwise().sum();
        CHECK((rowsum.array() - 1.0).abs().maxCoeff() < 1e-9);
    }
    SUBCASE("constant latent maps to the same constant") {
        const Planed x = Planed::Constant(K.crop().latent_rows(), K.crop().latent_cols(), 0.73);
        const Planed out = K.apply(x);
        CHECK((out - 0.73).abs().maxCoeff() < 1e-12);
    }
    SUBCASE("apply matches the dense matrix") {
        const Planed x = random_plane(K.crop().latent_rows(), K.crop().latent_cols(), rng);
        const Eigen::VectorXd ref = M * flatten(x);
        const Planed out = K.apply(x);
        CHECK((flatten(out) - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("apply_transpose matches the dense transpose and the adjoint identity") {
        const Planed v = random_plane(rows, cols, rng);
        const Eigen::VectorXd ref = M.transpose() * flatten(v);
        CHECK((flatten(K.apply_transpose(v)) - ref).cwiseAbs().maxCoeff() < 1e-12);

        for (int i = 0; i < 5; ++i) {
            const Planed x = random_plane(K.crop().latent_rows(), K.crop().latent_cols(), rng);
            const Planed w = random_plane(rows, cols, rng);
            const double lhs = (K.apply(x) * w).sum();
            const double rhs = (x * K.apply_transpose(w)).sum();
            const double scale = std::sqrt(x.square().sum()) * std::sqrt(w.square().sum());
            CHECK(std::abs(lhs - rhs) <= 1e-10 * scale);
        }
    }
    SUBCASE("transpose of a delta image recovers a kernel column") {
        Planed delta = Planed::Zero(rows, cols);
        delta(3, 4) = 1.0;
        const Eigen::VectorXd col = M.row(3 * cols + 4);
        CHECK((flatten(K.apply_transpose(delta)) - col).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(K.apply_transpose(Planed::Zero(rows, cols)).abs().maxCoeff() == 0.0);
    }
    SUBCASE("apply_squared matches the dense Hadamard square") {
        const Planed sig = random_plane(K.crop().latent_rows(), K.crop().latent_cols(), rng);
        const Eigen::VectorXd ref = M.cwiseProduct(M) * flatten(sig);
        CHECK((flatten(K.apply_squared(sig)) - ref).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(K.apply_squared(Planed::Zero(K.crop().latent_rows(), K.crop().latent_cols()))
                  .abs()
                  .maxCoeff() == 0.0);
        // with sigma = 1 the row sums of K o K lie in (0, 1]
        const Planed ones =
            Planed::Constant(K.crop().latent_rows(), K.crop().latent_cols(), 1.0);
        const Planed s = K.apply_squared(ones);
        CHECK(s.minCoeff() > 0.0);
        CHECK(s.maxCoeff() <= 1.0 + 1e-12);
    }
    SUBCASE("weighted_square_diag matches diag(K^T R K)") {
        const Planed r = random_plane(rows, cols, rng);
        const Eigen::MatrixXd KtRK =
            M.transpose() * flatten(r).asDiagonal() * M;
        CHECK((flatten(K.weighted_square_diag(r)) -
               Eigen::VectorXd(KtRK.diagonal()))
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
}

TEST_CASE("pure translation equals dense convolution with one shared kernel") {
    const AffineParams a = AffineParams::translation(4.0, 0.0);
    const Eigen::Index rows = 32, cols = 32;
    const int pad = BlurOperator::required_pad(a, rows, cols, 1.5);
    const int T = 10;
    BlurOperator K(a, rows, cols, pad, {1.5, T});
    Rng rng(61);
    const Planed x = random_plane(K.crop().latent_rows(), K.crop().latent_cols(), rng);
    const BlurKernel k = build_kernel(Vec2(4.0, 0.0), 1.5, T);
    Planed ref(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index xx = 0; xx < cols; ++xx) {
            double acc = 0;
            for (int dy = -k.ry; dy <= k.ry; ++dy)
                for (int dx = -k.rx; dx <= k.rx; ++dx)
                    acc += k.at(dy, dx) * x(y + pad + dy, xx + pad + dx);
            ref(y, xx) = acc;
        }
    CHECK(max_abs_diff(K.apply(x), ref) < 1e-12);

    SUBCASE("uniform degeneracy: kernels identical at all pixels") {
        const BlurKernel k00 = K.kernel_at(0, 0);
        const BlurKernel k31 = K.kernel_at(rows - 1, cols - 1);
        CHECK(max_abs_diff(k00.weights, k31.weights) == 0.0);
    }
}

TEST_CASE("jacobian_apply") {
    Rng rng(71);
    const Eigen::Index rows = 12, cols = 10;
    SUBCASE("constant latent gives zero columns") {
        const AffineParams a = random_params(rng, 2.0, 0.05);
        const int pad = BlurOperator::required_pad(a, rows, cols, 1.5);
        BlurOperator K(a, rows, cols, pad, {1.5, 10});
        K.ensure_derivatives();
        const Planed x = Planed::Constant(K.crop().latent_rows(), K.crop().latent_cols(), 0.9);
        const auto cols6 = K.jacobian_apply(x);
        for (const auto& col : cols6) CHECK(col.abs().maxCoeff() < 1e-9);
    }
    SUBCASE("columns match operator finite differences") {
        for (int i = 0; i < 4; ++i) {
            const AffineParams a = random_params(rng, 2.0, 0.04);
            const int T = 12;
            const int pad = BlurOperator::required_pad(a, rows, cols, 1.5) + 1;
            BlurOperator K(a, rows, cols, pad, {1.5, T});
            K.ensure_derivatives();
            const Planed x = random_plane(K.crop().latent_rows(), K.crop().latent_cols(), rng);
            const auto cols6 = K.jacobian_apply(x);
            const double eps = 1e-4;
            for (int p = 0; p < 6; ++p) {
                Vec6 hi = a.a, lo = a.a;
                hi[p] += eps;
                lo[p] -= eps;
                const BlurOperator Kh(AffineParams(hi), rows, cols, pad, {1.5, T});
                const BlurOperator Kl(AffineParams(lo), rows, cols, pad, {1.5, T});
                const Planed fd = (Kh.apply(x) - Kl.apply(x)) / (2 * eps);
                const double scale = std::max(cols6[p].abs().maxCoeff(), 1e-12);
                CHECK(max_abs_diff(fd, cols6[p]) <= 1e-3 * scale + 1e-9);
            }
        }
    }
    SUBCASE("translation derivative on a ramp is constant over the interior") {
        const AffineParams a = AffineParams::translation(3.0, 0.0);
        const int pad = BlurOperator::required_pad(a, rows, cols, 1.5);
        BlurOperator K(a, rows, cols, pad, {1.5, 10});
        K.ensure_derivatives();
        Planed ramp(K.crop().latent_rows(), K.crop().latent_cols());
        for (Eigen::Index y = 0; y < ramp.rows(); ++y)
            for (Eigen::Index x = 0; x < ramp.cols(); ++x) ramp(y, x) = 0.05 * x;
        const auto cols6 = K.jacobian_apply(ramp);
        const Planed interior = cols6[0].block(2, 2, rows - 4, cols - 4);
        CHECK((interior - interior(0, 0)).abs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("gauss_newton_terms") {
    Rng rng(81);
    const Eigen::Index rows = 8, cols = 8;
    const AffineParams a = random_params(rng, 2.5, 0.06);
    const int pad = BlurOperator::required_pad(a, rows, cols, 1.5);
    BlurOperator K(a, rows, cols, pad, {1.5, 10});
    K.ensure_derivatives();
    const Planed sig = random_plane(K.crop().latent_rows(), K.crop().latent_cols(), rng);
    const Planed r = random_plane(rows, cols, rng);
    Mat6 H;
    Vec6 h;
    K.gauss_newton_terms(sig, r, H, h);

    SUBCASE("zero variance gives zero terms") {
        Mat6 H0;
        Vec6 h0;
        K.gauss_newton_terms(Planed::Zero(sig.rows(), sig.cols()), r, H0, h0);
        CHECK(H0.norm() == 0.0);
        CHECK(h0.norm() == 0.0);
    }
    SUBCASE("symmetric and PSD") {
        CHECK((H - H.transpose()).norm() < 1e-10);
        const Eigen::SelfAdjointEigenSolver<Mat6> es(H);
        CHECK(es.eigenvalues().minCoeff() > -1e-10);
    }
    SUBCASE("matches the materialized-matrix computation") {
        const Eigen::MatrixXd M = dense_matrix(K);
        const Eigen::VectorXd rv = flatten(r), sv = flatten(sig);
        std::array<Eigen::MatrixXd, 6> D;
        for (int p = 0; p < 6; ++p) D[p] = dense_derivative(K, p);
        for (int p = 0; p < 6; ++p) {
            const double hp = rv.dot(D[p].cwiseProduct(M) * sv);
            CHECK(h[p] == doctest::Approx(hp).epsilon(1e-9));
            for (int q = 0; q < 6; ++q) {
                const double Hpq = rv.dot(D[p].cwiseProduct(D[q]) * sv);
                CHECK(H(p, q) == doctest::Approx(Hpq).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("required_pad accommodates every kernel") {
    Rng rng(91);
    for (int i = 0; i < 10; ++i) {
        const AffineParams a = random_params(rng, 8.0, 0.1);
        const int pad = BlurOperator::required_pad(a, 20, 24, 1.5);
        // construction asserts pad >= max kernel half extent
        CHECK_NOTHROW(BlurOperator(a, 20, 24, pad, {1.5, 0}));
    }
}
