#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "moblur/color_gmm.hpp"
#include "moblur/gsm.hpp"
#include "moblur/potts.hpp"
#include "test_util.hpp"

#include <cmath>
#include <filesystem>

using namespace moblur;

TEST_CASE("fit_gsm") {
    Rng rng(101);
    SUBCASE("single Gaussian recovers its scale") {
        std::vector<double> s(4000);
        for (auto& v : s) v = 0.1 * rng.normal();
        const GsmPrior p = fit_gsm(s, 1);
        CHECK(p.sigma[0] == doctest::Approx(0.1).epsilon(0.05));
        CHECK(p.pi[0] == doctest::Approx(1.0));
    }
    SUBCASE("log likelihood is non-decreasing over EM iterations") {
        std::vector<double> s(3000);
        for (auto& v : s) {
            // Laplacian via difference of exponentials
            const double u = rng.uniform(1e-12, 1.0);
            v = 0.05 * (rng.uniform() < 0.5 ? 1 : -1) * std::log(u);
        }
        std::vector<double> trace;
        fit_gsm(s, 4, 60, &trace);
        REQUIRE(trace.size() > 3);
        for (std::size_t i = 1; i < trace.size(); ++i)
            CHECK(trace[i] >= trace[i - 1] - 1e-7 * std::abs(trace[i - 1]));
    }
    SUBCASE("heavy-tailed data spreads the scales over roughly a decade") {
        std::vector<double> s(6000);
        for (auto& v : s) {
            const double u = rng.uniform(1e-12, 1.0);
            v = 0.03 * (rng.uniform() < 0.5 ? 1 : -1) * std::log(u);
        }
        // converged fits on Laplacian data land at a ratio of ~8.5-10.5
        const GsmPrior p = fit_gsm(s, 4, 1000);
        CHECK(p.sigma[3] / p.sigma[0] >= 8.0);
    }
    SUBCASE("degenerate samples are rejected") {
        const std::vector<double> zeros(500, 0.0);
        CHECK_THROWS(fit_gsm(zeros, 2));
        CHECK_THROWS(fit_gsm(std::vector<double>(5, 1.0), 1));  // too few
    }
    SUBCASE("save/load round trip") {
        std::vector<double> s(2000);
        for (auto& v : s) v = 0.07 * rng.normal();
        const GsmPrior p = fit_gsm(s, 3);
        const std::string path = std::filesystem::temp_directory_path() / "moblur_gsm.txt";
        p.save(path);
        const GsmPrior q = GsmPrior::load(path);
        CHECK((p.pi - q.pi).cwiseAbs().maxCoeff() < 1e-15);
        CHECK((p.sigma - q.sigma).cwiseAbs().maxCoeff() < 1e-15);
        CHECK(q.filterbank.size() == 2);
        std::filesystem::remove(path);
    }
    SUBCASE("shipped default is valid") { GsmPrior::shipped_default().validate(); }
}

TEST_CASE("gsm_indicator_update") {
    SUBCASE("single component is always 1") {
        GsmPrior p;
        p.pi = Eigen::VectorXd::Ones(1);
        p.sigma = Eigen::VectorXd::Constant(1, 0.2);
        const auto v = gsm_indicator_update(p, Planed::Constant(3, 3, 0.5));
        CHECK((v[0] - 1.0).abs().maxCoeff() < 1e-15);
    }
    SUBCASE("zero response weights by pi/sigma") {
        GsmPrior p;
        p.pi.resize(2);
        p.sigma.resize(2);
        p.pi << 0.5, 0.5;
        p.sigma << 1.0, 2.0;
        const auto v = gsm_indicator_update(p, Planed::Zero(2, 2));
        const double w1 = 0.5 / 1.0, w2 = 0.5 / 2.0;
        CHECK(v[0](0, 0) == doctest::Approx(w1 / (w1 + w2)));
        CHECK(v[1](0, 0) == doctest::Approx(w2 / (w1 + w2)));
    }
    SUBCASE("hand evaluation at fhat = 2") {
        GsmPrior p;
        p.pi.resize(2);
        p.sigma.resize(2);
        p.pi << 0.5, 0.5;
        p.sigma << 1.0, 2.0;
        const auto v = gsm_indicator_update(p, Planed::Constant(1, 1, 2.0));
        const double n1 = std::exp(-1.0) * 0.5;         // exp(-2/2) * pi/sigma
        const double n2 = std::exp(-0.25) * 0.25;       // exp(-2/8) * pi/sigma
        CHECK(v[0](0, 0) == doctest::Approx(n1 / (n1 + n2)).epsilon(1e-12));
    }
    SUBCASE("rows sum to one even for extreme responses") {
        Rng rng(103);
        GsmPrior p = GsmPrior::shipped_default();
        Planed fhat(4, 4);
        for (Eigen::Index y = 0; y < 4; ++y)
            for (Eigen::Index x = 0; x < 4; ++x)
                fhat(y, x) = std::pow(10.0, rng.uniform(-12.0, 6.0));
        const auto v = gsm_indicator_update(p, fhat);
        Planed sum = Planed::Zero(4, 4);
        for (const auto& vj : v) sum += vj;
        CHECK((sum - 1.0).abs().maxCoeff() < 1e-12);
        for (const auto& vj : v) CHECK(vj.minCoeff() >= 0.0);
    }
}

TEST_CASE("potts prior") {
    PottsPrior prior;
    prior.lambda = 0.7;
    prior.lambda0 = 0.3;
    SUBCASE("message vanishes at r = 1/2") {
        const Planed r = Planed::Constant(5, 6, 0.5);
        CHECK(potts_message(prior, r).abs().maxCoeff() < 1e-12);
    }
    SUBCASE("interior pixel with unanimous neighbors") {
        const Planed r = Planed::Ones(5, 5);
        const Planed m = potts_message(prior, r);
        CHECK(m(2, 2) == doctest::Approx(8 * prior.lambda));
        CHECK(m(0, 0) == doctest::Approx(3 * prior.lambda));  // corner: 3 neighbors
        CHECK(m(0, 2) == doctest::Approx(5 * prior.lambda));  // edge: 5 neighbors
    }
    SUBCASE("expected energy on binary masks equals the enumeration oracle") {
        // exhaustive 3x3 masks: lambda0 |fg| + lambda * #disagreeing 8-neighbor pairs
        for (int bits = 0; bits < 512; ++bits) {
            Planed h(3, 3);
            for (int i = 0; i < 9; ++i) h(i / 3, i % 3) = (bits >> i) & 1;
            double fg = h.sum(), disagree = 0;
            for (int y = 0; y < 3; ++y)
                for (int x = 0; x < 3; ++x)
                    for (auto [dy, dx] : {std::pair{0, 1}, {1, 0}, {1, 1}, {1, -1}}) {
                        const int ny = y + dy, nx = x + dx;
                        if (ny < 0 || ny > 2 || nx < 0 || nx > 2) continue;
                        if (h(y, x) != h(ny, nx)) disagree += 1;
                    }
            const double expected = prior.lambda0 * fg + prior.lambda * disagree;
            CHECK(potts_expected_energy(prior, h) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("color gmm loglik") {
    SUBCASE("single isotropic component at its mean") {
        ColorGmm g;
        ColorGmm::Component c;
        c.pi = 1.0;
        c.mu = Eigen::Vector3d(0.3, 0.5, 0.7);
        const double s = 0.02;
        c.cov = s * Eigen::Matrix3d::Identity();
        g.comps.push_back(c);
        const double ll = gmm_loglik(g, c.mu);
        CHECK(ll == doctest::Approx(-1.5 * std::log(2 * M_PI * s)).epsilon(1e-12));
    }
    SUBCASE("far pixel is very negative but finite") {
        ColorGmm g;
        ColorGmm::Component c;
        c.pi = 1.0;
        c.mu = Eigen::Vector3d::Zero();
        c.cov = 1e-4 * Eigen::Matrix3d::Identity();
        g.comps.push_back(c);
        const double ll = gmm_loglik(g, Eigen::Vector3d(50, 50, 50));
        CHECK(std::isfinite(ll));
        CHECK(ll < -1e4);
    }
    SUBCASE("random mixture matches a naive direct sum") {
        Rng rng(111);
        ColorGmm g;
        for (int j = 0; j < 4; ++j) {
            ColorGmm::Component c;
            c.pi = 0.25;
            c.mu = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());
            Eigen::Matrix3d A;
            for (int r = 0; r < 3; ++r)
                for (int cc = 0; cc < 3; ++cc) A(r, cc) = rng.uniform(-0.1, 0.1);
            c.cov = A * A.transpose() + 0.05 * Eigen::Matrix3d::Identity();
            g.comps.push_back(c);
        }
        for (int i = 0; i < 20; ++i) {
            const Eigen::Vector3d p(rng.uniform(), rng.uniform(), rng.uniform());
            double naive = 0;
            for (const auto& c : g.comps) {
                const Eigen::Vector3d d = p - c.mu;
                naive += c.pi *
                         std::exp(-0.5 * d.dot(c.cov.inverse() * d)) /
                         std::sqrt(std::pow(2 * M_PI, 3) * c.cov.determinant());
            }
            CHECK(gmm_loglik(g, p) == doctest::Approx(std::log(naive)).epsilon(1e-9));
        }
    }
}

namespace {

Eigen::Matrix3Xd two_cluster_pixels(Rng& rng, int n, const Eigen::Vector3d& m1,
                                    const Eigen::Vector3d& m2, Eigen::VectorXd& labels) {
    Eigen::Matrix3Xd px(3, n);
    labels.resize(n);
    for (int i = 0; i < n; ++i) {
        const bool first = i < n / 2;
        const Eigen::Vector3d m = first ? m1 : m2;
        labels[i] = first ? 1.0 : 0.0;
        for (int c = 0; c < 3; ++c) px(c, i) = m[c] + 0.01 * rng.normal();
    }
    return px;
}

}  // namespace

TEST_CASE("weighted_em_step") {
    Rng rng(121);
    SUBCASE("unit weights reduce to the standard EM step") {
        Eigen::VectorXd labels;
        const Eigen::Matrix3Xd px = two_cluster_pixels(rng, 200, Eigen::Vector3d(0.2, 0.2, 0.2),
                                                       Eigen::Vector3d(0.8, 0.8, 0.8), labels);
        ColorGmm g;
        for (int j = 0; j < 2; ++j) {
            ColorGmm::Component c;
            c.pi = 0.5;
            c.mu = Eigen::Vector3d::Constant(j == 0 ? 0.3 : 0.7);
            c.cov = 0.01 * Eigen::Matrix3d::Identity();
            g.comps.push_back(c);
        }
        const ColorGmm a = weighted_em_step(g, px, Eigen::VectorXd::Ones(px.cols()));
        // standard EM oracle computed directly
        Eigen::MatrixXd resp(px.cols(), 2);
        for (Eigen::Index i = 0; i < px.cols(); ++i) {
            double w[2];
            for (int j = 0; j < 2; ++j) {
                const Eigen::Vector3d d = px.col(i) - g.comps[j].mu;
                w[j] = g.comps[j].pi *
                       std::exp(-0.5 * d.dot(g.comps[j].cov.inverse() * d)) /
                       std::sqrt(std::pow(2 * M_PI, 3) * g.comps[j].cov.determinant());
            }
            resp(i, 0) = w[0] / (w[0] + w[1]);
            resp(i, 1) = w[1] / (w[0] + w[1]);
        }
        for (int j = 0; j < 2; ++j) {
            const double N = resp.col(j).sum();
            const Eigen::Vector3d mu = (px * resp.col(j)) / N;
            CHECK((a.comps[j].mu - mu).norm() < 1e-9);
            CHECK(a.comps[j].pi == doctest::Approx(N / px.cols()).epsilon(1e-9));
        }
    }
    SUBCASE("single component gives the weighted mean") {
        Eigen::VectorXd labels;
        const Eigen::Matrix3Xd px = two_cluster_pixels(rng, 100, Eigen::Vector3d(0.1, 0.4, 0.9),
                                                       Eigen::Vector3d(0.9, 0.1, 0.2), labels);
        Eigen::VectorXd w(px.cols());
        for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(0.05, 1.0);
        ColorGmm g;
        ColorGmm::Component c;
        c.pi = 1.0;
        c.mu = Eigen::Vector3d::Constant(0.5);
        c.cov = 0.05 * Eigen::Matrix3d::Identity();
        g.comps.push_back(c);
        const ColorGmm a = weighted_em_step(g, px, w);
        const Eigen::Vector3d expect = (px * w) / w.sum();
        CHECK((a.comps[0].mu - expect).norm() < 1e-12);
    }
    SUBCASE("hard labels converge to cluster means within a few steps") {
        Eigen::VectorXd labels;
        const Eigen::Vector3d m1(0.15, 0.3, 0.5), m2(0.85, 0.6, 0.1);
        const Eigen::Matrix3Xd px = two_cluster_pixels(rng, 400, m1, m2, labels);
        ColorGmm g;
        for (int j = 0; j < 2; ++j) {
            ColorGmm::Component c;
            c.pi = 0.5;
            c.mu = Eigen::Vector3d::Constant(0.4 + 0.2 * j);
            c.cov = 0.05 * Eigen::Matrix3d::Identity();
            g.comps.push_back(c);
        }
        ColorGmm fg = g;
        for (int it = 0; it < 10; ++it) fg = weighted_em_step(fg, px, labels);
        // the foreground-weighted model should land on m1
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : fg.comps) best = std::min(best, (c.mu - m1).norm());
        CHECK(best < 0.02 * m1.norm() + 0.02);
    }
    SUBCASE("weighted log likelihood never decreases") {
        Rng rng2(131);
        for (int trial = 0; trial < 10; ++trial) {
            Eigen::Matrix3Xd px(3, 120);
            for (int i = 0; i < 120; ++i)
                px.col(i) = Eigen::Vector3d(rng2.uniform(), rng2.uniform(), rng2.uniform());
            Eigen::VectorXd w(120);
            for (int i = 0; i < 120; ++i) w[i] = rng2.uniform(0.01, 1.0);
            ColorGmm g;
            for (int j = 0; j < 3; ++j) {
                ColorGmm::Component c;
                c.pi = 1.0 / 3;
                c.mu = Eigen::Vector3d(rng2.uniform(), rng2.uniform(), rng2.uniform());
                c.cov = 0.02 * Eigen::Matrix3d::Identity();
                g.comps.push_back(c);
            }
            double prev = gmm_weighted_loglik(g, px, w);
            for (int it = 0; it < 5; ++it) {
                g = weighted_em_step(g, px, w);
                const double ll = gmm_weighted_loglik(g, px, w);
                CHECK(ll >= prev - 1e-9 * std::abs(prev));
                prev = ll;
            }
        }
    }
}

TEST_CASE("init_color_models") {
    Rng rng(141);
    SUBCASE("two-color image with a crisp mask recovers both colors") {
        Image img;
        const Eigen::Vector3d fg_color(0.9, 0.2, 0.1), bg_color(0.1, 0.3, 0.8);
        Planed r(16, 16);
        for (int c = 0; c < 3; ++c) img.planes.push_back(Planed(16, 16));
        for (Eigen::Index y = 0; y < 16; ++y)
            for (Eigen::Index x = 0; x < 16; ++x) {
                const bool fg = x >= 8;
                r(y, x) = fg ? 1.0 : 0.0;
                for (int c = 0; c < 3; ++c)
                    img.planes[c](y, x) =
                        (fg ? fg_color[c] : bg_color[c]) + 0.005 * rng.normal();
            }
        auto [f, b] = init_color_models(img, r, 2, rng);
        double df = std::numeric_limits<double>::infinity();
        for (const auto& c : f.comps) df = std::min(df, (c.mu - fg_color).norm());
        double db = std::numeric_limits<double>::infinity();
        for (const auto& c : b.comps) db = std::min(db, (c.mu - bg_color).norm());
        CHECK(df < 0.02 * fg_color.norm() + 0.01);
        CHECK(db < 0.02 * bg_color.norm() + 0.01);
    }
    SUBCASE("uniform r gives matching sides") {
        Image img;
        for (int c = 0; c < 3; ++c) img.planes.push_back(random_plane(12, 12, rng));
        const Planed r = Planed::Constant(12, 12, 0.5);
        auto [f, b] = init_color_models(img, r, 3, rng);
        REQUIRE(f.components() == b.components());
        for (int j = 0; j < f.components(); ++j) {
            CHECK((f.comps[j].mu - b.comps[j].mu).norm() < 1e-12);
            CHECK((f.comps[j].cov - b.comps[j].cov).norm() < 1e-12);
        }
    }
    SUBCASE("more components than distinct colors does not crash") {
        Image img;
        for (int c = 0; c < 3; ++c) img.planes.push_back(Planed::Constant(8, 8, 0.5));
        const Planed r = Planed::Constant(8, 8, 0.7);
        auto [f, b] = init_color_models(img, r, 5, rng);
        CHECK(f.components() >= 1);
        CHECK(f.components() <= 5);
        f.validate();
        b.validate();
    }
}
