#include "moblur/color_gmm.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace moblur {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::Matrix3d floor_spd(const Eigen::Matrix3d& cov) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(0.5 * (cov + cov.transpose()));
    Eigen::Vector3d ev = es.eigenvalues().cwiseMax(ColorGmm::kEigFloor);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

struct CompCache {
    Eigen::Matrix3d prec;
    double log_norm;  // log pi - 0.5 log det(2 pi cov)
};

std::vector<CompCache> make_cache(const ColorGmm& gmm) {
    std::vector<CompCache> cache(gmm.components());
    for (int j = 0; j < gmm.components(); ++j) {
        const auto& c = gmm.comps[j];
        const Eigen::LLT<Eigen::Matrix3d> llt(c.cov);
        const Eigen::Matrix3d L = llt.matrixL();
        const double logdet = 2.0 * L.diagonal().array().log().sum();
        cache[j].prec = llt.solve(Eigen::Matrix3d::Identity());
        cache[j].log_norm = std::log(std::max(c.pi, 1e-300)) - 0.5 * (3.0 * kLog2Pi + logdet);
    }
    return cache;
}

}  // namespace

void ColorGmm::validate() const {
    require(!comps.empty(), "gmm: empty");
    double s = 0;
    for (const auto& c : comps) {
        require(c.pi >= 0, "gmm: negative weight");
        s += c.pi;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(c.cov);
        require(es.eigenvalues().minCoeff() >= 0.5 * kEigFloor, "gmm: covariance below floor");
    }
    require(std::abs(s - 1.0) < 1e-6, "gmm: weights must sum to 1");
}

double gmm_loglik(const ColorGmm& gmm, const Eigen::Vector3d& pixel) {
    const auto cache = make_cache(gmm);
    double m = -std::numeric_limits<double>::infinity();
    std::vector<double> vals(gmm.components());
    for (int j = 0; j < gmm.components(); ++j) {
        const Eigen::Vector3d d = pixel - gmm.comps[j].mu;
        vals[j] = cache[j].log_norm - 0.5 * d.dot(cache[j].prec * d);
        m = std::max(m, vals[j]);
    }
    double s = 0;
    for (double v : vals) s += std::exp(v - m);
    return m + std::log(s);
}

Planed gmm_loglik_map(const ColorGmm& gmm, const Image& rgb) {
    require(rgb.channels() == 3, "gmm_loglik_map: 3-channel image expected");
    const auto cache = make_cache(gmm);
    const int J = gmm.components();
    Planed out(rgb.height(), rgb.width());
    std::vector<double> vals(J);
    for (Eigen::Index y = 0; y < rgb.height(); ++y)
        for (Eigen::Index x = 0; x < rgb.width(); ++x) {
            const Eigen::Vector3d p(rgb.plane(0)(y, x), rgb.plane(1)(y, x), rgb.plane(2)(y, x));
            double m = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < J; ++j) {
                const Eigen::Vector3d d = p - gmm.comps[j].mu;
                vals[j] = cache[j].log_norm - 0.5 * d.dot(cache[j].prec * d);
                m = std::max(m, vals[j]);
            }
            double s = 0;
            for (int j = 0; j < J; ++j) s += std::exp(vals[j] - m);
            out(y, x) = m + std::log(s);
        }
    return out;
}

double gmm_weighted_loglik(const ColorGmm& gmm, const Eigen::Matrix3Xd& pixels,
                           const Eigen::VectorXd& weights) {
    double ll = 0;
    for (Eigen::Index i = 0; i < pixels.cols(); ++i)
        ll += weights[i] * gmm_loglik(gmm, pixels.col(i));
    return ll;
}

ColorGmm weighted_em_step(const ColorGmm& gmm, const Eigen::Matrix3Xd& pixels,
                          const Eigen::VectorXd& weights) {
    const int J = gmm.components();
    const Eigen::Index n = pixels.cols();
    require(weights.size() == n, "weighted_em_step: weight count mismatch");
    const auto cache = make_cache(gmm);

    Eigen::MatrixXd logp(n, J);
    for (int j = 0; j < J; ++j)
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Vector3d d = pixels.col(i) - gmm.comps[j].mu;
            logp(i, j) = cache[j].log_norm - 0.5 * d.dot(cache[j].prec * d);
        }
    const Eigen::VectorXd m = logp.rowwise().maxCoeff();
    const Eigen::VectorXd lse =
        m.array() + (logp.colwise() - m).array().exp().rowwise().sum().log();
    Eigen::MatrixXd resp = (logp.colwise() - lse).array().exp();  // alpha_{i,j}

    ColorGmm out = gmm;
    Eigen::VectorXd N(J);
    for (int j = 0; j < J; ++j) {
        const Eigen::VectorXd wr = resp.col(j).cwiseProduct(weights);
        N[j] = wr.sum();
        if (N[j] < 1e-8) {
            // reseed on the worst-explained pixel
            Eigen::Index worst = 0;
            double worst_ll = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < n; ++i)
                if (weights[i] > 0 && lse[i] < worst_ll) {
                    worst_ll = lse[i];
                    worst = i;
                }
            out.comps[j].mu = pixels.col(worst);
            out.comps[j].cov = 0.01 * Eigen::Matrix3d::Identity();
            N[j] = 1e-8;
            continue;
        }
        const Eigen::Vector3d mu = (pixels * wr) / N[j];
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Vector3d d = pixels.col(i) - mu;
            cov += wr[i] * d * d.transpose();
        }
        out.comps[j].mu = mu;
        out.comps[j].cov = floor_spd(cov / N[j]);
    }
    const double Nsum = N.sum();
    for (int j = 0; j < J; ++j) out.comps[j].pi = N[j] / Nsum;
    return out;
}

Eigen::Matrix3Xd image_as_pixels(const Image& rgb) {
    require(rgb.channels() == 3, "image_as_pixels: 3 channels expected");
    const Eigen::Index n = rgb.height() * rgb.width();
    Eigen::Matrix3Xd out(3, n);
    Eigen::Index i = 0;
    for (Eigen::Index y = 0; y < rgb.height(); ++y)
        for (Eigen::Index x = 0; x < rgb.width(); ++x, ++i)
            out.col(i) << rgb.plane(0)(y, x), rgb.plane(1)(y, x), rgb.plane(2)(y, x);
    return out;
}

namespace {

// weighted k-means++ seeding followed by a few Lloyd rounds
std::vector<Eigen::Vector3d> kmeans(const Eigen::Matrix3Xd& px, const Eigen::VectorXd& w, int k,
                                    Rng& rng) {
    const Eigen::Index n = px.cols();
    std::vector<Eigen::Vector3d> centers;
    // first center: weighted draw
    double total = w.sum();
    double target = rng.uniform() * total, acc = 0;
    Eigen::Index first = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        acc += w[i];
        if (acc >= target) {
            first = i;
            break;
        }
    }
    centers.push_back(px.col(first));
    Eigen::VectorXd d2 = (px.colwise() - centers[0]).colwise().squaredNorm();
    while (static_cast<int>(centers.size()) < k) {
        const Eigen::VectorXd score = d2.cwiseProduct(w);
        const double tot = score.sum();
        if (tot <= 1e-18) break;  // fewer distinct colors than k
        double t = rng.uniform() * tot, a = 0;
        Eigen::Index pick = n - 1;
        for (Eigen::Index i = 0; i < n; ++i) {
            a += score[i];
            if (a >= t) {
                pick = i;
                break;
            }
        }
        centers.push_back(px.col(pick));
        d2 = d2.cwiseMin((px.colwise() - centers.back()).colwise().squaredNorm());
    }
    for (int round = 0; round < 5; ++round) {
        std::vector<Eigen::Vector3d> sum(centers.size(), Eigen::Vector3d::Zero());
        std::vector<double> mass(centers.size(), 0.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < centers.size(); ++c) {
                const double d = (px.col(i) - centers[c]).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = static_cast<int>(c);
                }
            }
            sum[best] += w[i] * px.col(i);
            mass[best] += w[i];
        }
        for (std::size_t c = 0; c < centers.size(); ++c)
            if (mass[c] > 1e-12) centers[c] = sum[c] / mass[c];
    }
    return centers;
}

ColorGmm init_side(const Eigen::Matrix3Xd& px, const Eigen::VectorXd& w, int k, Rng& rng) {
    auto centers = kmeans(px, w, k, rng);
    ColorGmm gmm;
    for (const auto& c : centers) {
        ColorGmm::Component comp;
        comp.pi = 1.0 / centers.size();
        comp.mu = c;
        comp.cov = 0.01 * Eigen::Matrix3d::Identity();
        gmm.comps.push_back(comp);
    }
    return weighted_em_step(gmm, px, w);
}

}  // namespace

std::pair<ColorGmm, ColorGmm> init_color_models(const Image& rgb, const Planed& r,
                                                int components, Rng& rng) {
    require(rgb.height() == r.rows() && rgb.width() == r.cols(), "init_color_models: dims");
    const Eigen::Matrix3Xd px = image_as_pixels(rgb);
    Eigen::VectorXd wf(px.cols()), wb(px.cols());
    Eigen::Index i = 0;
    for (Eigen::Index y = 0; y < r.rows(); ++y)
        for (Eigen::Index x = 0; x < r.cols(); ++x, ++i) {
            wf[i] = r(y, x);
            wb[i] = 1.0 - r(y, x);
        }
    // both sides seed from the same fork: symmetric weights give symmetric models
    Rng side_rng = rng.fork();
    Rng side_rng_b = side_rng;
    return {init_side(px, wf, components, side_rng),
            init_side(px, wb, components, side_rng_b)};
}

}  // namespace moblur
