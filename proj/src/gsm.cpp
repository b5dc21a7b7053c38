#include "moblur/gsm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace moblur {

void GsmPrior::validate() const {
    require(pi.size() == sigma.size() && pi.size() > 0, "gsm: pi/sigma size mismatch");
    require(std::abs(pi.sum() - 1.0) < 1e-9, "gsm: weights must sum to 1");
    for (int j = 0; j < components(); ++j) {
        require(pi[j] > 0, "gsm: weights must be positive");
        require(sigma[j] > 0, "gsm: sigmas must be positive");
        if (j) require(sigma[j] > sigma[j - 1], "gsm: sigmas must be strictly increasing");
    }
    require(filterbank.size() > 0, "gsm: empty filter bank");
}

GsmPrior GsmPrior::load(const std::string& path) {
    std::ifstream f(path);
    require(static_cast<bool>(f), "gsm: cannot open " + path);
    GsmPrior p;
    std::string line;
    int J = -1;
    std::vector<std::string> filter_ids;
    std::vector<double> pis, sigmas;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string head;
        ss >> head;
        if (head == "J") {
            ss >> J;
        } else if (head == "filters") {
            std::string id;
            while (ss >> id) filter_ids.push_back(id);
        } else {
            pis.push_back(std::stod(head));
            double s;
            ss >> s;
            sigmas.push_back(s);
        }
    }
    require(J > 0 && static_cast<int>(pis.size()) == J, "gsm: malformed file " + path);
    p.pi = Eigen::Map<Eigen::VectorXd>(pis.data(), J);
    p.sigma = Eigen::Map<Eigen::VectorXd>(sigmas.data(), J);
    if (!filter_ids.empty()) {
        DerivativeFilterBank bank;
        const auto known = DerivativeFilterBank::forward_differences();
        for (const auto& id : filter_ids) {
            bool found = false;
            for (const auto& fs : known.filters)
                if (fs.id == id) {
                    bank.filters.push_back(fs);
                    found = true;
                }
            require(found, "gsm: unknown filter id " + id);
        }
        p.filterbank = bank;
    }
    p.validate();
    return p;
}

void GsmPrior::save(const std::string& path) const {
    validate();
    std::ofstream f(path);
    require(static_cast<bool>(f), "gsm: cannot write " + path);
    f << "# GSM derivative prior (pi sigma per line)\n";
    f << "J " << components() << "\nfilters";
    for (const auto& fs : filterbank.filters) f << " " << fs.id;
    f << "\n";
    f.precision(17);
    for (int j = 0; j < components(); ++j) f << pi[j] << " " << sigma[j] << "\n";
}

GsmPrior GsmPrior::shipped_default() {
    GsmPrior p;
    p.pi.resize(4);
    p.sigma.resize(4);
    p.pi << 0.57201879269334679, 0.26712031800205432, 0.12134011012427616, 0.039520779180322719;
    p.sigma << 0.0091683776369467859, 0.037057527450256979, 0.10668904944102366,
        0.31254898822656571;
    return p;
}

GsmPrior fit_gsm(const std::vector<double>& samples, int components, int max_iters,
                 std::vector<double>* loglik_trace) {
    const int J = components;
    const auto n = static_cast<Eigen::Index>(samples.size());
    require(J >= 1, "fit_gsm: components >= 1");
    require(n >= 10 * J, "fit_gsm: need at least 10*J samples");
    Eigen::Map<const Eigen::VectorXd> s(samples.data(), n);
    const Eigen::VectorXd s2 = s.array().square();
    const double ms = s2.mean();
    require(ms > 0, "fit_gsm: degenerate (all-zero) samples");

    // log-spaced scale init around the sample std
    const double sd = std::sqrt(ms);
    Eigen::VectorXd sig(J), pi = Eigen::VectorXd::Constant(J, 1.0 / J);
    for (int j = 0; j < J; ++j) {
        const double f = J == 1 ? 0.0 : (static_cast<double>(j) / (J - 1) - 0.5) * 2.0;
        sig[j] = sd * std::pow(10.0, f);
    }

    const double log2pi = std::log(2.0 * M_PI);
    Eigen::ArrayXXd logp(n, J);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iters; ++it) {
        for (int j = 0; j < J; ++j)
            logp.col(j) = (std::log(pi[j]) - std::log(sig[j]) - 0.5 * log2pi) -
                          s2.array() / (2.0 * sig[j] * sig[j]);
        const Eigen::ArrayXd m = logp.rowwise().maxCoeff();
        const Eigen::ArrayXd lse = m + (logp.colwise() - m).exp().rowwise().sum().log();
        const double ll = lse.sum();
        if (loglik_trace) loglik_trace->push_back(ll);
        // responsibilities
        const Eigen::ArrayXXd resp = (logp.colwise() - lse).exp();
        for (int j = 0; j < J; ++j) {
            const double nj = resp.col(j).sum();
            pi[j] = std::max(nj / static_cast<double>(n), 1e-12);
            const double v = nj > 0 ? (resp.col(j) * s2.array()).sum() / nj : sig[j] * sig[j];
            sig[j] = std::sqrt(std::max(v, 1e-16));
        }
        pi /= pi.sum();
        if (ll - prev_ll < 1e-9 * std::abs(ll) && it > 3) break;
        prev_ll = ll;
    }

    // sort by scale; nudge ties so the strict ordering invariant holds
    std::vector<int> order(J);
    for (int j = 0; j < J; ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return sig[a] < sig[b]; });
    GsmPrior out;
    out.pi.resize(J);
    out.sigma.resize(J);
    for (int j = 0; j < J; ++j) {
        out.pi[j] = pi[order[j]];
        out.sigma[j] = sig[order[j]];
        if (j && out.sigma[j] <= out.sigma[j - 1])
            out.sigma[j] = out.sigma[j - 1] * (1.0 + 1e-9);
    }
    out.pi /= out.pi.sum();
    out.validate();
    return out;
}

std::vector<Planed> gsm_indicator_update(const GsmPrior& prior, const Planed& fhat) {
    const int J = prior.components();
    std::vector<Planed> logv(J);
    for (int j = 0; j < J; ++j) {
        const double bias = std::log(prior.pi[j] / prior.sigma[j]);
        logv[j] = -fhat / (2.0 * prior.sigma[j] * prior.sigma[j]) + bias;
    }
    Planed m = logv[0];
    for (int j = 1; j < J; ++j) m = m.max(logv[j]);
    Planed z = Planed::Zero(fhat.rows(), fhat.cols());
    for (int j = 0; j < J; ++j) z += (logv[j] - m).exp();
    const Planed logz = z.log() + m;
    std::vector<Planed> v(J);
    for (int j = 0; j < J; ++j) v[j] = (logv[j] - logz).exp();
    return v;
}

Planed gsm_mixing_weights(const GsmPrior& prior, const std::vector<Planed>& v) {
    require(static_cast<int>(v.size()) == prior.components(), "gsm weights: J mismatch");
    Planed w = Planed::Zero(v[0].rows(), v[0].cols());
    for (int j = 0; j < prior.components(); ++j)
        w += v[j] / (prior.sigma[j] * prior.sigma[j]);
    return w;
}

}  // namespace moblur
