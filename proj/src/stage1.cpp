#include "moblur/stage1.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>
#include <sstream>

namespace moblur {

namespace {

Planed clamp_r(const Planed& r) {
    return r.max(PosteriorState::kREps).min(1.0 - PosteriorState::kREps);
}

// entropy-safe x*log(x)
inline Planed xlogx(const Planed& x) { return x * x.max(1e-300).log(); }

Planed expected_sq_response(const FilterStencil& f, const ChannelState& cs) {
    const Planed d = apply_filter(f, cs.mu);
    return d.square() + apply_filter_squared(f, cs.sigma);
}

}  // namespace

void Diagnostics::record(int level, int iter, const std::string& step, double F, const Vec6& a) {
    StepRecord rec;
    rec.level = level;
    rec.iter = iter;
    rec.step = step;
    rec.F = F;
    rec.delta_F = trace.empty() || trace.back().level != level ? 0.0 : F - trace.back().F;
    rec.a = a;
    trace.push_back(rec);
}

std::string Diagnostics::to_tsv() const {
    std::ostringstream out;
    out << "level\titer\tstep\tF\tdelta_F\ta1\ta2\ta3\ta4\ta5\ta6\n";
    char buf[64];
    for (const auto& rec : trace) {
        out << rec.level << '\t' << rec.iter << '\t' << rec.step;
        auto put = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << '\t' << buf;
        };
        put(rec.F);
        put(rec.delta_F);
        for (int p = 0; p < 6; ++p) put(rec.a[p]);
        out << '\n';
    }
    return out.str();
}

PosteriorState init_posterior(const Stage1Problem& problem) {
    PosteriorState st;
    st.r = Planed::Constant(problem.obs_rows(), problem.obs_cols(), 0.5);
    const int J = problem.gsm.components();
    const int G = problem.gsm.filterbank.size();
    for (const auto& y : problem.obs) {
        ChannelState cs;
        cs.mu = problem.crop.pad_replicate(y);
        cs.sigma = Planed::Constant(problem.crop.latent_rows(), problem.crop.latent_cols(),
                                    problem.noise.sigma_n * problem.noise.sigma_n);
        cs.v.resize(G);
        for (int g = 0; g < G; ++g) {
            cs.v[g].assign(J, Planed::Constant(problem.crop.latent_rows(),
                                               problem.crop.latent_cols(), 1.0 / J));
        }
        st.ch.push_back(std::move(cs));
    }
    return st;
}

double free_energy(const Stage1Problem& problem, const PosteriorState& state,
                   const BlurOperator& K) {
    const double inv2s = 1.0 / (2.0 * problem.noise.sigma_n * problem.noise.sigma_n);
    double F = 0;
    for (int c = 0; c < problem.channels(); ++c) {
        const ChannelState& cs = state.ch[c];
        const Planed& y = problem.obs[c];
        const Planed Kmu = K.apply(cs.mu);
        const Planed Ksig = K.apply_squared(cs.sigma);
        const Planed mu_c = problem.crop.crop(cs.mu);
        const Planed sig_c = problem.crop.crop(cs.sigma);
        const Planed rbar = 1.0 - state.r;
        // expected log-likelihood (quadratic expansion around the moments)
        F += inv2s * ((state.r * Kmu.square()).sum() + (rbar * mu_c.square()).sum() +
                      (state.r * Ksig).sum() + (rbar * sig_c).sum() -
                      2.0 * (state.r * Kmu * y).sum() - 2.0 * (rbar * mu_c * y).sum() +
                      y.square().sum());
        // GSM energy and indicator terms
        for (int g = 0; g < problem.gsm.filterbank.size(); ++g) {
            const Planed fhat = expected_sq_response(problem.gsm.filterbank.filters[g], cs);
            const Planed w = gsm_mixing_weights(problem.gsm, cs.v[g]);
            F += 0.5 * (w * fhat).sum();
            for (int j = 0; j < problem.gsm.components(); ++j) {
                const double bias = std::log(problem.gsm.sigma[j]) - std::log(problem.gsm.pi[j]);
                F += bias * cs.v[g][j].sum();
                F += xlogx(cs.v[g][j]).sum();
            }
        }
        // Gaussian (negative) entropy
        F += -0.5 * cs.sigma.max(1e-300).log().sum();
    }
    F += potts_expected_energy(problem.potts, state.r);
    F += xlogx(state.r).sum() + xlogx(1.0 - state.r).sum();
    return F;
}

double free_energy(const Stage1Problem& problem, const PosteriorState& state,
                   const AffineParams& a) {
    return free_energy(problem, state, problem.make_operator(a));
}

double motion_likelihood_energy(const Stage1Problem& problem, const PosteriorState& state,
                                const BlurOperator& K) {
    const double inv2s = 1.0 / (2.0 * problem.noise.sigma_n * problem.noise.sigma_n);
    double F = 0;
    for (int c = 0; c < problem.channels(); ++c) {
        const ChannelState& cs = state.ch[c];
        const Planed Kmu = K.apply(cs.mu);
        F += inv2s * ((state.r * Kmu.square()).sum() + (state.r * K.apply_squared(cs.sigma)).sum() -
                      2.0 * (state.r * Kmu * problem.obs[c]).sum());
    }
    return F;
}

void update_indicators(const Stage1Problem& problem, PosteriorState& state) {
    for (auto& cs : state.ch)
        for (int g = 0; g < problem.gsm.filterbank.size(); ++g) {
            const Planed fhat = expected_sq_response(problem.gsm.filterbank.filters[g], cs);
            cs.v[g] = gsm_indicator_update(problem.gsm, fhat);
        }
}

namespace {

struct NormalSystem {
    const Stage1Problem& problem;
    const BlurOperator& K;
    const Planed& r;
    std::vector<Planed> w;  // per-filter mixing weights

    Planed apply(const Planed& p) const {
        const double inv_s2 = 1.0 / (problem.noise.sigma_n * problem.noise.sigma_n);
        Planed out = inv_s2 * (K.apply_transpose(r * K.apply(p)) +
                               problem.crop.uncrop((1.0 - r) * problem.crop.crop(p)));
        for (int g = 0; g < problem.gsm.filterbank.size(); ++g)
            out += apply_filter_transpose(problem.gsm.filterbank.filters[g],
                                          w[g] * apply_filter(problem.gsm.filterbank.filters[g], p));
        return out;
    }

    Planed diagonal() const {
        const double inv_s2 = 1.0 / (problem.noise.sigma_n * problem.noise.sigma_n);
        Planed d = inv_s2 * (K.weighted_square_diag(r) + problem.crop.uncrop(1.0 - r));
        for (int g = 0; g < problem.gsm.filterbank.size(); ++g)
            d += filter_normal_diag(problem.gsm.filterbank.filters[g], w[g]);
        return d;
    }
};

}  // namespace

void update_image(const Stage1Problem& problem, PosteriorState& state, const BlurOperator& K,
                  Diagnostics* diag) {
    const double inv_s2 = 1.0 / (problem.noise.sigma_n * problem.noise.sigma_n);
    for (int c = 0; c < problem.channels(); ++c) {
        ChannelState& cs = state.ch[c];
        NormalSystem sys{problem, K, state.r, {}};
        sys.w.reserve(problem.gsm.filterbank.size());
        for (int g = 0; g < problem.gsm.filterbank.size(); ++g)
            sys.w.push_back(gsm_mixing_weights(problem.gsm, cs.v[g]));

        const Planed rhs = inv_s2 * (K.apply_transpose(state.r * problem.obs[c]) +
                                     problem.crop.uncrop((1.0 - state.r) * problem.obs[c]));
        const Planed d = sys.diagonal();
        const Planed minv = 1.0 / d.max(1e-300);

        // preconditioned CG, warm-started on the previous mean
        Planed x = cs.mu;
        Planed res = rhs - sys.apply(x);
        const double bnorm = std::sqrt(rhs.square().sum());
        const double target = problem.cg_tol * std::max(bnorm, 1e-300);
        double best_res = std::sqrt(res.square().sum());
        Planed best_x = x;
        if (best_res > target) {
            Planed z = minv * res;
            Planed p = z;
            double rz = (res * z).sum();
            bool converged = false;
            for (int it = 0; it < problem.cg_max_iters; ++it) {
                const Planed Ap = sys.apply(p);
                const double pAp = (p * Ap).sum();
                if (pAp <= 0) break;  // SPD by construction; numerical guard
                const double alpha = rz / pAp;
                x += alpha * p;
                res -= alpha * Ap;
                const double rn = std::sqrt(res.square().sum());
                if (rn < best_res) {
                    best_res = rn;
                    best_x = x;
                }
                if (rn <= target) {
                    converged = true;
                    break;
                }
                z = minv * res;
                const double rz_new = (res * z).sum();
                p = z + (rz_new / rz) * p;
                rz = rz_new;
            }
            if (!converged && diag)
                diag->warnings.push_back("cg: no convergence, best rel residual " +
                                        std::to_string(best_res / std::max(bnorm, 1e-300)));
            x = best_x;
        }
        cs.mu = x;
        cs.sigma = 1.0 / d.max(1e-300);
    }
}

Planed segmentation_unaries(const Stage1Problem& problem, const PosteriorState& state,
                            const BlurOperator& K) {
    const double inv2s = 1.0 / (2.0 * problem.noise.sigma_n * problem.noise.sigma_n);
    Planed g = Planed::Constant(problem.obs_rows(), problem.obs_cols(), problem.potts.lambda0);
    for (int c = 0; c < problem.channels(); ++c) {
        const ChannelState& cs = state.ch[c];
        const Planed& y = problem.obs[c];
        const Planed Kmu = K.apply(cs.mu);
        const Planed mu_c = problem.crop.crop(cs.mu);
        g += inv2s * (Kmu.square() + K.apply_squared(cs.sigma) - 2.0 * Kmu * y);
        g -= inv2s * (mu_c.square() + problem.crop.crop(cs.sigma) - 2.0 * mu_c * y);
    }
    return g;
}

void update_segmentation(const Stage1Problem& problem, PosteriorState& state,
                         const BlurOperator& K, const Planed* extra_unary) {
    Planed g = segmentation_unaries(problem, state, K);
    if (extra_unary) g += *extra_unary;
    const Planed act = -g + potts_message(problem.potts, state.r);
    const Planed r_new = 1.0 / (1.0 + (-act).exp());
    const double w = problem.seg_damping;
    state.r = clamp_r((1.0 - w) * state.r + w * r_new);
}

void motion_quadratic_model(const Stage1Problem& problem, const PosteriorState& state,
                            const BlurOperator& K, Mat6& A0, Vec6& b0) {
    const double inv_s2 = 1.0 / (problem.noise.sigma_n * problem.noise.sigma_n);
    const Eigen::Index rows = problem.obs_rows(), cols = problem.obs_cols();
    A0.setZero();
    b0.setZero();
    for (int c = 0; c < problem.channels(); ++c) {
        const ChannelState& cs = state.ch[c];
        Planed jx, jy;
        K.jacobian_gathers(cs.mu, jx, jy);
        const Planed resid = K.apply(cs.mu) - problem.obs[c];
        Mat6 Ac = Mat6::Zero();
        Vec6 bc = Vec6::Zero();
        for (Eigen::Index y = 0; y < rows; ++y) {
            const double py = centered_y(y, rows);
            for (Eigen::Index x = 0; x < cols; ++x) {
                const double px = centered_x(x, cols);
                const double r = state.r(y, x);
                Vec6 J;
                J << jx(y, x), py * jx(y, x), px * jx(y, x), jy(y, x), py * jy(y, x),
                    px * jy(y, x);
                Ac.noalias() += r * J * J.transpose();
                bc.noalias() += (r * resid(y, x)) * J;
            }
        }
        Mat6 H0;
        Vec6 h0;
        K.gauss_newton_terms(cs.sigma, state.r, H0, h0);
        A0 += inv_s2 * (Ac + H0);
        b0 += inv_s2 * (bc + h0);
    }
}

MotionStepResult update_motion(const Stage1Problem& problem, const PosteriorState& state,
                               BlurOperator& K, MotionOptState& opt, Diagnostics* diag) {
    K.ensure_derivatives();
    const Eigen::Index rows = problem.obs_rows(), cols = problem.obs_cols();
    Mat6 A0;
    Vec6 b0;
    motion_quadratic_model(problem, state, K, A0, b0);

    if (!A0.allFinite() || !b0.allFinite() || A0.norm() < 1e-12)
        throw InferenceError("degenerate linearization; initialize with nonzero translation");

    MotionStepResult out;
    out.a = K.params();
    const double F0 = motion_likelihood_energy(problem, state, K);

    const Vec6 d = (A0 + opt.tau * Mat6::Identity()).ldlt().solve(-b0);
    if (!d.allFinite())
        throw InferenceError("degenerate linearization; initialize with nonzero translation");
    const double slope = b0.dot(d);
    if (slope >= 0) {  // no descent direction left (b0 ~ 0): keep a
        opt.tau *= 10.0;
        return out;
    }

    double t = 1.0;
    for (int m = 0; m < problem.armijo_max_backtracks; ++m, t *= problem.armijo_beta) {
        const AffineParams trial(Vec6(K.params().a + t * d));
        // the trial kernels must fit the level's latent padding
        double mx = 0, my = 0;
        for (Eigen::Index y : {Eigen::Index(0), rows - 1})
            for (Eigen::Index x : {Eigen::Index(0), cols - 1}) {
                const Vec2 u = trial.displacement(centered_x(x, cols), centered_y(y, rows));
                mx = std::max(mx, std::abs(u.x()));
                my = std::max(my, std::abs(u.y()));
            }
        const double ext = std::ceil(std::max(mx, my) * 0.5) + std::ceil(problem.kopt.c);
        if (ext > problem.crop.pad) continue;

        BlurOperator Kt = problem.make_operator(trial);
        const double Ft = motion_likelihood_energy(problem, state, Kt);
        if (Ft <= F0 + problem.armijo_sigma * t * slope) {
            out.a = trial;
            out.accepted = true;
            out.op.emplace(std::move(Kt));
            opt.tau = std::max(opt.tau / 3.0, 1e-7);
            return out;
        }
    }
    opt.tau *= 10.0;
    if (diag) diag->warnings.push_back("motion: no Armijo decrease, raising damping");
    return out;
}

LevelResult run_stage1_level(const Stage1Problem& problem, PosteriorState state, AffineParams a,
                             int iters, int level_index, Diagnostics& diag,
                             double early_stop_rel) {
    require(iters >= 1, "run_stage1_level: iters >= 1");
    BlurOperator K = problem.make_operator(a);
    MotionOptState mopt{problem.levenberg_tau_init};
    double F_prev_outer = free_energy(problem, state, K);
    for (int it = 1; it <= iters; ++it) {
        update_indicators(problem, state);
        diag.record(level_index, it, "ind", free_energy(problem, state, K), a.a);
        update_image(problem, state, K, &diag);
        diag.record(level_index, it, "img", free_energy(problem, state, K), a.a);
        update_segmentation(problem, state, K);
        diag.record(level_index, it, "seg", free_energy(problem, state, K), a.a);
        MotionStepResult mot = update_motion(problem, state, K, mopt, &diag);
        if (mot.accepted) {
            a = mot.a;
            K = std::move(*mot.op);
        }
        const double F = free_energy(problem, state, K);
        diag.record(level_index, it, "mot", F, a.a);
        if (F_prev_outer - F < early_stop_rel * std::abs(F_prev_outer) && it > 1) break;
        F_prev_outer = F;
    }
    return {std::move(state), a};
}

}  // namespace moblur
