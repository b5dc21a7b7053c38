#include "moblur/pipeline.hpp"

#include "moblur/parallel.hpp"
#include "moblur/rng.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace moblur {

namespace {

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad value for " + key + ": '" + v + "'");
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config: bad value for " + key + ": '" + v + "'");
    }
}

}  // namespace

const std::vector<std::string>& Config::key_names() {
    static const std::vector<std::string> keys = {
        "c",
        "time_steps",
        "sigma_n",
        "sigma_n_coarse",
        "lambda",
        "lambda0",
        "lambda0_stage2",
        "lambda_c",
        "gsm_file",
        "min_dim",
        "stage1_iters",
        "stage2_iters",
        "init_translation",
        "init_axis",
        "armijo_sigma",
        "armijo_beta",
        "armijo_max_backtracks",
        "levenberg_tau",
        "cg_tol",
        "cg_max_iters",
        "seg_damping",
        "gmm_components",
        "seed",
        "threads",
    };
    return keys;
}

void Config::set(const std::string& key, const std::string& value) {
    if (key == "c")
        c = parse_double(key, value);
    else if (key == "time_steps")
        time_steps = static_cast<int>(parse_int(key, value));
    else if (key == "sigma_n")
        sigma_n = parse_double(key, value);
    else if (key == "sigma_n_coarse")
        sigma_n_coarse = parse_double(key, value);
    else if (key == "lambda")
        lambda = parse_double(key, value);
    else if (key == "lambda0")
        lambda0 = parse_double(key, value);
    else if (key == "lambda0_stage2")
        lambda0_stage2 = parse_double(key, value);
    else if (key == "lambda_c")
        lambda_c = parse_double(key, value);
    else if (key == "gsm_file")
        gsm_file = value;
    else if (key == "min_dim")
        min_dim = static_cast<int>(parse_int(key, value));
    else if (key == "stage1_iters")
        stage1_iters = static_cast<int>(parse_int(key, value));
    else if (key == "stage2_iters")
        stage2_iters = static_cast<int>(parse_int(key, value));
    else if (key == "init_translation")
        init_translation = parse_double(key, value);
    else if (key == "init_axis")
        init_axis = value;
    else if (key == "armijo_sigma")
        armijo_sigma = parse_double(key, value);
    else if (key == "armijo_beta")
        armijo_beta = parse_double(key, value);
    else if (key == "armijo_max_backtracks")
        armijo_max_backtracks = static_cast<int>(parse_int(key, value));
    else if (key == "levenberg_tau")
        levenberg_tau = parse_double(key, value);
    else if (key == "cg_tol")
        cg_tol = parse_double(key, value);
    else if (key == "cg_max_iters")
        cg_max_iters = static_cast<int>(parse_int(key, value));
    else if (key == "seg_damping")
        seg_damping = parse_double(key, value);
    else if (key == "gmm_components")
        gmm_components = static_cast<int>(parse_int(key, value));
    else if (key == "seed")
        seed = static_cast<unsigned long long>(parse_int(key, value));
    else if (key == "threads")
        threads = static_cast<int>(parse_int(key, value));
    else
        throw ConfigError("config: unknown key '" + key + "'");
}

void Config::validate() const {
    auto check = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("config: " + msg);
    };
    check(c >= 1.0 && c <= 2.0, "c must be in [1,2]");
    check(time_steps >= 0, "time_steps must be >= 0");
    check(sigma_n > 0 && sigma_n_coarse >= sigma_n, "sigma_n schedule must satisfy 0 < floor <= coarse");
    check(lambda > 0, "lambda must be positive");
    check(lambda0 >= 0 && lambda0_stage2 >= 0, "lambda0 must be >= 0");
    check(lambda_c >= 0, "lambda_c must be >= 0");
    check(min_dim >= 16, "min_dim must be >= 16");
    check(stage1_iters >= 1 && stage2_iters >= 1, "iteration counts must be >= 1");
    check(init_translation > 0, "init_translation must be positive (a = 0 is singular)");
    check(init_axis == "x" || init_axis == "y", "init_axis must be x or y");
    check(armijo_sigma > 0 && armijo_sigma < 1, "armijo_sigma in (0,1)");
    check(armijo_beta > 0 && armijo_beta < 1, "armijo_beta in (0,1)");
    check(armijo_max_backtracks >= 1, "armijo_max_backtracks >= 1");
    check(levenberg_tau > 0, "levenberg_tau must be positive");
    check(cg_tol > 0 && cg_tol < 1, "cg_tol in (0,1)");
    check(cg_max_iters >= 1, "cg_max_iters >= 1");
    check(seg_damping > 0 && seg_damping <= 1, "seg_damping in (0,1]");
    check(gmm_components >= 1 && gmm_components <= 16, "gmm_components in [1,16]");
    check(threads >= 0, "threads must be >= 0");
}

void Config::apply_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        // trim
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value");
        auto trim = [](std::string s) {
            const auto b2 = s.find_first_not_of(" \t");
            if (b2 == std::string::npos) return std::string();
            const auto e2 = s.find_last_not_of(" \t");
            return s.substr(b2, e2 - b2 + 1);
        };
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    validate();
}

Config Config::load(const std::string& path) {
    Config cfg;
    cfg.apply_file(path);
    return cfg;
}

std::pair<PosteriorState, AffineParams> initialize(const Stage1Problem& problem,
                                                   const Config& cfg) {
    if (cfg.init_translation == 0.0)
        throw InferenceError("initialize: a = 0 makes the motion system matrix singular");
    AffineParams a = cfg.init_axis == "y" ? AffineParams::translation(0.0, cfg.init_translation)
                                          : AffineParams::translation(cfg.init_translation, 0.0);
    return {init_posterior(problem), a};
}

namespace {

Planed upsample_latent(const Planed& latent, const CropOperator& from, const CropOperator& to) {
    const Planed content = from.crop(latent);
    const Planed up = resize_bilinear(content, to.obs_rows, to.obs_cols);
    return to.pad_replicate(up);
}

}  // namespace

std::pair<PosteriorState, AffineParams> propagate_level(const PosteriorState& state,
                                                        const AffineParams& a,
                                                        const CropOperator& from,
                                                        const CropOperator& to) {
    PosteriorState out;
    out.r = resize_bilinear(state.r, to.obs_rows, to.obs_cols)
                .max(PosteriorState::kREps)
                .min(1.0 - PosteriorState::kREps);
    for (const auto& cs : state.ch) {
        ChannelState next;
        next.mu = upsample_latent(cs.mu, from, to);
        next.sigma = upsample_latent(cs.sigma, from, to).max(0.0);
        next.v.resize(cs.v.size());
        for (std::size_t g = 0; g < cs.v.size(); ++g) {
            const int J = static_cast<int>(cs.v[g].size());
            next.v[g].assign(J,
                             Planed::Constant(to.latent_rows(), to.latent_cols(), 1.0 / J));
        }
        out.ch.push_back(std::move(next));
    }
    Vec6 av = a.a;
    av[0] *= 2.0;
    av[3] *= 2.0;
    return {std::move(out), AffineParams(av)};
}

namespace {

struct LevelSetup {
    CropOperator crop;
    BlurOperatorOptions kopt;
};

// Pad and time sampling are fixed per level with headroom, so the free energy
// stays comparable across the level's accepted steps.
LevelSetup level_setup(const AffineParams& a, Eigen::Index rows, Eigen::Index cols,
                       const Config& cfg) {
    const double expected = max_corner_displacement(a, rows, cols);
    const double capacity = 1.5 * std::max(expected, 1.0) + 4.0;
    const int cc = static_cast<int>(std::ceil(cfg.c));
    const int pad = static_cast<int>(std::ceil(capacity * 0.5)) + 2 * cc;
    LevelSetup s;
    s.crop = CropOperator(pad, rows, cols);
    s.kopt.c = cfg.c;
    s.kopt.time_steps = cfg.time_steps > 0 ? cfg.time_steps : auto_time_steps(capacity);
    return s;
}

Stage1Problem make_stage1_problem(std::vector<Planed> obs, const LevelSetup& setup,
                                  const GsmPrior& gsm, double sigma_n, const Config& cfg,
                                  double lambda0) {
    Stage1Problem p;
    p.obs = std::move(obs);
    p.gsm = gsm;
    p.potts.lambda = cfg.lambda;
    p.potts.lambda0 = lambda0;
    p.noise.sigma_n = sigma_n;
    p.crop = setup.crop;
    p.kopt = setup.kopt;
    p.cg_tol = cfg.cg_tol;
    p.cg_max_iters = cfg.cg_max_iters;
    p.armijo_sigma = cfg.armijo_sigma;
    p.armijo_beta = cfg.armijo_beta;
    p.armijo_max_backtracks = cfg.armijo_max_backtracks;
    p.levenberg_tau_init = cfg.levenberg_tau;
    p.seg_damping = cfg.seg_damping;
    return p;
}

AffineParams halve_params(const AffineParams& a) {
    Vec6 v = a.a;
    v[0] *= 0.5;
    v[3] *= 0.5;
    return AffineParams(v);
}

}  // namespace

Result estimate(const Image& image, const Config& cfg) {
    cfg.validate();
    require(image.height() >= 32 && image.width() >= 32, "estimate: image must be >= 32x32");
    set_thread_count(cfg.threads);  // <= 0 selects the hardware default

    const GsmPrior gsm = cfg.gsm_file.empty() ? GsmPrior::shipped_default()
                                              : GsmPrior::load(cfg.gsm_file);
    Rng rng(cfg.seed);

    const Planed Y = luma(image);
    Image color = image;
    if (color.channels() == 1) color.planes = {Y, Y, Y};

    const Pyramid pyr = build_pyramid(Y, cfg.min_dim);
    const int L = pyr.num_levels();
    auto sigma_at = [&](int level) {
        return std::max(cfg.sigma_n, cfg.sigma_n_coarse * std::pow(0.5, L - 1 - level));
    };

    Result out;

    // ---- stage 1: derivative space, coarse to fine ----
    PosteriorState state;
    AffineParams a;
    CropOperator prev_crop;
    for (int l = L - 1; l >= 0; --l) {
        const Planed& img_l = pyr.levels[l];
        const GradientPair grad = to_gradient_domain(img_l);
        const bool coarsest = l == L - 1;
        AffineParams a_pred;
        if (coarsest)
            a_pred = cfg.init_axis == "y" ? AffineParams::translation(0, cfg.init_translation)
                                          : AffineParams::translation(cfg.init_translation, 0);
        else {
            Vec6 v = a.a;
            v[0] *= 2.0;
            v[3] *= 2.0;
            a_pred = AffineParams(v);
        }
        const LevelSetup setup = level_setup(a_pred, img_l.rows(), img_l.cols(), cfg);
        Stage1Problem problem = make_stage1_problem({grad.dx, grad.dy}, setup, gsm, sigma_at(l),
                                                    cfg, cfg.lambda0);
        if (coarsest)
            std::tie(state, a) = initialize(problem, cfg);
        else
            std::tie(state, a) = propagate_level(state, a, prev_crop, problem.crop);
        try {
            LevelResult res =
                run_stage1_level(problem, std::move(state), a, cfg.stage1_iters, l, out.diag);
            state = std::move(res.state);
            a = res.a;
        } catch (const std::exception& e) {
            throw InferenceError("stage1 level " + std::to_string(l) + ": " + e.what());
        }
        prev_crop = problem.crop;
    }

    // ---- stage 2: image space with color models on the pyramid tail ----
    Planed r_stage1 = state.r;  // full resolution
    std::vector<int> tail;
    if (L >= 2) tail = {1, 0};
    else tail = {0};

    ColorGmm fg, bg;
    PosteriorState s2;
    CropOperator s2_prev_crop;
    for (std::size_t ti = 0; ti < tail.size(); ++ti) {
        const int l = tail[ti];
        const Planed& img_l = pyr.levels[l];
        AffineParams a_l = a;
        for (int k = 0; k < l; ++k) a_l = halve_params(a_l);

        Image color_l = color;
        for (int k = 0; k < l; ++k)
            for (auto& p : color_l.planes) p = downsample_half(p);

        LevelSetup setup = level_setup(a_l, img_l.rows(), img_l.cols(), cfg);
        if (cfg.time_steps == 0)
            setup.kopt.time_steps =
                auto_time_steps(max_corner_displacement(a_l, img_l.rows(), img_l.cols()));

        Stage2Problem p2;
        p2.core = make_stage1_problem({img_l}, setup, gsm, sigma_at(l), cfg, cfg.lambda0_stage2);
        p2.color = color_l;
        p2.a = a_l;
        p2.lambda_c = cfg.lambda_c;

        if (ti == 0) {
            s2 = init_posterior(p2.core);
            Planed r0 = r_stage1;
            for (int k = 0; k < l; ++k) r0 = downsample_half(r0);
            s2.r = resize_bilinear(r0, img_l.rows(), img_l.cols())
                       .max(PosteriorState::kREps)
                       .min(1.0 - PosteriorState::kREps);
            std::tie(fg, bg) = init_color_models(color_l, s2.r, cfg.gmm_components, rng);
        } else {
            AffineParams dummy;
            std::tie(s2, dummy) = propagate_level(s2, dummy, s2_prev_crop, p2.core.crop);
            s2.ch[0].mu = p2.core.crop.pad_replicate(img_l);
        }
        try {
            Stage2Result r2 = run_stage2_level(p2, std::move(s2), fg, bg, cfg.stage2_iters, l,
                                               out.diag);
            s2 = std::move(r2.state);
            fg = std::move(r2.fg);
            bg = std::move(r2.bg);
            out.latent_mean = std::move(r2.latent_mean);
        } catch (const std::exception& e) {
            throw InferenceError("stage2 level " + std::to_string(l) + ": " + e.what());
        }
        s2_prev_crop = p2.core.crop;
    }

    // empty-foreground guard: fall back to the stage-1 mask
    Planed r_final = s2.r;
    if (r_final.sum() < 10.0) {
        out.diag.warnings.push_back("stage2: empty foreground, keeping stage-1 mask");
        r_final = r_stage1;
    }

    out.a = a;
    out.r = r_final;
    out.mask = (r_final >= 0.5).cast<double>();
    out.field = motion_field(out.a, image.height(), image.width());
    return out;
}

}  // namespace moblur
