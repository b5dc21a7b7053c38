#include "moblur/synth.hpp"

#include "moblur/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace moblur {

namespace {

double sample_bilinear(const Planed& img, double y, double x) {
    if (y < 0 || x < 0 || y > img.rows() - 1 || x > img.cols() - 1) return 0.0;
    const Eigen::Index y0 = static_cast<Eigen::Index>(std::floor(y));
    const Eigen::Index x0 = static_cast<Eigen::Index>(std::floor(x));
    const Eigen::Index y1 = std::min<Eigen::Index>(y0 + 1, img.rows() - 1);
    const Eigen::Index x1 = std::min<Eigen::Index>(x0 + 1, img.cols() - 1);
    const double wy = y - y0, wx = x - x0;
    return (1 - wy) * ((1 - wx) * img(y0, x0) + wx * img(y0, x1)) +
           wy * ((1 - wx) * img(y1, x0) + wx * img(y1, x1));
}

}  // namespace

SyntheticScene synthesize(const SpriteAsset& object, const Image& background,
                          const AffineParams& a, int frames, unsigned long long seed) {
    const Eigen::Index rows = background.height(), cols = background.width();
    require(background.channels() == 3, "synthesize: 3-channel background expected");
    require(object.rgb.channels() == 3 && object.rgb.height() == rows &&
                object.rgb.width() == cols && object.mask.rows() == rows &&
                object.mask.cols() == cols,
            "synthesize: object must be placed on the background canvas");
    const MotionField field = motion_field(a, rows, cols);
    const double maxdisp = field.max_magnitude();
    require(frames >= 2, "synthesize: frames >= 2");
    require(frames >= 2.0 * maxdisp, "synthesize: frames must cover the path (>= 2*max disp)");

    SyntheticScene out;
    out.gt_params = a;
    out.gt_motion = field;
    out.frames = frames;
    out.seed = seed;

    std::vector<Planed> acc(3, Planed::Zero(rows, cols));
    Planed mask_union = Planed::Zero(rows, cols);
    Image sharp;
    for (int t = 0; t < frames; ++t) {
        const double s = static_cast<double>(t) / (frames - 1) - 0.5;
        Planed mwarp(rows, cols);
        std::array<Planed, 3> owarp = {Planed(rows, cols), Planed(rows, cols),
                                       Planed(rows, cols)};
        for (Eigen::Index y = 0; y < rows; ++y)
            for (Eigen::Index x = 0; x < cols; ++x) {
                const double sy = y - s * field.uy(y, x);
                const double sx = x - s * field.ux(y, x);
                mwarp(y, x) = sample_bilinear(object.mask, sy, sx);
                for (int c = 0; c < 3; ++c)
                    owarp[c](y, x) = sample_bilinear(object.rgb.plane(c), sy, sx);
            }
        // leaving the canvas shows up as mask coverage on the border
        if (mwarp.row(0).maxCoeff() > 0.5 || mwarp.row(rows - 1).maxCoeff() > 0.5 ||
            mwarp.col(0).maxCoeff() > 0.5 || mwarp.col(cols - 1).maxCoeff() > 0.5)
            throw std::invalid_argument("synthesize: object leaves the canvas");
        for (int c = 0; c < 3; ++c)
            acc[c] += mwarp * owarp[c] + (1.0 - mwarp) * background.plane(c);
        mask_union = mask_union.max((mwarp >= 0.5).cast<double>());
        if (t == (frames - 1) / 2 && (frames % 2) == 1) {
            sharp.planes.clear();
            for (int c = 0; c < 3; ++c)
                sharp.planes.push_back(mwarp * owarp[c] + (1.0 - mwarp) * background.plane(c));
        }
    }
    if (sharp.planes.empty()) {
        // even frame count: build the center composite explicitly at s = 0
        sharp.planes.clear();
        for (int c = 0; c < 3; ++c)
            sharp.planes.push_back(object.mask * object.rgb.plane(c) +
                                   (1.0 - object.mask) * background.plane(c));
    }
    for (int c = 0; c < 3; ++c) out.blurred.planes.push_back(acc[c] / frames);
    out.sharp = std::move(sharp);
    out.gt_mask = mask_union;
    return out;
}

double iou(const Planed& pred, const Planed& gt) {
    require(pred.rows() == gt.rows() && pred.cols() == gt.cols(), "iou: dims mismatch");
    const auto p = pred >= 0.5, g = gt >= 0.5;
    const double inter = (p && g).cast<double>().sum();
    const double uni = (p || g).cast<double>().sum();
    return uni == 0 ? 1.0 : inter / uni;
}

double aep(const MotionField& pred, const MotionField& gt, const Planed& mask) {
    require(pred.rows() == gt.rows() && pred.cols() == gt.cols() && mask.rows() == gt.rows() &&
                mask.cols() == gt.cols(),
            "aep: dims mismatch");
    double sum = 0;
    long count = 0;
    for (Eigen::Index y = 0; y < mask.rows(); ++y)
        for (Eigen::Index x = 0; x < mask.cols(); ++x) {
            if (mask(y, x) < 0.5) continue;
            const double dxm = pred.ux(y, x) - gt.ux(y, x), dym = pred.uy(y, x) - gt.uy(y, x);
            const double dxp = pred.ux(y, x) + gt.ux(y, x), dyp = pred.uy(y, x) + gt.uy(y, x);
            sum += std::min(std::sqrt(dxm * dxm + dym * dym), std::sqrt(dxp * dxp + dyp * dyp));
            ++count;
        }
    require(count > 0, "aep: empty mask");
    return sum / count;
}

// ---------------------------------------------------------------- assets --

namespace {

// band-limited value noise: bilinearly upsampled random grids
Planed value_noise(Eigen::Index rows, Eigen::Index cols, Eigen::Index cell, Rng& rng) {
    const Eigen::Index gr = rows / cell + 2, gc = cols / cell + 2;
    Planed grid(gr, gc);
    for (Eigen::Index y = 0; y < gr; ++y)
        for (Eigen::Index x = 0; x < gc; ++x) grid(y, x) = rng.uniform(-1.0, 1.0);
    Planed out(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            const double fy = static_cast<double>(y) / cell, fx = static_cast<double>(x) / cell;
            out(y, x) = sample_bilinear(grid, fy, fx);
        }
    return out;
}

Planed octave_texture(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Planed t = Planed::Zero(rows, cols);
    double amp = 0.5;
    for (Eigen::Index cell : {32, 16, 8, 4, 2}) {
        t += amp * value_noise(rows, cols, cell, rng);
        amp *= 0.55;
    }
    return t;
}

}  // namespace

Image make_background(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    // muted palette with a slow gradient plus texture
    const double hue[3] = {rng.uniform(0.25, 0.55), rng.uniform(0.35, 0.6),
                           rng.uniform(0.45, 0.7)};
    const double gx = rng.uniform(-0.15, 0.15), gy = rng.uniform(-0.15, 0.15);
    const Planed tex = octave_texture(rows, cols, rng);
    Planed tex2 = octave_texture(rows, cols, rng);
    Image out;
    for (int c = 0; c < 3; ++c) {
        Planed p(rows, cols);
        for (Eigen::Index y = 0; y < rows; ++y)
            for (Eigen::Index x = 0; x < cols; ++x) {
                const double g = gx * (static_cast<double>(x) / cols - 0.5) +
                                 gy * (static_cast<double>(y) / rows - 0.5);
                p(y, x) = hue[c] + g + 0.22 * tex(y, x) + 0.08 * (c == 1 ? tex2(y, x) : -tex2(y, x));
            }
        out.planes.push_back(p.min(0.95).max(0.05));
    }
    return out;
}

SpriteAsset make_object_sprite(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    // smooth star-shaped blob, antialiased by 2x2 coverage
    const double cy = 0.5 * (rows - 1), cx = 0.5 * (cols - 1);
    const double R = 0.38 * std::min(rows, cols);
    const int harmonics = 4;
    std::array<double, harmonics> amp{}, phase{};
    for (int k = 0; k < harmonics; ++k) {
        amp[k] = rng.uniform(0.03, 0.16) / (k + 1);
        phase[k] = rng.uniform(0.0, 2.0 * M_PI);
    }
    auto radius = [&](double theta) {
        double r = 1.0;
        for (int k = 0; k < harmonics; ++k) r += amp[k] * std::cos((k + 2) * theta + phase[k]);
        return R * r;
    };
    Planed mask(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y)
        for (Eigen::Index x = 0; x < cols; ++x) {
            double cov = 0;
            for (double oy : {-0.25, 0.25})
                for (double ox : {-0.25, 0.25}) {
                    const double dy = y + oy - cy, dx = x + ox - cx;
                    const double d = std::sqrt(dy * dy + dx * dx);
                    cov += d <= radius(std::atan2(dy, dx)) ? 0.25 : 0.0;
                }
            mask(y, x) = cov;
        }

    // warm, strongly textured interior
    const double base[3] = {rng.uniform(0.55, 0.9), rng.uniform(0.25, 0.6),
                            rng.uniform(0.05, 0.35)};
    const Planed tex = octave_texture(rows, cols, rng);
    Planed tex2 = octave_texture(rows, cols, rng);
    SpriteAsset out;
    for (int c = 0; c < 3; ++c) {
        Planed p(rows, cols);
        for (Eigen::Index y = 0; y < rows; ++y)
            for (Eigen::Index x = 0; x < cols; ++x)
                p(y, x) = base[c] + 0.3 * tex(y, x) + (c == 0 ? 0.12 : -0.12) * tex2(y, x);
        out.rgb.planes.push_back(p.min(0.97).max(0.03));
    }
    out.mask = mask;
    return out;
}

SpriteAsset place_on_canvas(const SpriteAsset& sprite, Eigen::Index rows, Eigen::Index cols,
                            Eigen::Index top, Eigen::Index left) {
    require(top >= 0 && left >= 0 && top + sprite.mask.rows() <= rows &&
                left + sprite.mask.cols() <= cols,
            "place_on_canvas: sprite out of bounds");
    SpriteAsset out;
    out.mask = Planed::Zero(rows, cols);
    out.mask.block(top, left, sprite.mask.rows(), sprite.mask.cols()) = sprite.mask;
    for (int c = 0; c < 3; ++c) {
        Planed p = Planed::Zero(rows, cols);
        p.block(top, left, sprite.mask.rows(), sprite.mask.cols()) = sprite.rgb.plane(c);
        out.rgb.planes.push_back(std::move(p));
    }
    return out;
}

// ------------------------------------------------------------- benchmark --

namespace {

constexpr int kNumObjects = 6;
constexpr int kNumBackgrounds = 4;

std::string object_path(const std::string& dir, int i, bool mask) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "obj_%02d%s.png", i, mask ? "_mask" : "");
    return dir + "/" + buf;
}
std::string background_path(const std::string& dir, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "bg_%02d.png", i);
    return dir + "/" + buf;
}

struct Assets {
    std::vector<SpriteAsset> objects;
    std::vector<Image> backgrounds;
};

Assets load_assets(const std::string& dir) {
    std::vector<std::string> missing;
    for (int i = 0; i < kNumObjects; ++i) {
        if (!std::filesystem::exists(object_path(dir, i, false)))
            missing.push_back(object_path(dir, i, false));
        if (!std::filesystem::exists(object_path(dir, i, true)))
            missing.push_back(object_path(dir, i, true));
    }
    for (int i = 0; i < kNumBackgrounds; ++i)
        if (!std::filesystem::exists(background_path(dir, i)))
            missing.push_back(background_path(dir, i));
    if (!missing.empty()) {
        std::string msg = "missing benchmark assets:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw IoError(msg);
    }
    Assets a;
    for (int i = 0; i < kNumObjects; ++i) {
        SpriteAsset s;
        s.rgb = read_png(object_path(dir, i, false));
        Image m = read_png(object_path(dir, i, true));
        s.mask = m.plane(0);
        a.objects.push_back(std::move(s));
    }
    for (int i = 0; i < kNumBackgrounds; ++i)
        a.backgrounds.push_back(read_png(background_path(dir, i)));
    return a;
}

AffineParams sample_motion(bool uniform, Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    const double target = rng.uniform(8.0, 25.0);
    if (uniform) {
        const double theta = rng.uniform(0.0, 2.0 * M_PI);
        return AffineParams::translation(target * std::cos(theta), target * std::sin(theta));
    }
    // random mix of translation, rotation and divergence, rescaled to the
    // target max displacement
    Vec6 v = Vec6::Zero();
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    v[0] = std::cos(theta);
    v[3] = std::sin(theta);
    const double omega = rng.uniform(0.01, 0.05) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    v[1] = -omega;
    v[5] = omega;
    const double div = rng.uniform(-0.02, 0.02);
    v[2] += div;
    v[4] += div;
    AffineParams a(v);
    const double m = max_corner_displacement(a, rows, cols);
    return AffineParams(Vec6(v * (target / m)));
}

}  // namespace

std::vector<BenchmarkScene> build_benchmark(const BenchmarkOptions& opt) {
    const Assets assets = load_assets(opt.assets_dir);
    Rng rng(opt.seed);
    std::vector<BenchmarkScene> out;
    const int half = opt.count / 2;
    for (int i = 0; i < opt.count; ++i) {
        const bool uniform = i < half;
        const int oi = i % kNumObjects;
        const int bi = (i / 2) % kNumBackgrounds;
        const Image& bg = assets.backgrounds[bi];
        const Eigen::Index rows = bg.height(), cols = bg.width();
        Rng scene_rng = rng.fork();

        for (int attempt = 0;; ++attempt) {
            const AffineParams a = sample_motion(uniform, scene_rng, rows, cols);
            const SpriteAsset& sprite = assets.objects[oi];
            const Eigen::Index margin_y = (rows - sprite.mask.rows()) / 2;
            const Eigen::Index margin_x = (cols - sprite.mask.cols()) / 2;
            const Eigen::Index jitter_y =
                static_cast<Eigen::Index>(scene_rng.uniform(-6.0, 6.0));
            const Eigen::Index jitter_x =
                static_cast<Eigen::Index>(scene_rng.uniform(-10.0, 10.0));
            const SpriteAsset placed = place_on_canvas(
                sprite, rows, cols, std::max<Eigen::Index>(0, margin_y + jitter_y),
                std::max<Eigen::Index>(0, margin_x + jitter_x));
            const int frames =
                2 * static_cast<int>(std::ceil(max_corner_displacement(a, rows, cols))) + 1;
            try {
                BenchmarkScene bs;
                bs.scene = synthesize(placed, bg, a, frames, opt.seed);
                char idbuf[48];
                std::snprintf(idbuf, sizeof idbuf, "scene_%02d_%s", i,
                              uniform ? "uniform" : "affine");
                bs.id = idbuf;
                bs.scene.object_id = "obj_" + std::to_string(oi);
                bs.scene.background_id = "bg_" + std::to_string(bi);
                bs.uniform = uniform;
                out.push_back(std::move(bs));
                break;
            } catch (const std::invalid_argument&) {
                require(attempt < 16, "build_benchmark: cannot fit object motion on canvas");
            }
        }
    }
    return out;
}

std::string benchmark_manifest(const std::vector<BenchmarkScene>& scenes) {
    std::ostringstream out;
    out << "scene_id\tkind\ta1\ta2\ta3\ta4\ta5\ta6\tframes\tseed\tobject\tbackground\n";
    char buf[64];
    for (const auto& s : scenes) {
        out << s.id << '\t' << (s.uniform ? "uniform" : "affine");
        for (int p = 0; p < 6; ++p) {
            std::snprintf(buf, sizeof buf, "%.17g", s.scene.gt_params.a[p]);
            out << '\t' << buf;
        }
        out << '\t' << s.scene.frames << '\t' << s.scene.seed << '\t' << s.scene.object_id
            << '\t' << s.scene.background_id << '\n';
    }
    return out.str();
}

EvalReport evaluate_benchmark(const std::vector<BenchmarkScene>& scenes, const Config& cfg,
                              const std::function<void(const SceneEval&)>& progress) {
    EvalReport rep;
    double si_u = 0, si_a = 0, sa_u = 0, sa_a = 0;
    int n_u = 0, n_a = 0;
    for (const auto& bs : scenes) {
        SceneEval ev;
        ev.id = bs.id;
        ev.uniform = bs.uniform;
        try {
            const Result res = estimate(bs.scene.blurred, cfg);
            ev.iou = iou(res.mask, bs.scene.gt_mask);
            ev.aep = aep(res.field, bs.scene.gt_motion, bs.scene.gt_mask);
            ev.ok = true;
        } catch (const std::exception& e) {
            ev.error = e.what();
            rep.all_ok = false;
        }
        if (ev.ok) {
            if (ev.uniform) {
                si_u += ev.iou;
                sa_u += ev.aep;
                ++n_u;
            } else {
                si_a += ev.iou;
                sa_a += ev.aep;
                ++n_a;
            }
        }
        if (progress) progress(ev);
        rep.rows.push_back(std::move(ev));
    }
    rep.iou_uniform = n_u ? si_u / n_u : std::numeric_limits<double>::quiet_NaN();
    rep.aep_uniform = n_u ? sa_u / n_u : std::numeric_limits<double>::quiet_NaN();
    rep.iou_affine = n_a ? si_a / n_a : std::numeric_limits<double>::quiet_NaN();
    rep.aep_affine = n_a ? sa_a / n_a : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

std::string report_tsv(const EvalReport& report) {
    std::ostringstream out;
    out << "scene_id\tkind\tiou\taep\n";
    for (const auto& r : report.rows)
        out << r.id << '\t' << (r.uniform ? "uniform" : "affine") << '\t' << r.iou << '\t'
            << r.aep << '\n';
    out << "aggregate\tiou_uniform=" << report.iou_uniform << "\tiou_affine=" << report.iou_affine
        << '\n';
    out << "aggregate\taep_uniform=" << report.aep_uniform << "\taep_affine=" << report.aep_affine
        << '\n';
    return out.str();
}

// ----------------------------------------------------------------- sweep --

SyntheticScene make_sweep_scene(const std::string& assets_dir, unsigned long long seed,
                                Eigen::Index canvas_rows, Eigen::Index canvas_cols) {
    const Assets assets = load_assets(assets_dir);
    const Image& bg = assets.backgrounds[0];
    (void)canvas_rows;
    (void)canvas_cols;
    const SpriteAsset placed =
        place_on_canvas(assets.objects[0], bg.height(), bg.width(),
                        (bg.height() - assets.objects[0].mask.rows()) / 2,
                        (bg.width() - assets.objects[0].mask.cols()) / 2);
    const AffineParams a(15.0, 0, 0, 0, 0, 0);
    SyntheticScene s = synthesize(placed, bg, a, 31, seed);
    s.object_id = "obj_0";
    s.background_id = "bg_0";
    return s;
}

SweepResult sensitivity_sweep(const SyntheticScene& scene, const Config& base_cfg,
                              const std::function<void(const std::string&, double)>& progress) {
    SweepResult res;
    res.magnitudes = {0.1, 0.5, 1.0, 3.0, 5.0, 7.0};
    for (int axis = 0; axis < 2; ++axis)
        for (int m = 0; m < 6; ++m) {
            Config cfg = base_cfg;
            cfg.init_translation = res.magnitudes[m];
            cfg.init_axis = axis == 0 ? "x" : "y";
            double value = std::numeric_limits<double>::quiet_NaN();
            try {
                const Result r = estimate(scene.blurred, cfg);
                value = aep(r.field, scene.gt_motion, scene.gt_mask);
            } catch (const std::exception&) {
                // recorded as NaN, sweep continues
            }
            (axis == 0 ? res.horizontal : res.vertical)[m] = value;
            if (progress)
                progress((axis == 0 ? "horizontal " : "vertical ") +
                             std::to_string(res.magnitudes[m]),
                         value);
        }
    return res;
}

std::string sweep_tsv(const SweepResult& result) {
    std::ostringstream out;
    out << "|a_init|";
    for (double m : result.magnitudes) out << '\t' << m;
    out << "\nvertical";
    for (double v : result.vertical) out << '\t' << v;
    out << "\nhorizontal";
    for (double v : result.horizontal) out << '\t' << v;
    out << '\n';
    return out.str();
}

}  // namespace moblur
