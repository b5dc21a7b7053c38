#pragma once

#include "moblur/affine.hpp"
#include "moblur/core.hpp"
#include "moblur/pipeline.hpp"
#include "moblur/rng.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace moblur {

// Object cutout: 3-channel colors plus a coverage mask, both canvas-sized
// once placed.
struct SpriteAsset {
    Image rgb;
    Planed mask;
};

struct SyntheticScene {
    Image blurred;           // mean of the warped composites
    Image sharp;             // composite at the exposure center
    Planed gt_mask;          // union of warped masks, thresholded at 0.5
    MotionField gt_motion;   // full-canvas field of gt_params
    AffineParams gt_params;
    int frames = 0;
    unsigned long long seed = 0;
    std::string object_id, background_id;
};

// Warp-and-average forward model: frame t displaces the object by
// (t/(frames-1) - 1/2) u^a with bilinear sampling, composites it over the
// background, and accumulates the mean. Throws if the object leaves the
// canvas.
SyntheticScene synthesize(const SpriteAsset& object, const Image& background,
                          const AffineParams& a, int frames, unsigned long long seed);

// |intersection| / |union|; both empty counts as 1.
double iou(const Planed& pred, const Planed& gt);

// Mean endpoint error over mask pixels, sign-invariant:
// min(|u - u*|, |u + u*|). Throws on an empty mask.
double aep(const MotionField& pred, const MotionField& gt, const Planed& mask);

// ---- procedural assets (the bundled data/assets images are generated with
// these; see tools/gen_assets) ----
Image make_background(Eigen::Index rows, Eigen::Index cols, Rng& rng);
SpriteAsset make_object_sprite(Eigen::Index rows, Eigen::Index cols, Rng& rng);
SpriteAsset place_on_canvas(const SpriteAsset& sprite, Eigen::Index rows, Eigen::Index cols,
                            Eigen::Index top, Eigen::Index left);

// ---- benchmark ----
struct BenchmarkScene {
    SyntheticScene scene;
    std::string id;
    bool uniform = false;
};

struct BenchmarkOptions {
    std::string assets_dir = "data/assets";
    int count = 32;  // half uniform, half affine
    unsigned long long seed = 7;
    Eigen::Index canvas_rows = 144, canvas_cols = 192;
};

// Deterministic per seed; max displacements drawn from [8, 25] px.
// Throws with the missing paths if assets are absent.
std::vector<BenchmarkScene> build_benchmark(const BenchmarkOptions& opt);
std::string benchmark_manifest(const std::vector<BenchmarkScene>& scenes);

struct SceneEval {
    std::string id;
    bool uniform = false;
    bool ok = false;
    double iou = std::numeric_limits<double>::quiet_NaN();
    double aep = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

struct EvalReport {
    std::vector<SceneEval> rows;
    double iou_uniform = 0, iou_affine = 0, aep_uniform = 0, aep_affine = 0;
    bool all_ok = true;
};

EvalReport evaluate_benchmark(const std::vector<BenchmarkScene>& scenes, const Config& cfg,
                              const std::function<void(const SceneEval&)>& progress = {});
std::string report_tsv(const EvalReport& report);

// ---- initialization sensitivity (horizontal-motion scene, a1 = 15) ----
SyntheticScene make_sweep_scene(const std::string& assets_dir, unsigned long long seed,
                                Eigen::Index canvas_rows = 144, Eigen::Index canvas_cols = 192);

struct SweepResult {
    std::array<double, 6> magnitudes{};  // 0.1 0.5 1 3 5 7
    std::array<double, 6> horizontal{};  // AEP per horizontal init (NaN on failure)
    std::array<double, 6> vertical{};
};

SweepResult sensitivity_sweep(const SyntheticScene& scene, const Config& base_cfg,
                              const std::function<void(const std::string&, double)>& progress = {});
std::string sweep_tsv(const SweepResult& result);

}  // namespace moblur
