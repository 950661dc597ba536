// Acceptance suite: one test case per release criterion, each printing a
// single PASS/FAIL line with its runtime. Tolerances are pinned in code.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include "omnidist/camera_model.hpp"
#include "omnidist/data_io.hpp"
#include "omnidist/errors.hpp"
#include "omnidist/evaluation.hpp"
#include "omnidist/normalization.hpp"
#include "omnidist/projection.hpp"
#include "omnidist/rng.hpp"
#include "omnidist/toy_model.hpp"
#include "oracles.hpp"

using namespace omnidist;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
    const char* name;
    Clock::time_point start = Clock::now();
    bool ok = true;
    double budget_s;

    Criterion(const char* name, double budget_s) : name(name), budget_s(budget_s) {}
    double elapsed() const {
        return std::chrono::duration<double>(Clock::now() - start).count();
    }
    ~Criterion() {
        const double t = elapsed();
        const bool in_budget = t < budget_s;
        std::printf("[acceptance] %s: %s (%.2f s, budget %.0f s)\n", name,
                    ok && in_budget ? "PASS" : "FAIL", t, budget_s);
        std::fflush(stdout);
    }
};

#define ACC(criterion, cond)                 \
    do {                                     \
        const bool acc_ok_ = (cond);         \
        (criterion).ok &= acc_ok_;           \
        CHECK(acc_ok_);                      \
    } while (0)

std::string read_file(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Scene recipe of the toy learning gate (easy split): sizes pinned near
// three grid cells so the detection geometry is within reach of the linear
// head; see README for the derivation.
SceneConfig easy_scene_config() {
    SceneConfig sc;
    sc.image_side_px = 128;
    sc.min_objects = 1;
    sc.max_objects = 2;
    sc.radius_min_m = 0.55;
    sc.radius_max_m = 0.60;
    sc.height_min_m = 0.9;
    sc.height_max_m = 1.1;
    sc.distance_min_m = 0.9;
    sc.distance_max_m = 1.5;
    return sc;
}

HeadConfig gate_head_config() {
    HeadConfig cfg;
    cfg.grid_size = 16;
    cfg.image_side_px = 128;
    cfg.anchors = {{24.0, 24.0}};
    cfg.num_classes = 1;
    cfg.feature_dim = 7;
    cfg.norm = {NormMode::linear, 12.0, 1e-6};
    cfg.learning_rate = 4.0;
    cfg.steps = 2000;
    cfg.batch_size = 16;
    cfg.seed = 7;
    cfg.confidence_threshold = 0.10;
    cfg.nms_iou = 0.45;
    return cfg;
}

// Scene recipe of the robustness experiment: short flat objects confined to
// the upper-right azimuth quadrant, so the bottom-center contact pixel is
// always the near base edge and a +x principal-point shift degrades every
// estimate monotonically.
SceneConfig robustness_scene_config() {
    SceneConfig sc;
    sc.image_side_px = 256;
    sc.min_objects = 2;
    sc.max_objects = 4;
    sc.radius_min_m = 0.08;
    sc.radius_max_m = 0.18;
    sc.height_min_m = 0.2;
    sc.height_max_m = 0.5;
    sc.distance_min_m = 1.5;
    sc.distance_max_m = 9.5;
    sc.azimuth_min_rad = -1.35;
    sc.azimuth_max_rad = -0.25;
    return sc;
}

}  // namespace

TEST_CASE("criterion 1: normalization round trip") {
    Criterion c("1 normalization-round-trip", 1.0);
    Rng rng(1001);
    for (int i = 0; i < 10000; ++i) {
        NormalizationSpec spec;
        spec.mode = (i % 2 == 0) ? NormMode::linear : NormMode::log;
        spec.d_max = rng.uniform(5.0, 300.0);
        spec.epsilon = 1e-6;
        // The log map clamps below 1 m (it is not a bijection
        // near zero), so the log-mode identity is probed on [1, d_max].
        const double lo = spec.mode == NormMode::log ? 1.0 : spec.epsilon * 10.0;
        const double d = rng.uniform(lo, spec.d_max);
        const double back = denormalize(spec, normalize(spec, d));
        ACC(c, std::abs(back - d) <= 1e-9 * std::max(1.0, d));
    }
    ACC(c, c.elapsed() < 1.0);
}

TEST_CASE("criterion 2: geometric oracle equivalence") {
    Criterion c("2 geometric-ray-march-oracle", 30.0);
    Rng rng(2002);
    for (int config = 0; config < 10; ++config) {
        CameraModel m = make_synthetic_camera(512, rng.uniform(2.0, 8.0));
        // all configs posed, several strongly
        m.pose.pitch_rad = rng.uniform(-0.12, 0.12);
        m.pose.roll_rad = rng.uniform(-0.12, 0.12);
        int checked = 0;
        while (checked < 100) {
            const double radius = rng.uniform(0.0, 0.45 * 512);
            const double az = rng.uniform(-std::numbers::pi, std::numbers::pi);
            const Vec2 px = m.principal_point + Vec2{std::cos(az), std::sin(az)} * radius;
            double d = 0.0;
            try {
                d = ground_distance(m, px);
            } catch (const NoGroundIntersection&) {
                continue;
            }
            if (d > 40.0) continue;  // horizon grazers: bound the march length
            const double oracle = oracles::ray_march_ground_distance(m, px, 1e-5);
            ACC(c, std::abs(d - oracle) <= 1e-3);
            ++checked;
        }
    }
    ACC(c, c.elapsed() < 30.0);
}

TEST_CASE("criterion 3: full-loss gradient suite") {
    Criterion c("3 gradient-finite-difference-suite", 60.0);
    HeadConfig cfg;
    cfg.grid_size = 4;
    cfg.image_side_px = 32;
    cfg.anchors = {{8.0, 8.0}};
    cfg.num_classes = 2;
    cfg.feature_dim = 7;
    cfg.norm = {NormMode::linear, 12.0, 1e-6};
    cfg.enable_height_head = true;
    cfg.weights = LossWeights::with_height_head();

    Rng rng(3003);
    const double P = cfg.cell_px();
    for (int batch_i = 0; batch_i < 100; ++batch_i) {
        std::vector<TrainingSample> batch;
        for (int b = 0; b < 2; ++b) {
            TrainingSample s;
            s.features.grid_size = 4;
            s.features.feature_dim = 7;
            s.features.channels = 1;
            s.features.data.resize(16 * 7);
            for (auto& f : s.features.data) f = rng.uniform(0.0, 1.0);
            const int n_objects = 1 + b;
            for (int i = 0; i < n_objects; ++i) {
                GroundTruthObject gt;
                gt.class_id = static_cast<int>(rng.uniform_int(0, 1));
                gt.box = {(rng.uniform_int(0, 3) + rng.uniform(0.3, 0.7)) * P,
                          (rng.uniform_int(0, 3) + rng.uniform(0.3, 0.7)) * P,
                          rng.uniform(6.0, 12.0), rng.uniform(6.0, 12.0)};
                // keep normalized targets away from sigma(~0) = 0.5 (L1 kink)
                gt.distance_m = rng.uniform_int(0, 1) == 0
                                    ? rng.uniform(0.18, 0.32) * cfg.norm.d_max
                                    : rng.uniform(0.68, 0.82) * cfg.norm.d_max;
                s.targets.gts.push_back(gt);
                s.targets.gt_norm_dist.push_back(normalize(cfg.norm, gt.distance_m));
            }
            s.targets.assignment = assign_targets(s.targets.gts, cfg);
            s.targets.height_norm = 0.22;
            batch.push_back(std::move(s));
        }

        HeadParams p = HeadParams::random_init(cfg, rng.next_u64(), 0.05);
        const LossAndGrad lg = loss_and_grad(p, batch, cfg);
        const auto fd_check = [&](double& slot, double analytic) {
            const double orig = slot;
            const double h = 1e-5;
            slot = orig + h;
            const double hi = loss_and_grad(p, batch, cfg).breakdown.total;
            slot = orig - h;
            const double lo = loss_and_grad(p, batch, cfg).breakdown.total;
            slot = orig;
            const double fd = (hi - lo) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
            ACC(c, std::abs(analytic - fd) / denom <= 1e-4);
        };
        for (std::size_t i = 0; i < p.weights.size(); ++i) fd_check(p.weights[i], lg.grad.weights[i]);
        for (std::size_t i = 0; i < p.bias.size(); ++i) fd_check(p.bias[i], lg.grad.bias[i]);
        for (std::size_t i = 0; i < p.height_weights.size(); ++i)
            fd_check(p.height_weights[i], lg.grad.height_weights[i]);
        fd_check(p.height_bias, lg.grad.height_bias);
    }
    ACC(c, c.elapsed() < 60.0);
}

TEST_CASE("criterion 4: metric oracle equivalence on the committed fixture") {
    Criterion c("4 metric-oracle-equivalence", 30.0);
    const std::string fixtures = OMNIDIST_FIXTURES_DIR;
    const DetectionsDoc dets = read_detections(read_file(fixtures + "/eval_dets.json"));
    const AnnotationsDoc gts = read_annotations(read_file(fixtures + "/eval_gts.json"));
    const EvalConfig cfg{0.5, {0.0, 7.2, 14.4, 21.6, 28.8, 36.0}};

    const EvalReport a = evaluate(dets, gts, cfg);
    const EvalReport b = oracles::reference_evaluate(dets, gts, cfg);

    const auto close = [](double x, double y) { return std::abs(x - y) <= 1e-9; };
    const auto opt_close = [&](const std::optional<double>& x, const std::optional<double>& y) {
        return x.has_value() == y.has_value() && (!x || close(*x, *y));
    };
    ACC(c, close(a.precision, b.precision));
    ACC(c, close(a.recall, b.recall));
    ACC(c, opt_close(a.map50, b.map50));
    ACC(c, opt_close(a.map50_95, b.map50_95));
    ACC(c, opt_close(a.absolute_error_m, b.absolute_error_m));
    ACC(c, opt_close(a.weighted_error, b.weighted_error));
    ACC(c, a.num_images == b.num_images);
    ACC(c, a.num_detections == b.num_detections);
    ACC(c, a.num_gts == b.num_gts);
    ACC(c, a.num_matched == b.num_matched);
    ACC(c, a.ap_per_threshold.size() == b.ap_per_threshold.size());
    for (std::size_t i = 0; i < a.ap_per_threshold.size(); ++i)
        ACC(c, opt_close(a.ap_per_threshold[i].second, b.ap_per_threshold[i].second));
    ACC(c, a.bins.size() == b.bins.size());
    for (std::size_t i = 0; i < a.bins.size(); ++i) {
        ACC(c, a.bins[i].count == b.bins[i].count);
        ACC(c, opt_close(a.bins[i].absolute_error_m, b.bins[i].absolute_error_m));
        ACC(c, opt_close(a.bins[i].weighted_error, b.bins[i].weighted_error));
    }

    // the isolated two-detection case: rank-1 false positive, rank-2 exact
    // match on a single ground truth; 101-point AP is exactly one half
    AnnotationsDoc mini_gts;
    mini_gts.images.push_back({"only", "", {{0, {30.0, 30.0, 10.0, 10.0}, 2.0}}});
    DetectionsDoc mini_dets;
    mini_dets.images.push_back({"only",
                                {{0, {80.0, 80.0, 10.0, 10.0}, 0.9, 1.0, true},
                                 {0, {30.0, 30.0, 10.0, 10.0}, 0.8, 3.0, true}}});
    const EvalReport mini = evaluate(mini_dets, mini_gts, {0.5, {}});
    ACC(c, mini.map50.has_value());
    ACC(c, *mini.map50 == 0.5);
    ACC(c, c.elapsed() < 30.0);
}

TEST_CASE("criterion 5: confidence-weighted error properties") {
    Criterion c("5 weighted-error-properties", 10.0);
    Rng rng(5005);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<MatchedPair> pairs;
        const long n = rng.uniform_int(1, 10);
        for (long i = 0; i < n; ++i)
            pairs.push_back({rng.uniform(0.01, 1.0), rng.uniform(0.0, 15.0),
                             rng.uniform(0.0, 36.0)});

        const double ew = *weighted_distance_error(pairs);
        double lo = pairs[0].error_m, hi = pairs[0].error_m;
        for (const auto& p : pairs) {
            lo = std::min(lo, p.error_m);
            hi = std::max(hi, p.error_m);
        }
        ACC(c, ew >= lo - 1e-12);
        ACC(c, ew <= hi + 1e-12);

        std::vector<MatchedPair> equal = pairs;
        for (auto& p : equal) p.confidence = 0.41;
        ACC(c, std::abs(*weighted_distance_error(equal) - *absolute_distance_error(equal)) <=
                   1e-12 * std::max(1.0, *absolute_distance_error(equal)));

        std::vector<MatchedPair> scaled = pairs;
        for (auto& p : scaled) p.confidence *= 23.0;
        ACC(c, std::abs(*weighted_distance_error(scaled) - ew) <= 1e-12 * std::max(1.0, ew));
    }
    ACC(c, c.elapsed() < 10.0);
}

TEST_CASE("criterion 6: principal-point shift error trend") {
    Criterion c("6 principal-point-shift-trend", 120.0);
    const CameraModel cam = make_synthetic_camera(256, 3.0);
    const SceneConfig sc = robustness_scene_config();

    std::vector<Scene> scenes;
    for (int i = 0; i < 256; ++i)
        scenes.push_back(generate_scene(Rng::derive_seed(606, i), cam, sc));

    const double far_lo = 8.0;
    const auto sweep = [&](double shift_px) {
        const CameraModel shifted = shift_principal_point(cam, shift_px, 0.0);
        double sum = 0.0, far_sum = 0.0;
        long n = 0, far_n = 0;
        for (const auto& scene : scenes)
            for (const auto& gt : scene.objects) {
                const Vec2 contact{gt.box.cx, gt.box.cy + 0.5 * gt.box.h};
                const double est = ground_distance(shifted, contact);
                const double err = std::abs(est - gt.distance_m);
                sum += err;
                ++n;
                if (gt.distance_m >= far_lo) {
                    far_sum += err;
                    ++far_n;
                }
            }
        REQUIRE(far_n > 20);
        return std::pair<double, double>{sum / n, far_sum / far_n};
    };

    const auto [base, base_far] = sweep(0.0);
    const auto [one, one_far] = sweep(1.0);
    const auto [five, five_far] = sweep(5.0);
    const double d1 = one - base, d5 = five - base;
    const double d1_far = one_far - base_far, d5_far = five_far - base_far;
    std::printf("[acceptance]   shift deltas: d(1px) %.4f m, d(5px) %.4f m, far d(1px) %.4f m, "
                "far d(5px) %.4f m\n", d1, d5, d1_far, d5_far);
    ACC(c, d1 > 0.0);
    ACC(c, d5 > d1);
    ACC(c, d1_far > d1);
    ACC(c, d5_far > d5);
    ACC(c, c.elapsed() < 120.0);
}

TEST_CASE("criterion 7: toy learning gate") {
    Criterion c("7 toy-learning-gate", 300.0);
    const CameraModel cam = make_synthetic_camera(128, 3.0);
    const SceneConfig sc = easy_scene_config();
    std::vector<Scene> scenes;
    for (int i = 0; i < 512; ++i)
        scenes.push_back(generate_scene(Rng::derive_seed(99, i), cam, sc));

    const HeadConfig cfg = gate_head_config();
    const TrainResult r = train(scenes, cfg, cam);

    const double mae0 = r.history.val.front().distance_mae_m;
    const double mae1 = r.history.val.back().distance_mae_m;
    std::printf("[acceptance]   val distance MAE: untrained %.3f m -> trained %.3f m\n", mae0,
                mae1);
    ACC(c, mae1 <= 0.5 * mae0);

    AnnotationsDoc gts;
    DetectionsDoc dets;
    for (std::size_t idx : r.val_indices) {
        ImageAnnotations ann;
        ann.image = "img_" + std::to_string(idx);
        ann.objects = scenes[idx].objects;
        gts.images.push_back(ann);
        ImageDetections im;
        im.image = ann.image;
        im.objects = predict(r.params, scenes[idx].image, cfg, cam).detections;
        dets.images.push_back(std::move(im));
    }
    const EvalReport rep = evaluate(dets, gts, {0.5, {}});
    std::printf("[acceptance]   val AP@50 %.4f (precision %.3f, recall %.3f)\n",
                rep.map50.value_or(0.0), rep.precision, rep.recall);
    ACC(c, rep.map50.has_value());
    ACC(c, *rep.map50 >= 0.8);

    // bit-determinism under the fixed seed
    const TrainResult again = train(scenes, cfg, cam);
    ACC(c, again.params.weights == r.params.weights);
    ACC(c, again.params.bias == r.params.bias);
    ACC(c, again.history.steps.size() == r.history.steps.size());
    bool history_equal = true;
    for (std::size_t i = 0; i < r.history.steps.size(); ++i)
        history_equal &= again.history.steps[i].loss.total == r.history.steps[i].loss.total;
    ACC(c, history_equal);
    ACC(c, c.elapsed() < 300.0);
}

TEST_CASE("criterion 8: equirectangular consistency") {
    Criterion c("8 equirect-containment-and-golden-raster", 60.0);
    const CameraModel cam = make_synthetic_camera(256, 3.0);
    const EquirectSpec spec{192, 96, 1.45};

    // containment for 1000 random boxes
    Rng rng(8008);
    int tested = 0;
    while (tested < 1000) {
        const double az = rng.uniform(-std::numbers::pi, std::numbers::pi);
        const double radius = rng.uniform(15.0, 105.0);
        const Vec2 ctr = cam.principal_point + Vec2{std::cos(az), std::sin(az)} * radius;
        const BBox box{ctr.x, ctr.y, rng.uniform(3.0, 26.0), rng.uniform(3.0, 26.0)};
        EquirectBox eq;
        try {
            eq = bbox_to_equirect(cam, spec, box);
        } catch (const OutOfCalibrationRange&) {
            continue;
        }
        ++tested;
        bool contained = true;
        for (int i = 0; i < 64; ++i) {
            const double per = 2.0 * (box.w + box.h);
            double s = per * i / 64.0;
            Vec2 p;
            if (s < box.w) p = {box.left() + s, box.top()};
            else if ((s -= box.w) < box.h) p = {box.right(), box.top() + s};
            else if ((s -= box.h) < box.w) p = {box.right() - s, box.bottom()};
            else p = {box.left(), box.bottom() - (s - box.w)};
            const Vec2 d = p - cam.principal_point;
            const double theta = theta_from_radius(cam, cam.pixel_pitch_mm * d.norm());
            double ue = (std::atan2(d.y, d.x) + std::numbers::pi) / (2.0 * std::numbers::pi) *
                        spec.width_px;
            const double ve = theta / spec.theta_max_rad * spec.height_px;
            if (eq.wraps && ue < 0.5 * spec.width_px) ue += spec.width_px;
            contained &= ue >= eq.box.left() - 1e-9 && ue <= eq.box.right() + 1e-9 &&
                         ve >= eq.box.top() - 1e-9 && ve <= eq.box.bottom() + 1e-9;
        }
        ACC(c, contained);
    }

    // golden raster: the committed fixture projection hash must be stable
    // across runs (and across platforms under the documented floating-point
    // policy: IEEE-754 doubles, no fast-math, source coordinates quantized
    // to 1/256 px, integer-hash textures)
    SceneConfig fix;
    fix.image_side_px = 256;
    fix.min_objects = 3;
    fix.max_objects = 3;
    fix.distance_min_m = 1.0;
    fix.distance_max_m = 6.0;
    fix.radius_min_m = 0.3;
    fix.radius_max_m = 0.6;
    fix.height_min_m = 0.8;
    fix.height_max_m = 1.6;
    const Scene fixture = generate_scene(20240807, cam, fix);
    ACC(c, fnv1a(fixture.image.pixels.data(), fixture.image.pixels.size()) ==
               0x59a7acb322869890ULL);
    const Image eq1 = fisheye_to_equirect(fixture.image, cam, spec);
    const Image eq2 = fisheye_to_equirect(fixture.image, cam, spec);
    ACC(c, eq1.pixels == eq2.pixels);
    const std::uint64_t hash = fnv1a(eq1.pixels.data(), eq1.pixels.size());
    std::printf("[acceptance]   golden remap hash 0x%016llx\n",
                static_cast<unsigned long long>(hash));
    ACC(c, hash == 0xa4d841bfddcf8663ULL);
    ACC(c, c.elapsed() < 60.0);
}
