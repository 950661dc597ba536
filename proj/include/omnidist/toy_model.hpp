#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "omnidist/camera_model.hpp"
#include "omnidist/data_io.hpp"
#include "omnidist/image.hpp"
#include "omnidist/loss.hpp"
#include "omnidist/normalization.hpp"

namespace omnidist {

enum class InputKind { fisheye, equirect };

// Desk-scale detector head: a linear map per anchor over handcrafted per-cell
// features, with box/objectness/class rows plus one distance output per
// anchor and an optional camera-height head. Big backbones are deliberately
// out of scope; the head keeps every gradient hand-derivable.
struct HeadConfig {
    int grid_size = 16;
    int image_side_px = 128;
    std::vector<std::array<double, 2>> anchors{{9.0, 11.0}};
    int num_classes = 1;
    int feature_dim = 7;
    InputKind input_kind = InputKind::fisheye;
    NormalizationSpec norm;
    bool enable_height_head = false;
    double height_max_m = 20.0;
    LossWeights weights = LossWeights::defaults();
    double learning_rate = 0.05;
    long steps = 2000;
    int batch_size = 16;
    std::uint64_t seed = 7;
    double confidence_threshold = 0.25;
    double nms_iou = 0.5;

    // Output rows per anchor: tx, ty, tw, th, objectness, classes..., distance.
    int rows() const { return 5 + num_classes + 1; }
    double cell_px() const { return static_cast<double>(image_side_px) / grid_size; }
};

void validate(const HeadConfig& cfg);
HeadConfig head_config_from_json_text(const std::string& text);
std::string head_config_to_json_text(const HeadConfig& cfg);

struct HeadParams {
    int num_anchors = 0;
    int rows = 0;
    int cols = 0;
    std::vector<double> weights;  // num_anchors * rows * cols
    std::vector<double> bias;     // num_anchors * rows
    bool has_height_head = false;
    std::vector<double> height_weights;  // cols
    double height_bias = 0.0;

    double& w(int a, int r, int c) { return weights[(a * rows + r) * cols + c]; }
    double w(int a, int r, int c) const { return weights[(a * rows + r) * cols + c]; }
    double& b(int a, int r) { return bias[a * rows + r]; }
    double b(int a, int r) const { return bias[a * rows + r]; }

    static HeadParams zeros(const HeadConfig& cfg);
    static HeadParams random_init(const HeadConfig& cfg, std::uint64_t seed,
                                  double scale = 0.01);

    void axpy(double alpha, const HeadParams& g);  // *this += alpha * g
    bool all_finite() const;
};

// Versioned text checkpoint; numbers are printed with round-trip precision.
std::string write_params(const HeadParams& params);
HeadParams read_params(const std::string& text);

// Per-cell feature grid. Layout per cell, for an nc-channel image:
//   [0, nc)        per-channel patch mean / 255
//   [nc, 2nc)      per-channel patch standard deviation / 255
//   2nc            mean of (|du| + |dv|) / 2 over the patch (luminance, /255)
//   2nc + 1        mean of sqrt(du^2 + dv^2) over the patch (luminance, /255)
//   2nc + 2        ||cell center - principal point|| / (half image diagonal)
//   2nc + 3        sin(4 * azimuth of cell center about the principal point)
//   2nc + 4        cos(4 * azimuth)
// padded with zeros / truncated to feature_dim. Gradients use central
// differences with clamped borders. The gradient magnitudes are isotropic and
// the azimuth is encoded with quadrant symmetry, so a right-angle rotation of
// the input permutes the grid without changing any cell's features (flips
// additionally negate the sin channel); this is what makes feature-space
// augmentation exact.
struct FeatureGrid {
    int grid_size = 0;
    int feature_dim = 0;
    int channels = 1;
    std::vector<double> data;  // grid_size^2 * feature_dim, row-major cells

    std::span<const double> cell(int col, int row) const {
        return {data.data() + (static_cast<std::size_t>(row) * grid_size + col) * feature_dim,
                static_cast<std::size_t>(feature_dim)};
    }
};

// Throws ShapeError unless the image is square with side divisible by the
// grid size.
FeatureGrid extract_features(const Image& image, const HeadConfig& cfg,
                             const CameraModel& model);

// Raw affine head outputs, length grid^2 * anchors * rows.
std::vector<double> forward(const HeadParams& params, const FeatureGrid& features);

inline std::size_t raw_index(const HeadConfig& cfg, int cell, int anchor, int row) {
    return (static_cast<std::size_t>(cell) * cfg.anchors.size() + anchor) * cfg.rows() + row;
}

// Per-cell ground-truth assignment: the cell containing the box center owns
// the object; collisions keep the nearer object (tie: lower index). With
// several anchors the one whose prior shape best matches the box is used.
struct Assignment {
    std::vector<int> cell_gt;      // grid^2, -1 for negatives
    std::vector<int> cell_anchor;  // grid^2
};
Assignment assign_targets(const std::vector<GroundTruthObject>& gts, const HeadConfig& cfg);

// YOLO-style decode: center = cell origin + cell_px * sigmoid(tx, ty),
// size = anchor * exp(clamp(tw, th, +-4)), confidence = sigma(obj) * max_c
// sigma(cls_c), distance = denormalize(sigma(dist)). Detections with
// confidence <= threshold are dropped (a confidence exactly at the threshold
// does not survive), then greedy same-class suppression at IoU > nms_iou
// keeps the higher-confidence box.
std::vector<Detection> decode(std::span<const double> raw, const HeadConfig& cfg);

struct SampleTargets {
    Assignment assignment;
    std::vector<GroundTruthObject> gts;
    std::vector<double> gt_norm_dist;     // normalized, clamp-counted
    double height_norm = -1.0;            // < 0: no height target
};

struct TrainingSample {
    FeatureGrid features;
    SampleTargets targets;
};

TrainingSample make_training_sample(const Scene& scene, const HeadConfig& cfg,
                                    const CameraModel& model, ClampStats* stats = nullptr);

// Dihedral augmentation: horizontal flip (applied first) then `rot` quarter
// turns. Exact in feature space when the principal point sits at the image
// center, which the synthetic camera guarantees.
struct Dihedral {
    int rot = 0;  // quarter turns, clockwise in (u, v)
    bool flip = false;
};
Vec2 transform_point(Vec2 p, Dihedral d, double side);
BBox transform_box(const BBox& box, Dihedral d, double side);
GroundTruthObject transform_gt(const GroundTruthObject& gt, Dihedral d, double side);
FeatureGrid transform_features(const FeatureGrid& grid, Dihedral d);
TrainingSample transform_sample(const TrainingSample& sample, Dihedral d,
                                const HeadConfig& cfg);

// Full objective and its gradient over a batch. Component definitions:
//   obj  — mean BCE-with-logits over every cell/anchor (positives target 1),
//   cls  — mean per-class BCE over positives,
//   loc  — mean (1 - CIoU) over positives, CIoU gradient by central finite
//          differences chained analytically through the decode,
//   dist — mean L1 on the normalized distances of positives,
//   camera_height — mean L1 on the normalized height (when enabled).
// The returned gradient is of the weighted total.
struct LossAndGrad {
    LossBreakdown breakdown;
    HeadParams grad;
    long num_positives = 0;
};
LossAndGrad loss_and_grad(const HeadParams& params, std::span<const TrainingSample> batch,
                          const HeadConfig& cfg);

struct TrainHistory {
    struct StepRecord {
        long step = 0;
        LossBreakdown loss;
    };
    struct ValRecord {
        long step = 0;
        double distance_mae_m = 0.0;
    };
    std::vector<StepRecord> steps;
    std::vector<ValRecord> val;
};

struct TrainResult {
    HeadParams params;
    TrainHistory history;
    ClampStats norm_clamps;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
};

// Plain SGD at a fixed learning rate, deterministic for a given seed.
// Fisheye inputs get right-angle rotation and flip augmentation (targets
// transformed to match); equirectangular inputs flip only. Throws
// TrainingDiverged when the total loss turns non-finite.
TrainResult train(const std::vector<Scene>& scenes, const HeadConfig& cfg,
                  const CameraModel& model);

struct Prediction {
    std::vector<Detection> detections;
    std::optional<double> height_m;
};
Prediction predict(const HeadParams& params, const Image& image, const HeadConfig& cfg,
                   const CameraModel& model);

// Distance MAE (meters) of the distance head read out at each ground truth's
// assigned cell. Well-defined for untrained parameters, unlike a
// detection-gated error, so it doubles as the before/after training gauge.
double validation_distance_mae(const HeadParams& params, const std::vector<Scene>& scenes,
                               std::span<const std::size_t> indices, const HeadConfig& cfg,
                               const CameraModel& model);

}  // namespace omnidist
