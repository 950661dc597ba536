#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "omnidist/data_io.hpp"
#include "omnidist/geometry.hpp"

namespace omnidist {

// One-to-one greedy matching of detections to ground truth within a single
// image and class: detections in confidence order (ties: lower index first),
// each claiming the unmatched ground truth of highest IoU at or above the
// threshold (ties: lower ground-truth index).
struct MatchPair {
    int det_index = -1;
    int gt_index = -1;
    double iou = 0.0;
};
struct MatchResult {
    std::vector<MatchPair> pairs;
    std::vector<int> unmatched_dets;
    std::vector<int> unmatched_gts;
};
MatchResult match_detections(std::span<const Detection> dets,
                             std::span<const GroundTruthObject> gts, double iou_threshold);

// Pooled detection ranking for AP; `tp` marks detections matched at the
// evaluated IoU threshold. The list must already be ranked (confidence
// descending, document order breaking ties).
struct RankedDetection {
    double confidence = 0.0;
    bool tp = false;
};

// 101-point interpolated average precision; absent when there is no ground
// truth to recall.
std::optional<double> average_precision(std::span<const RankedDetection> ranked, long num_gts);

// Matched detection/ground-truth pair retained for the distance metrics.
struct MatchedPair {
    double confidence = 0.0;
    double error_m = 0.0;        // |d_gt - d_pred|
    double gt_distance_m = 0.0;  // binning key
};

std::optional<double> absolute_distance_error(std::span<const MatchedPair> pairs);
// E_w = sum(c_i * |d_i - d^_i|) / sum(c_i); absent when sum(c_i) == 0.
std::optional<double> weighted_distance_error(std::span<const MatchedPair> pairs);

struct BinReport {
    double lo_m = 0.0;
    double hi_m = 0.0;
    std::optional<double> weighted_error;
    std::optional<double> absolute_error_m;
    long count = 0;
};
// Bins by ground-truth distance over half-open intervals [lo, hi); edges must
// be strictly increasing (ConfigError).
std::vector<BinReport> binned_errors(std::span<const MatchedPair> pairs,
                                     std::span<const double> bin_edges);

struct EvalConfig {
    double distance_iou_gate = 0.5;
    std::vector<double> bin_edges;  // empty: no per-bin table
};

struct EvalReport {
    double precision = 0.0;
    double recall = 0.0;
    std::vector<std::pair<double, std::optional<double>>> ap_per_threshold;
    std::optional<double> map50;
    std::optional<double> map50_95;
    std::optional<double> absolute_error_m;
    std::optional<double> weighted_error;
    std::vector<BinReport> bins;
    long num_images = 0;
    long num_detections = 0;
    long num_gts = 0;
    long num_matched = 0;  // at the distance gate
};

// Full metric suite: precision/recall and the distance errors at the
// configured IoU gate, AP averaged class-then-threshold over
// 0.50:0.05:0.95. Detections referencing images absent from the annotations
// raise ValidationError; annotated images without a detection record count
// as images with zero detections.
EvalReport evaluate(const DetectionsDoc& dets, const AnnotationsDoc& gts,
                    const EvalConfig& config);

std::string report_to_json_text(const EvalReport& report);
std::string report_to_csv(const EvalReport& report, const std::string& model_label);

}  // namespace omnidist
