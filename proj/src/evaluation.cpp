#include "omnidist/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "omnidist/errors.hpp"

namespace omnidist {

namespace {

using nlohmann::json;

std::vector<int> confidence_order(std::span<const Detection> dets) {
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return dets[a].confidence > dets[b].confidence;
    });
    return order;
}

constexpr double kApThresholds[] = {0.50, 0.55, 0.60, 0.65, 0.70,
                                    0.75, 0.80, 0.85, 0.90, 0.95};

json opt_to_json(const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
}

void csv_number(std::string& out, const std::optional<double>& v) {
    if (v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.9g", *v);
        out += buf;
    }
}

}  // namespace

MatchResult match_detections(std::span<const Detection> dets,
                             std::span<const GroundTruthObject> gts, double iou_threshold) {
    MatchResult result;
    std::vector<bool> gt_taken(gts.size(), false);
    for (int di : confidence_order(dets)) {
        int best_gt = -1;
        double best_iou = 0.0;
        for (int gi = 0; gi < static_cast<int>(gts.size()); ++gi) {
            if (gt_taken[gi]) continue;
            const double v = iou(dets[di].box, gts[gi].box);
            if (v >= iou_threshold && v > best_iou) {
                best_iou = v;
                best_gt = gi;
            }
        }
        if (best_gt >= 0) {
            gt_taken[best_gt] = true;
            result.pairs.push_back({di, best_gt, best_iou});
        } else {
            result.unmatched_dets.push_back(di);
        }
    }
    for (int gi = 0; gi < static_cast<int>(gts.size()); ++gi)
        if (!gt_taken[gi]) result.unmatched_gts.push_back(gi);
    return result;
}

std::optional<double> average_precision(std::span<const RankedDetection> ranked, long num_gts) {
    if (num_gts <= 0) return std::nullopt;
    // precision/recall after each rank, then 101-point interpolation
    std::vector<double> precision, recall;
    long tp = 0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
        if (ranked[k].tp) ++tp;
        precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gts));
    }
    double ap = 0.0;
    for (int g = 0; g <= 100; ++g) {
        const double r = g / 100.0;
        double best = 0.0;
        for (std::size_t k = 0; k < ranked.size(); ++k)
            if (recall[k] >= r) best = std::max(best, precision[k]);
        ap += best;
    }
    return ap / 101.0;
}

std::optional<double> absolute_distance_error(std::span<const MatchedPair> pairs) {
    if (pairs.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& p : pairs) sum += p.error_m;
    return sum / static_cast<double>(pairs.size());
}

std::optional<double> weighted_distance_error(std::span<const MatchedPair> pairs) {
    double num = 0.0, den = 0.0;
    for (const auto& p : pairs) {
        num += p.confidence * p.error_m;
        den += p.confidence;
    }
    if (den <= 0.0) return std::nullopt;
    return num / den;
}

std::vector<BinReport> binned_errors(std::span<const MatchedPair> pairs,
                                     std::span<const double> bin_edges) {
    if (bin_edges.size() < 2) throw ConfigError("binned_errors: need at least two edges");
    for (std::size_t i = 1; i < bin_edges.size(); ++i)
        if (bin_edges[i] <= bin_edges[i - 1])
            throw ConfigError("binned_errors: edges must be strictly increasing");

    std::vector<BinReport> bins;
    for (std::size_t i = 0; i + 1 < bin_edges.size(); ++i) {
        std::vector<MatchedPair> in_bin;
        for (const auto& p : pairs)
            if (p.gt_distance_m >= bin_edges[i] && p.gt_distance_m < bin_edges[i + 1])
                in_bin.push_back(p);
        BinReport bin;
        bin.lo_m = bin_edges[i];
        bin.hi_m = bin_edges[i + 1];
        bin.count = static_cast<long>(in_bin.size());
        bin.weighted_error = weighted_distance_error(in_bin);
        bin.absolute_error_m = absolute_distance_error(in_bin);
        bins.push_back(bin);
    }
    return bins;
}

EvalReport evaluate(const DetectionsDoc& dets, const AnnotationsDoc& gts,
                    const EvalConfig& config) {
    if (config.distance_iou_gate <= 0.0 || config.distance_iou_gate > 1.0)
        throw ConfigError("evaluate: IoU gate must be in (0, 1]");

    std::map<std::string, const ImageAnnotations*> gt_by_image;
    for (const auto& ann : gts.images) gt_by_image[ann.image] = &ann;
    std::map<std::string, const ImageDetections*> det_by_image;
    for (const auto& d : dets.images) {
        if (!gt_by_image.count(d.image))
            throw ValidationError("evaluate: detections reference unknown image '" + d.image + "'");
        det_by_image[d.image] = &d;
    }

    // class set present in the ground truth (classes without any GT carry no
    // AP and are excluded from the means)
    std::set<int> classes;
    EvalReport report;
    report.num_images = static_cast<long>(gts.images.size());
    for (const auto& ann : gts.images) {
        report.num_gts += static_cast<long>(ann.objects.size());
        for (const auto& gt : ann.objects) classes.insert(gt.class_id);
    }
    for (const auto& d : dets.images) report.num_detections += static_cast<long>(d.objects.size());

    // Per image and class views, in annotation-document order.
    struct ImageClassView {
        std::vector<Detection> dets;
        std::vector<GroundTruthObject> gts;
    };
    std::vector<std::map<int, ImageClassView>> views(gts.images.size());
    for (std::size_t i = 0; i < gts.images.size(); ++i) {
        for (const auto& gt : gts.images[i].objects) views[i][gt.class_id].gts.push_back(gt);
        const auto it = det_by_image.find(gts.images[i].image);
        if (it != det_by_image.end())
            for (const auto& det : it->second->objects) views[i][det.class_id].dets.push_back(det);
    }

    // precision / recall / distance errors at the gate
    std::vector<MatchedPair> matched;
    long tp_at_gate = 0;
    for (auto& per_class : views)
        for (auto& [cls, view] : per_class) {
            const MatchResult m =
                match_detections(view.dets, view.gts, config.distance_iou_gate);
            tp_at_gate += static_cast<long>(m.pairs.size());
            for (const auto& pair : m.pairs) {
                const Detection& det = view.dets[pair.det_index];
                const GroundTruthObject& gt = view.gts[pair.gt_index];
                if (!det.has_distance) continue;  // flagged geodist records
                matched.push_back({det.confidence, std::abs(det.distance_m - gt.distance_m),
                                   gt.distance_m});
            }
        }
    report.num_matched = static_cast<long>(matched.size());
    report.precision = report.num_detections > 0
                           ? static_cast<double>(tp_at_gate) / report.num_detections
                           : 0.0;
    report.recall =
        report.num_gts > 0 ? static_cast<double>(tp_at_gate) / report.num_gts : 0.0;
    report.absolute_error_m = absolute_distance_error(matched);
    report.weighted_error = weighted_distance_error(matched);
    if (!config.bin_edges.empty()) report.bins = binned_errors(matched, config.bin_edges);

    // AP: per class at each threshold, class mean per threshold, then the
    // threshold mean for mAP@50:95.
    for (const double thr : kApThresholds) {
        double sum = 0.0;
        long n_classes = 0;
        for (const int cls : classes) {
            std::vector<RankedDetection> ranked;
            long class_gts = 0;
            for (auto& per_class : views) {
                const auto it = per_class.find(cls);
                if (it == per_class.end()) continue;
                auto& view = it->second;
                class_gts += static_cast<long>(view.gts.size());
                const MatchResult m = match_detections(view.dets, view.gts, thr);
                std::vector<bool> is_tp(view.dets.size(), false);
                for (const auto& pair : m.pairs) is_tp[pair.det_index] = true;
                for (int di : confidence_order(view.dets))
                    ranked.push_back({view.dets[di].confidence, is_tp[di]});
            }
            // pooled ranking across images: confidence descending, document
            // order breaking ties
            std::stable_sort(ranked.begin(), ranked.end(),
                             [](const RankedDetection& a, const RankedDetection& b) {
                                 return a.confidence > b.confidence;
                             });
            const auto ap = average_precision(ranked, class_gts);
            if (ap) {
                sum += *ap;
                ++n_classes;
            }
        }
        report.ap_per_threshold.push_back(
            {thr, n_classes > 0 ? std::optional<double>(sum / n_classes) : std::nullopt});
    }
    report.map50 = report.ap_per_threshold.front().second;
    {
        double sum = 0.0;
        long n = 0;
        for (const auto& [thr, ap] : report.ap_per_threshold)
            if (ap) {
                sum += *ap;
                ++n;
            }
        report.map50_95 = n > 0 ? std::optional<double>(sum / n) : std::nullopt;
    }
    return report;
}

std::string report_to_json_text(const EvalReport& r) {
    json thresholds = json::array();
    for (const auto& [thr, ap] : r.ap_per_threshold)
        thresholds.push_back({{"iou", thr}, {"ap", opt_to_json(ap)}});
    json bins = json::array();
    for (const auto& b : r.bins)
        bins.push_back({{"lo_m", b.lo_m},
                        {"hi_m", b.hi_m},
                        {"weighted_error", opt_to_json(b.weighted_error)},
                        {"absolute_error_m", opt_to_json(b.absolute_error_m)},
                        {"count", b.count}});
    const json j{{"precision", r.precision},
                 {"recall", r.recall},
                 {"ap_per_threshold", thresholds},
                 {"map50", opt_to_json(r.map50)},
                 {"map50_95", opt_to_json(r.map50_95)},
                 {"absolute_error_m", opt_to_json(r.absolute_error_m)},
                 {"weighted_error", opt_to_json(r.weighted_error)},
                 {"bins", bins},
                 {"num_images", r.num_images},
                 {"num_detections", r.num_detections},
                 {"num_gts", r.num_gts},
                 {"num_matched", r.num_matched}};
    return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& r, const std::string& model_label) {
    std::string out = "model,weighted_error,absolute_error_m,precision,recall,map50,map50_95\n";
    out += model_label + ",";
    csv_number(out, r.weighted_error);
    out += ",";
    csv_number(out, r.absolute_error_m);
    out += ",";
    csv_number(out, r.precision);
    out += ",";
    csv_number(out, r.recall);
    out += ",";
    csv_number(out, r.map50);
    out += ",";
    csv_number(out, r.map50_95);
    out += "\n";
    if (!r.bins.empty()) {
        out += "bin_lo_m,bin_hi_m,weighted_error,absolute_error_m,count\n";
        for (const auto& b : r.bins) {
            csv_number(out, b.lo_m);
            out += ",";
            csv_number(out, b.hi_m);
            out += ",";
            csv_number(out, b.weighted_error);
            out += ",";
            csv_number(out, b.absolute_error_m);
            out += ",";
            out += std::to_string(b.count);
            out += "\n";
        }
    }
    return out;
}

}  // namespace omnidist
