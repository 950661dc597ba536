#include "oracles.hpp"

#include "omnidist/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace oracles {

using namespace omnidist;

double ray_march_ground_distance(const CameraModel& model, Vec2 pixel, double fine_step) {
    const Vec3 ray = pixel_to_ray(model, pixel);
    if (ray.z >= 0.0) throw NoGroundIntersection("oracle: ray at or above horizon");
    const Vec3 origin{0.0, 0.0, model.height_m};

    const double coarse = std::max(fine_step, 1e-2);
    double lo = 0.0;
    double t = 0.0;
    // coarse sweep until the ray dips below the plane
    while (origin.z + t * ray.z > 0.0) {
        lo = t;
        t += coarse;
        if (t > 1e7) throw NoGroundIntersection("oracle: no crossing found");
    }
    // re-march the bracket at the fine step
    double s = lo;
    while (origin.z + s * ray.z > 0.0) s += fine_step;
    const Vec3 p = origin + ray * s;
    return std::hypot(p.x, p.y);
}

std::array<double, 9> zyx_rotation_entries(double pitch, double roll, double yaw) {
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const double cp = std::cos(pitch), sp = std::sin(pitch);
    const double cr = std::cos(roll), sr = std::sin(roll);
    return {cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
            sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
            -sp,     cp * sr,                cp * cr};
}

Vec3 rotate_by_entries(const std::array<double, 9>& m, Vec3 v) {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

double reference_ciou(const BBox& a, const BBox& b) {
    const long double ax1 = a.cx - a.w / 2.0L, ax2 = a.cx + a.w / 2.0L;
    const long double ay1 = a.cy - a.h / 2.0L, ay2 = a.cy + a.h / 2.0L;
    const long double bx1 = b.cx - b.w / 2.0L, bx2 = b.cx + b.w / 2.0L;
    const long double by1 = b.cy - b.h / 2.0L, by2 = b.cy + b.h / 2.0L;

    const long double iw = std::max(0.0L, std::min(ax2, bx2) - std::max(ax1, bx1));
    const long double ih = std::max(0.0L, std::min(ay2, by2) - std::max(ay1, by1));
    const long double inter = iw * ih;
    const long double uni = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    const long double iou = inter / uni;

    const long double rho2 = (a.cx - b.cx) * (long double)(a.cx - b.cx) +
                             (a.cy - b.cy) * (long double)(a.cy - b.cy);
    const long double cw = std::max(ax2, bx2) - std::min(ax1, bx1);
    const long double ch = std::max(ay2, by2) - std::min(ay1, by1);
    const long double c2 = cw * cw + ch * ch;

    const long double pi = 3.14159265358979323846264338327950288L;
    const long double da = std::atan((long double)b.w / b.h) - std::atan((long double)a.w / a.h);
    const long double v = 4.0L / (pi * pi) * da * da;
    const long double alpha = v == 0.0L ? 0.0L : v / (1.0L - iou + v);
    return static_cast<double>(iou - rho2 / c2 - alpha * v);
}

namespace {

struct PooledDet {
    std::size_t image;
    std::size_t index_in_image;
    double confidence;
    int class_id;
    BBox box;
    double distance_m;
    bool has_distance;
    bool tp = false;
    int matched_gt = -1;
};

// Greedy confidence-ordered one-to-one matching (re-implementation).
void match_image_class(std::vector<PooledDet*>& dets, const std::vector<const GroundTruthObject*>& gts,
                       double threshold, std::vector<int>& det_to_gt) {
    std::sort(dets.begin(), dets.end(), [](const PooledDet* a, const PooledDet* b) {
        if (a->confidence != b->confidence) return a->confidence > b->confidence;
        return a->index_in_image < b->index_in_image;
    });
    std::vector<bool> used(gts.size(), false);
    det_to_gt.assign(dets.size(), -1);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        double best = 0.0;  // an IoU of exactly zero never matches
        int pick = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[g]) continue;
            const double v = iou(dets[d]->box, gts[g]->box);
            if (v >= threshold && v > best) {
                best = v;
                pick = static_cast<int>(g);
            }
        }
        if (pick >= 0) {
            used[pick] = true;
            det_to_gt[d] = pick;
        }
    }
}

double interp_ap_101(std::vector<std::pair<double, double>> recall_precision) {
    // running max of precision from the high-recall end
    for (std::size_t i = recall_precision.size(); i-- > 1;)
        recall_precision[i - 1].second =
            std::max(recall_precision[i - 1].second, recall_precision[i].second);
    double sum = 0.0;
    for (int g = 0; g <= 100; ++g) {
        const double r = g / 100.0;
        double p = 0.0;
        for (const auto& [rec, prec] : recall_precision)
            if (rec >= r) {
                p = prec;
                break;
            }
        sum += p;
    }
    return sum / 101.0;
}

}  // namespace

EvalReport reference_evaluate(const DetectionsDoc& dets, const AnnotationsDoc& gts,
                              const EvalConfig& config) {
    std::map<std::string, std::size_t> image_order;
    for (std::size_t i = 0; i < gts.images.size(); ++i) image_order[gts.images[i].image] = i;

    std::vector<PooledDet> pool;
    for (const auto& rec : dets.images) {
        const auto it = image_order.find(rec.image);
        if (it == image_order.end())
            throw ValidationError("oracle evaluate: unknown image " + rec.image);
        for (std::size_t k = 0; k < rec.objects.size(); ++k) {
            const Detection& d = rec.objects[k];
            pool.push_back({it->second, k, d.confidence, d.class_id, d.box, d.distance_m,
                            d.has_distance});
        }
    }

    std::set<int> classes;
    long num_gts = 0;
    for (const auto& ann : gts.images) {
        num_gts += static_cast<long>(ann.objects.size());
        for (const auto& gt : ann.objects) classes.insert(gt.class_id);
    }

    EvalReport rep;
    rep.num_images = static_cast<long>(gts.images.size());
    rep.num_detections = static_cast<long>(pool.size());
    rep.num_gts = num_gts;

    // matching at the distance gate, grouped (image, class)
    std::vector<MatchedPair> matched;
    long tp_gate = 0;
    for (std::size_t img = 0; img < gts.images.size(); ++img) {
        for (const int cls : classes) {
            std::vector<PooledDet*> ds;
            for (auto& p : pool)
                if (p.image == img && p.class_id == cls) ds.push_back(&p);
            std::vector<const GroundTruthObject*> gs;
            for (const auto& gt : gts.images[img].objects)
                if (gt.class_id == cls) gs.push_back(&gt);
            if (ds.empty() && gs.empty()) continue;
            std::vector<int> det_to_gt;
            match_image_class(ds, gs, config.distance_iou_gate, det_to_gt);
            for (std::size_t d = 0; d < ds.size(); ++d)
                if (det_to_gt[d] >= 0) {
                    ++tp_gate;
                    if (ds[d]->has_distance)
                        matched.push_back({ds[d]->confidence,
                                           std::abs(ds[d]->distance_m -
                                                    gs[det_to_gt[d]]->distance_m),
                                           gs[det_to_gt[d]]->distance_m});
                }
        }
        // detections of classes with no ground truth anywhere are plain FPs
    }
    rep.num_matched = static_cast<long>(matched.size());
    rep.precision = pool.empty() ? 0.0 : static_cast<double>(tp_gate) / pool.size();
    rep.recall = num_gts == 0 ? 0.0 : static_cast<double>(tp_gate) / num_gts;

    if (!matched.empty()) {
        double s = 0.0, wn = 0.0, wd = 0.0;
        for (const auto& m : matched) {
            s += m.error_m;
            wn += m.confidence * m.error_m;
            wd += m.confidence;
        }
        rep.absolute_error_m = s / matched.size();
        if (wd > 0.0) rep.weighted_error = wn / wd;
    }
    if (!config.bin_edges.empty()) {
        for (std::size_t i = 0; i + 1 < config.bin_edges.size(); ++i) {
            BinReport bin;
            bin.lo_m = config.bin_edges[i];
            bin.hi_m = config.bin_edges[i + 1];
            double s = 0.0, wn = 0.0, wd = 0.0;
            for (const auto& m : matched)
                if (m.gt_distance_m >= bin.lo_m && m.gt_distance_m < bin.hi_m) {
                    ++bin.count;
                    s += m.error_m;
                    wn += m.confidence * m.error_m;
                    wd += m.confidence;
                }
            if (bin.count > 0) bin.absolute_error_m = s / bin.count;
            if (wd > 0.0) bin.weighted_error = wn / wd;
            rep.bins.push_back(bin);
        }
    }

    // AP per (threshold, class), averaged class-then-threshold
    const double thresholds[] = {0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
    for (const double thr : thresholds) {
        double sum = 0.0;
        long n_cls = 0;
        for (const int cls : classes) {
            long class_gts = 0;
            std::vector<PooledDet> marked;  // copies with tp flags for this threshold
            for (std::size_t img = 0; img < gts.images.size(); ++img) {
                std::vector<PooledDet*> ds;
                for (auto& p : pool)
                    if (p.image == img && p.class_id == cls) ds.push_back(&p);
                std::vector<const GroundTruthObject*> gs;
                for (const auto& gt : gts.images[img].objects)
                    if (gt.class_id == cls) gs.push_back(&gt);
                class_gts += static_cast<long>(gs.size());
                std::vector<int> det_to_gt;
                match_image_class(ds, gs, thr, det_to_gt);
                for (std::size_t d = 0; d < ds.size(); ++d) {
                    PooledDet copy = *ds[d];
                    copy.tp = det_to_gt[d] >= 0;
                    marked.push_back(copy);
                }
            }
            if (class_gts == 0) continue;
            std::stable_sort(marked.begin(), marked.end(),
                             [](const PooledDet& a, const PooledDet& b) {
                                 return a.confidence > b.confidence;
                             });
            std::vector<std::pair<double, double>> rp;
            long tp = 0;
            for (std::size_t k = 0; k < marked.size(); ++k) {
                if (marked[k].tp) ++tp;
                rp.push_back({static_cast<double>(tp) / class_gts,
                              static_cast<double>(tp) / static_cast<double>(k + 1)});
            }
            sum += interp_ap_101(std::move(rp));
            ++n_cls;
        }
        rep.ap_per_threshold.push_back(
            {thr, n_cls > 0 ? std::optional<double>(sum / n_cls) : std::nullopt});
    }
    rep.map50 = rep.ap_per_threshold.front().second;
    double s = 0.0;
    long n = 0;
    for (const auto& [thr, ap] : rep.ap_per_threshold)
        if (ap) {
            s += *ap;
            ++n;
        }
    rep.map50_95 = n > 0 ? std::optional<double>(s / n) : std::nullopt;
    return rep;
}

}  // namespace oracles
