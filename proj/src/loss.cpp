#include "omnidist/loss.hpp"

#include <cmath>
#include <numbers>

#include "omnidist/errors.hpp"

namespace omnidist {

LossWeights LossWeights::defaults() {
    constexpr double ratio_sum = 1.0 + 0.3 + 0.05;
    constexpr double det_share = 2.0 / 3.0;
    return {det_share * 1.0 / ratio_sum, det_share * 0.3 / ratio_sum,
            det_share * 0.05 / ratio_sum, 1.0 / 3.0, 0.0};
}

LossWeights LossWeights::with_height_head() {
    LossWeights w = defaults();
    w.lambda_dist = 1.0 / 6.0;
    w.lambda_ad = 1.0 / 6.0;
    return w;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

BceResult bce_with_logits(double logit, double target) {
    if (target < 0.0 || target > 1.0) throw DomainError("bce_with_logits: target outside [0, 1]");
    // max(x,0) - x*t + log(1 + exp(-|x|))
    const double value = std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
    return {value, sigmoid(logit) - target};
}

double ciou_value(const BBox& a, const BBox& b) {
    if (!a.valid() || !b.valid()) throw DomainError("ciou: degenerate box");
    const double intersection = [&] {
        const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
        const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
        return (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
    }();
    const double iou = intersection / (a.area() + b.area() - intersection);

    const double rho2 = (a.cx - b.cx) * (a.cx - b.cx) + (a.cy - b.cy) * (a.cy - b.cy);
    const double cw = std::max(a.right(), b.right()) - std::min(a.left(), b.left());
    const double ch = std::max(a.bottom(), b.bottom()) - std::min(a.top(), b.top());
    const double c2 = cw * cw + ch * ch;

    const double datan = std::atan(b.w / b.h) - std::atan(a.w / a.h);
    const double v = 4.0 / (std::numbers::pi * std::numbers::pi) * datan * datan;
    const double alpha = v == 0.0 ? 0.0 : v / (1.0 - iou + v);

    return iou - rho2 / c2 - alpha * v;
}

CiouResult ciou(const BBox& a, const BBox& b) {
    CiouResult res;
    res.value = ciou_value(a, b);
    BBox p = a;
    double* params[4] = {&p.cx, &p.cy, &p.w, &p.h};
    for (int i = 0; i < 4; ++i) {
        const double orig = *params[i];
        const double step = 1e-4 * std::max(1.0, std::abs(orig));
        *params[i] = orig + step;
        const double hi = ciou_value(p, b);
        *params[i] = orig - step;
        const double lo = ciou_value(p, b);
        *params[i] = orig;
        res.grad[i] = (hi - lo) / (2.0 * step);
    }
    return res;
}

DistanceLossResult distance_loss(std::span<const double> pred_norm,
                                 std::span<const double> gt_norm) {
    if (pred_norm.size() != gt_norm.size())
        throw ShapeError("distance_loss: prediction/target length mismatch");
    DistanceLossResult res;
    if (pred_norm.empty()) {
        res.empty_batch = true;
        return res;
    }
    const std::size_t n = pred_norm.size();
    res.grad.resize(n, 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (pred_norm[i] < 0.0 || pred_norm[i] > 1.0 || gt_norm[i] < 0.0 || gt_norm[i] > 1.0)
            throw DomainError("distance_loss: values must be normalized to [0, 1]");
        const double diff = pred_norm[i] - gt_norm[i];
        sum += std::abs(diff);
        if (diff > 0.0) res.grad[i] = 1.0 / static_cast<double>(n);
        else if (diff < 0.0) res.grad[i] = -1.0 / static_cast<double>(n);
    }
    res.value = sum / static_cast<double>(n);
    return res;
}

LossBreakdown total_loss(const LossComponents& c, const LossWeights& w) {
    if (w.lambda_obj < 0.0 || w.lambda_cls < 0.0 || w.lambda_loc < 0.0 ||
        w.lambda_dist < 0.0 || w.lambda_ad < 0.0)
        throw ConfigError("total_loss: negative loss weight");
    LossBreakdown out{c.obj, c.cls, c.loc, c.dist, c.camera_height, 0.0};
    out.total = w.lambda_obj * c.obj + w.lambda_cls * c.cls + w.lambda_loc * c.loc +
                w.lambda_dist * c.dist + w.lambda_ad * c.camera_height;
    return out;
}

}  // namespace omnidist
