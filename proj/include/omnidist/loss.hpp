#pragma once

#include <array>
#include <span>
#include <vector>

#include "omnidist/geometry.hpp"

namespace omnidist {

// Weighting coefficients of the multi-component objective
//   L_total = l_obj*L_obj + l_cls*L_cls + l_loc*L_loc + l_dist*L_dist
// plus, when the camera-height head is enabled, + l_ad * L_height.
struct LossWeights {
    double lambda_obj = 0.0;
    double lambda_cls = 0.0;
    double lambda_loc = 0.0;
    double lambda_dist = 0.0;
    double lambda_ad = 0.0;

    // lambda_dist = 1/3, the remaining 2/3 split among obj:cls:loc in the
    // detector's customary 1 : 0.3 : 0.05 proportions.
    static LossWeights defaults();
    // Camera-height variant: lambda_dist = 1/6, lambda_ad = 1/6, same 2/3
    // split for the detection terms.
    static LossWeights with_height_head();
};

// Raw (unweighted) component values.
struct LossComponents {
    double obj = 0.0;
    double cls = 0.0;
    double loc = 0.0;
    double dist = 0.0;
    double camera_height = 0.0;
};

struct LossBreakdown {
    double obj = 0.0;
    double cls = 0.0;
    double loc = 0.0;
    double dist = 0.0;
    double camera_height = 0.0;
    double total = 0.0;
};

// Numerically stable binary cross-entropy on a logit; gradient is
// sigmoid(logit) - target. Valid for all finite logits.
struct BceResult {
    double value = 0.0;
    double grad = 0.0;
};
BceResult bce_with_logits(double logit, double target);

double sigmoid(double x);

// Complete-IoU between two boxes: IoU - rho^2/c^2 - alpha*v. Value plus the
// gradient with respect to a's (cx, cy, w, h), obtained by central finite
// differences (step 1e-4 * max(1, |param|)); downstream code chains it
// analytically through the box decode. Throws DomainError on degenerate
// boxes.
struct CiouResult {
    double value = 0.0;
    std::array<double, 4> grad{};
};
double ciou_value(const BBox& a, const BBox& b);
CiouResult ciou(const BBox& a, const BBox& b);

// Mean L1 distance loss on the normalized scale, gradient +-1/N per
// prediction (0 at ties). N = 0 yields value 0 with the empty_batch flag set.
// Inputs must be in [0, 1] (DomainError) and of equal length (ShapeError).
struct DistanceLossResult {
    double value = 0.0;
    std::vector<double> grad;
    bool empty_batch = false;
};
DistanceLossResult distance_loss(std::span<const double> pred_norm,
                                 std::span<const double> gt_norm);

// Weighted total; components are stored raw. Negative weights throw
// ConfigError.
LossBreakdown total_loss(const LossComponents& components, const LossWeights& weights);

}  // namespace omnidist
