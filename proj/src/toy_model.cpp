#include "omnidist/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "omnidist/errors.hpp"
#include "omnidist/rng.hpp"

namespace omnidist {

namespace {

using nlohmann::json;

constexpr int kRowTx = 0;
constexpr int kRowTy = 1;
constexpr int kRowTw = 2;
constexpr int kRowTh = 3;
constexpr int kRowObj = 4;
constexpr int kRowCls0 = 5;

int dist_row(const HeadConfig& cfg) { return 5 + cfg.num_classes; }

double sigmoid_prime(double s) { return s * (1.0 - s); }

double shape_iou(double w, double h, double aw, double ah) {
    const double inter = std::min(w, aw) * std::min(h, ah);
    return inter / (w * h + aw * ah - inter);
}

}  // namespace

void validate(const HeadConfig& cfg) {
    if (cfg.grid_size < 4) throw ConfigError("head config: grid_size must be >= 4");
    if (cfg.feature_dim < 4) throw ConfigError("head config: feature_dim must be >= 4");
    if (cfg.num_classes < 1) throw ConfigError("head config: num_classes must be >= 1");
    if (cfg.anchors.empty()) throw ConfigError("head config: need at least one anchor");
    for (const auto& a : cfg.anchors)
        if (a[0] <= 0.0 || a[1] <= 0.0) throw ConfigError("head config: non-positive anchor");
    if (cfg.image_side_px < cfg.grid_size || cfg.image_side_px % cfg.grid_size != 0)
        throw ConfigError("head config: image side must be a multiple of grid_size");
    if (cfg.learning_rate < 0.0) throw ConfigError("head config: negative learning_rate");
    if (cfg.steps < 0) throw ConfigError("head config: negative step count");
    if (cfg.batch_size < 1) throw ConfigError("head config: batch_size must be >= 1");
    if (cfg.height_max_m <= 0.0) throw ConfigError("head config: height_max_m must be > 0");
    validate(cfg.norm);
    total_loss({}, cfg.weights);  // rejects negative weights
}

HeadConfig head_config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("head config: ") + e.what());
    }
    HeadConfig cfg;
    try {
        cfg.grid_size = j.value("grid_size", cfg.grid_size);
        cfg.image_side_px = j.value("image_side_px", cfg.image_side_px);
        if (j.contains("anchors")) {
            cfg.anchors.clear();
            for (const auto& a : j["anchors"])
                cfg.anchors.push_back({a[0].get<double>(), a[1].get<double>()});
        }
        cfg.num_classes = j.value("num_classes", cfg.num_classes);
        cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
        if (j.contains("input_kind"))
            cfg.input_kind = j["input_kind"].get<std::string>() == "equirect"
                                 ? InputKind::equirect
                                 : InputKind::fisheye;
        if (j.contains("normalization")) {
            const auto& n = j["normalization"];
            cfg.norm.mode = norm_mode_from_string(n.value("mode", std::string("linear")));
            cfg.norm.d_max = n.value("d_max", cfg.norm.d_max);
            cfg.norm.epsilon = n.value("epsilon", cfg.norm.epsilon);
        }
        cfg.enable_height_head = j.value("enable_height_head", cfg.enable_height_head);
        cfg.height_max_m = j.value("height_max_m", cfg.height_max_m);
        if (j.contains("loss_weights")) {
            const auto& w = j["loss_weights"];
            cfg.weights.lambda_obj = w.value("lambda_obj", cfg.weights.lambda_obj);
            cfg.weights.lambda_cls = w.value("lambda_cls", cfg.weights.lambda_cls);
            cfg.weights.lambda_loc = w.value("lambda_loc", cfg.weights.lambda_loc);
            cfg.weights.lambda_dist = w.value("lambda_dist", cfg.weights.lambda_dist);
            cfg.weights.lambda_ad = w.value("lambda_ad", cfg.weights.lambda_ad);
        } else if (cfg.enable_height_head) {
            cfg.weights = LossWeights::with_height_head();
        }
        if (j.contains("optimizer")) {
            const auto& o = j["optimizer"];
            cfg.learning_rate = o.value("learning_rate", cfg.learning_rate);
            cfg.steps = o.value("steps", cfg.steps);
            cfg.batch_size = o.value("batch_size", cfg.batch_size);
            cfg.seed = o.value("seed", cfg.seed);
        }
        cfg.confidence_threshold = j.value("confidence_threshold", cfg.confidence_threshold);
        cfg.nms_iou = j.value("nms_iou", cfg.nms_iou);
    } catch (const json::exception& e) {
        throw FormatError(std::string("head config: ") + e.what());
    }
    validate(cfg);
    return cfg;
}

std::string head_config_to_json_text(const HeadConfig& cfg) {
    json anchors = json::array();
    for (const auto& a : cfg.anchors) anchors.push_back({a[0], a[1]});
    json j{{"grid_size", cfg.grid_size},
           {"image_side_px", cfg.image_side_px},
           {"anchors", anchors},
           {"num_classes", cfg.num_classes},
           {"feature_dim", cfg.feature_dim},
           {"input_kind", cfg.input_kind == InputKind::equirect ? "equirect" : "fisheye"},
           {"normalization",
            {{"mode", to_string(cfg.norm.mode)},
             {"d_max", cfg.norm.d_max},
             {"epsilon", cfg.norm.epsilon}}},
           {"enable_height_head", cfg.enable_height_head},
           {"height_max_m", cfg.height_max_m},
           {"loss_weights",
            {{"lambda_obj", cfg.weights.lambda_obj},
             {"lambda_cls", cfg.weights.lambda_cls},
             {"lambda_loc", cfg.weights.lambda_loc},
             {"lambda_dist", cfg.weights.lambda_dist},
             {"lambda_ad", cfg.weights.lambda_ad}}},
           {"optimizer",
            {{"learning_rate", cfg.learning_rate},
             {"steps", cfg.steps},
             {"batch_size", cfg.batch_size},
             {"seed", cfg.seed}}},
           {"confidence_threshold", cfg.confidence_threshold},
           {"nms_iou", cfg.nms_iou}};
    return j.dump(2) + "\n";
}

HeadParams HeadParams::zeros(const HeadConfig& cfg) {
    HeadParams p;
    p.num_anchors = static_cast<int>(cfg.anchors.size());
    p.rows = cfg.rows();
    p.cols = cfg.feature_dim;
    p.weights.assign(static_cast<std::size_t>(p.num_anchors) * p.rows * p.cols, 0.0);
    p.bias.assign(static_cast<std::size_t>(p.num_anchors) * p.rows, 0.0);
    p.has_height_head = cfg.enable_height_head;
    if (p.has_height_head) p.height_weights.assign(p.cols, 0.0);
    return p;
}

HeadParams HeadParams::random_init(const HeadConfig& cfg, std::uint64_t seed, double scale) {
    HeadParams p = zeros(cfg);
    Rng rng(seed);
    for (double& w : p.weights) w = scale * (2.0 * rng.next_double() - 1.0);
    for (double& b : p.bias) b = scale * (2.0 * rng.next_double() - 1.0);
    for (double& w : p.height_weights) w = scale * (2.0 * rng.next_double() - 1.0);
    if (p.has_height_head) p.height_bias = scale * (2.0 * rng.next_double() - 1.0);
    return p;
}

void HeadParams::axpy(double alpha, const HeadParams& g) {
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += alpha * g.weights[i];
    for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += alpha * g.bias[i];
    for (std::size_t i = 0; i < height_weights.size(); ++i)
        height_weights[i] += alpha * g.height_weights[i];
    height_bias += alpha * g.height_bias;
}

bool HeadParams::all_finite() const {
    const auto ok = [](double v) { return std::isfinite(v); };
    return std::all_of(weights.begin(), weights.end(), ok) &&
           std::all_of(bias.begin(), bias.end(), ok) &&
           std::all_of(height_weights.begin(), height_weights.end(), ok) && ok(height_bias);
}

std::string write_params(const HeadParams& p) {
    std::ostringstream out;
    out << "omnidist-params 1\n"
        << p.num_anchors << " " << p.rows << " " << p.cols << " " << (p.has_height_head ? 1 : 0)
        << "\n";
    char buf[40];
    const auto emit = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << buf << "\n";
    };
    for (double v : p.weights) emit(v);
    for (double v : p.bias) emit(v);
    if (p.has_height_head) {
        for (double v : p.height_weights) emit(v);
        emit(p.height_bias);
    }
    return out.str();
}

HeadParams read_params(const std::string& text) {
    std::istringstream in(text);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "omnidist-params" || version != 1)
        throw FormatError("params: unrecognized checkpoint header");
    HeadParams p;
    int has_height = 0;
    in >> p.num_anchors >> p.rows >> p.cols >> has_height;
    if (!in || p.num_anchors < 1 || p.rows < 7 || p.cols < 1)
        throw FormatError("params: bad shape header");
    p.has_height_head = has_height != 0;
    p.weights.resize(static_cast<std::size_t>(p.num_anchors) * p.rows * p.cols);
    p.bias.resize(static_cast<std::size_t>(p.num_anchors) * p.rows);
    for (double& v : p.weights) in >> v;
    for (double& v : p.bias) in >> v;
    if (p.has_height_head) {
        p.height_weights.resize(p.cols);
        for (double& v : p.height_weights) in >> v;
        in >> p.height_bias;
    }
    if (!in) throw FormatError("params: truncated checkpoint");
    return p;
}

FeatureGrid extract_features(const Image& image, const HeadConfig& cfg,
                             const CameraModel& model) {
    if (image.width != image.height) throw ShapeError("extract_features: image must be square");
    if (image.width != cfg.image_side_px)
        throw ShapeError("extract_features: image side does not match the config");
    if (image.width % cfg.grid_size != 0)
        throw ShapeError("extract_features: side not divisible by grid size");

    const int S = cfg.grid_size;
    const int patch = image.width / S;
    const int nc = image.channels;
    const double half_diag = 0.5 * std::hypot(image.width, image.height);

    FeatureGrid grid;
    grid.grid_size = S;
    grid.feature_dim = cfg.feature_dim;
    grid.channels = nc;
    grid.data.assign(static_cast<std::size_t>(S) * S * cfg.feature_dim, 0.0);

    const auto lum = [&](int u, int v) {
        double s = 0.0;
        for (int c = 0; c < nc; ++c) s += image.at(u, v, c);
        return s / nc;
    };
    const auto clamped_lum = [&](int u, int v) {
        return lum(std::clamp(u, 0, image.width - 1), std::clamp(v, 0, image.height - 1));
    };

    std::vector<double> feat;
    for (int gj = 0; gj < S; ++gj)
        for (int gi = 0; gi < S; ++gi) {
            feat.clear();
            const int u0 = gi * patch, v0 = gj * patch;
            const double n = static_cast<double>(patch) * patch;

            for (int c = 0; c < nc; ++c) {
                double sum = 0.0, sum2 = 0.0;
                for (int v = v0; v < v0 + patch; ++v)
                    for (int u = u0; u < u0 + patch; ++u) {
                        const double x = image.at(u, v, c);
                        sum += x;
                        sum2 += x * x;
                    }
                const double mean = sum / n;
                feat.push_back(mean / 255.0);
                const double var = std::max(0.0, sum2 / n - mean * mean);
                feat.push_back(std::sqrt(var) / 255.0);
            }
            // interleaved per channel above: reorder to means then stds
            if (nc > 1) {
                std::vector<double> reordered;
                for (int c = 0; c < nc; ++c) reordered.push_back(feat[2 * c]);
                for (int c = 0; c < nc; ++c) reordered.push_back(feat[2 * c + 1]);
                feat = std::move(reordered);
            }

            double grad_l1 = 0.0, grad_l2 = 0.0;
            for (int v = v0; v < v0 + patch; ++v)
                for (int u = u0; u < u0 + patch; ++u) {
                    const double du = 0.5 * (clamped_lum(u + 1, v) - clamped_lum(u - 1, v));
                    const double dv = 0.5 * (clamped_lum(u, v + 1) - clamped_lum(u, v - 1));
                    grad_l1 += 0.5 * (std::abs(du) + std::abs(dv));
                    grad_l2 += std::sqrt(du * du + dv * dv);
                }
            feat.push_back(grad_l1 / n / 255.0);
            feat.push_back(grad_l2 / n / 255.0);

            const double ucn = (gi + 0.5) * patch - model.principal_point.x;
            const double vcn = (gj + 0.5) * patch - model.principal_point.y;
            feat.push_back(std::hypot(ucn, vcn) / half_diag);
            const double az = std::atan2(vcn, ucn);
            feat.push_back(std::sin(4.0 * az));
            feat.push_back(std::cos(4.0 * az));

            double* out = grid.data.data() +
                          (static_cast<std::size_t>(gj) * S + gi) * cfg.feature_dim;
            for (int f = 0; f < cfg.feature_dim; ++f)
                out[f] = f < static_cast<int>(feat.size()) ? feat[f] : 0.0;
        }
    return grid;
}

std::vector<double> forward(const HeadParams& params, const FeatureGrid& grid) {
    if (params.cols != grid.feature_dim)
        throw ShapeError("forward: feature_dim does not match params");
    const int S = grid.grid_size;
    std::vector<double> raw(static_cast<std::size_t>(S) * S * params.num_anchors * params.rows);
    std::size_t idx = 0;
    for (int cell = 0; cell < S * S; ++cell) {
        const double* f = grid.data.data() + static_cast<std::size_t>(cell) * grid.feature_dim;
        for (int a = 0; a < params.num_anchors; ++a)
            for (int r = 0; r < params.rows; ++r) {
                double s = params.b(a, r);
                const double* w = params.weights.data() +
                                  (static_cast<std::size_t>(a) * params.rows + r) * params.cols;
                for (int c = 0; c < params.cols; ++c) s += w[c] * f[c];
                raw[idx++] = s;
            }
    }
    return raw;
}

Assignment assign_targets(const std::vector<GroundTruthObject>& gts, const HeadConfig& cfg) {
    const int S = cfg.grid_size;
    Assignment out;
    out.cell_gt.assign(static_cast<std::size_t>(S) * S, -1);
    out.cell_anchor.assign(static_cast<std::size_t>(S) * S, 0);
    const double P = cfg.cell_px();
    for (int g = 0; g < static_cast<int>(gts.size()); ++g) {
        const auto& gt = gts[g];
        const int ci = std::clamp(static_cast<int>(std::floor(gt.box.cx / P)), 0, S - 1);
        const int cj = std::clamp(static_cast<int>(std::floor(gt.box.cy / P)), 0, S - 1);
        const int cell = cj * S + ci;
        const int prev = out.cell_gt[cell];
        if (prev >= 0 && gts[prev].distance_m <= gt.distance_m) continue;
        out.cell_gt[cell] = g;
        int best_a = 0;
        double best = -1.0;
        for (int a = 0; a < static_cast<int>(cfg.anchors.size()); ++a) {
            const double s = shape_iou(gt.box.w, gt.box.h, cfg.anchors[a][0], cfg.anchors[a][1]);
            if (s > best) {
                best = s;
                best_a = a;
            }
        }
        out.cell_anchor[cell] = best_a;
    }
    return out;
}

std::vector<Detection> decode(std::span<const double> raw, const HeadConfig& cfg) {
    const int S = cfg.grid_size;
    const int A = static_cast<int>(cfg.anchors.size());
    const int R = cfg.rows();
    const double P = cfg.cell_px();
    if (raw.size() != static_cast<std::size_t>(S) * S * A * R)
        throw ShapeError("decode: raw output size mismatch");

    std::vector<Detection> kept;
    for (int cell = 0; cell < S * S; ++cell) {
        const int ci = cell % S, cj = cell / S;
        for (int a = 0; a < A; ++a) {
            const double* o = raw.data() + raw_index(cfg, cell, a, 0);
            double best_cls = -1.0;
            int cls_id = 0;
            for (int c = 0; c < cfg.num_classes; ++c) {
                const double s = sigmoid(o[kRowCls0 + c]);
                if (s > best_cls) {
                    best_cls = s;
                    cls_id = c;
                }
            }
            const double conf = sigmoid(o[kRowObj]) * best_cls;
            if (conf <= cfg.confidence_threshold) continue;
            Detection det;
            det.class_id = cls_id;
            det.box.cx = (ci + sigmoid(o[kRowTx])) * P;
            det.box.cy = (cj + sigmoid(o[kRowTy])) * P;
            det.box.w = cfg.anchors[a][0] * std::exp(std::clamp(o[kRowTw], -4.0, 4.0));
            det.box.h = cfg.anchors[a][1] * std::exp(std::clamp(o[kRowTh], -4.0, 4.0));
            det.confidence = conf;
            det.distance_m = denormalize(cfg.norm, sigmoid(o[dist_row(cfg)]));
            kept.push_back(det);
        }
    }

    std::stable_sort(kept.begin(), kept.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    std::vector<Detection> out;
    for (const auto& det : kept) {
        bool suppressed = false;
        for (const auto& k : out)
            if (k.class_id == det.class_id && iou(k.box, det.box) > cfg.nms_iou) {
                suppressed = true;
                break;
            }
        if (!suppressed) out.push_back(det);
    }
    return out;
}

TrainingSample make_training_sample(const Scene& scene, const HeadConfig& cfg,
                                    const CameraModel& model, ClampStats* stats) {
    TrainingSample s;
    s.features = extract_features(scene.image, cfg, model);
    s.targets.assignment = assign_targets(scene.objects, cfg);
    s.targets.gts = scene.objects;
    for (const auto& gt : scene.objects)
        s.targets.gt_norm_dist.push_back(normalize(cfg.norm, gt.distance_m, stats));
    if (cfg.enable_height_head)
        s.targets.height_norm = std::min(1.0, model.height_m / cfg.height_max_m);
    return s;
}

Vec2 transform_point(Vec2 p, Dihedral d, double side) {
    if (d.flip) p.x = side - p.x;
    for (int k = 0; k < ((d.rot % 4) + 4) % 4; ++k) p = {side - p.y, p.x};
    return p;
}

BBox transform_box(const BBox& box, Dihedral d, double side) {
    const Vec2 c = transform_point({box.cx, box.cy}, d, side);
    const bool swap = (((d.rot % 4) + 4) % 4) % 2 == 1;
    return {c.x, c.y, swap ? box.h : box.w, swap ? box.w : box.h};
}

GroundTruthObject transform_gt(const GroundTruthObject& gt, Dihedral d, double side) {
    return {gt.class_id, transform_box(gt.box, d, side), gt.distance_m};
}

FeatureGrid transform_features(const FeatureGrid& grid, Dihedral d) {
    const int S = grid.grid_size;
    FeatureGrid out = grid;
    const int sin_idx = 2 * grid.channels + 3;
    for (int j = 0; j < S; ++j)
        for (int i = 0; i < S; ++i) {
            // transform the cell center to find the destination cell
            const Vec2 c = transform_point({i + 0.5, j + 0.5}, d, static_cast<double>(S));
            const int ni = static_cast<int>(std::floor(c.x));
            const int nj = static_cast<int>(std::floor(c.y));
            const double* src =
                grid.data.data() + (static_cast<std::size_t>(j) * S + i) * grid.feature_dim;
            double* dst =
                out.data.data() + (static_cast<std::size_t>(nj) * S + ni) * grid.feature_dim;
            std::copy_n(src, grid.feature_dim, dst);
            if (d.flip && sin_idx < grid.feature_dim) dst[sin_idx] = -dst[sin_idx];
        }
    return out;
}

TrainingSample transform_sample(const TrainingSample& sample, Dihedral d,
                                const HeadConfig& cfg) {
    TrainingSample out;
    out.features = transform_features(sample.features, d);
    out.targets.gts.reserve(sample.targets.gts.size());
    for (const auto& gt : sample.targets.gts)
        out.targets.gts.push_back(transform_gt(gt, d, cfg.image_side_px));
    out.targets.assignment = assign_targets(out.targets.gts, cfg);
    out.targets.gt_norm_dist = sample.targets.gt_norm_dist;
    out.targets.height_norm = sample.targets.height_norm;
    return out;
}

LossAndGrad loss_and_grad(const HeadParams& params, std::span<const TrainingSample> batch,
                          const HeadConfig& cfg) {
    if (batch.empty()) throw ConfigError("loss_and_grad: empty batch");
    const int S = cfg.grid_size;
    const int A = static_cast<int>(cfg.anchors.size());
    const int R = cfg.rows();
    const int C = cfg.num_classes;
    const int F = cfg.feature_dim;
    const double P = cfg.cell_px();

    long n_pos = 0;
    long n_height = 0;
    for (const auto& s : batch) {
        for (int gt : s.targets.assignment.cell_gt)
            if (gt >= 0) ++n_pos;
        if (cfg.enable_height_head && s.targets.height_norm >= 0.0) ++n_height;
    }

    LossAndGrad out;
    out.grad = HeadParams::zeros(cfg);
    out.num_positives = n_pos;

    const double obj_scale = 1.0 / (static_cast<double>(batch.size()) * S * S * A);
    const double pos_scale = n_pos > 0 ? 1.0 / static_cast<double>(n_pos) : 0.0;
    const double cls_scale = n_pos > 0 ? 1.0 / (static_cast<double>(n_pos) * C) : 0.0;
    const double height_scale = n_height > 0 ? 1.0 / static_cast<double>(n_height) : 0.0;

    LossComponents comps;
    const LossWeights& lw = cfg.weights;

    for (const auto& sample : batch) {
        if (sample.features.grid_size != S || sample.features.feature_dim != F)
            throw ShapeError("loss_and_grad: sample feature grid mismatch");
        const std::vector<double> raw = forward(params, sample.features);

        for (int cell = 0; cell < S * S; ++cell) {
            const int ci = cell % S, cj = cell / S;
            const double* f =
                sample.features.data.data() + static_cast<std::size_t>(cell) * F;
            const int gt_idx = sample.targets.assignment.cell_gt[cell];
            const int pos_anchor =
                gt_idx >= 0 ? sample.targets.assignment.cell_anchor[cell] : -1;

            for (int a = 0; a < A; ++a) {
                const double* o = raw.data() + raw_index(cfg, cell, a, 0);
                // d(total)/d(raw row), accumulated per component below
                std::vector<double> dlogit(R, 0.0);

                const bool positive = (a == pos_anchor);
                const auto obj = bce_with_logits(o[kRowObj], positive ? 1.0 : 0.0);
                comps.obj += obj.value * obj_scale;
                dlogit[kRowObj] += lw.lambda_obj * obj.grad * obj_scale;

                if (positive) {
                    const GroundTruthObject& gt = sample.targets.gts[gt_idx];

                    for (int c = 0; c < C; ++c) {
                        const auto cls =
                            bce_with_logits(o[kRowCls0 + c], gt.class_id == c ? 1.0 : 0.0);
                        comps.cls += cls.value * cls_scale;
                        dlogit[kRowCls0 + c] += lw.lambda_cls * cls.grad * cls_scale;
                    }

                    const double sx = sigmoid(o[kRowTx]);
                    const double sy = sigmoid(o[kRowTy]);
                    const double tw = std::clamp(o[kRowTw], -4.0, 4.0);
                    const double th = std::clamp(o[kRowTh], -4.0, 4.0);
                    BBox pred{(ci + sx) * P, (cj + sy) * P, cfg.anchors[a][0] * std::exp(tw),
                              cfg.anchors[a][1] * std::exp(th)};
                    const CiouResult ci_res = ciou(pred, gt.box);
                    comps.loc += (1.0 - ci_res.value) * pos_scale;
                    const double loc_k = -lw.lambda_loc * pos_scale;
                    dlogit[kRowTx] += loc_k * ci_res.grad[0] * P * sigmoid_prime(sx);
                    dlogit[kRowTy] += loc_k * ci_res.grad[1] * P * sigmoid_prime(sy);
                    if (std::abs(o[kRowTw]) < 4.0)
                        dlogit[kRowTw] += loc_k * ci_res.grad[2] * pred.w;
                    if (std::abs(o[kRowTh]) < 4.0)
                        dlogit[kRowTh] += loc_k * ci_res.grad[3] * pred.h;

                    const int dr = dist_row(cfg);
                    const double dp = sigmoid(o[dr]);
                    const double target = sample.targets.gt_norm_dist[gt_idx];
                    const double diff = dp - target;
                    comps.dist += std::abs(diff) * pos_scale;
                    if (diff != 0.0)
                        dlogit[dr] += lw.lambda_dist * (diff > 0.0 ? 1.0 : -1.0) * pos_scale *
                                      sigmoid_prime(dp);
                }

                double* gw = out.grad.weights.data() +
                             (static_cast<std::size_t>(a) * R) * F;
                for (int r = 0; r < R; ++r) {
                    const double g = dlogit[r];
                    if (g == 0.0) continue;
                    out.grad.b(a, r) += g;
                    double* row = gw + static_cast<std::size_t>(r) * F;
                    for (int c = 0; c < F; ++c) row[c] += g * f[c];
                }
            }
        }

        if (cfg.enable_height_head && sample.targets.height_norm >= 0.0) {
            std::vector<double> fmean(F, 0.0);
            for (int cell = 0; cell < S * S; ++cell) {
                const double* f =
                    sample.features.data.data() + static_cast<std::size_t>(cell) * F;
                for (int c = 0; c < F; ++c) fmean[c] += f[c];
            }
            for (double& v : fmean) v /= S * S;
            double z = params.height_bias;
            for (int c = 0; c < F; ++c) z += params.height_weights[c] * fmean[c];
            const double hp = sigmoid(z);
            const double diff = hp - sample.targets.height_norm;
            comps.camera_height += std::abs(diff) * height_scale;
            if (diff != 0.0) {
                const double g = lw.lambda_ad * (diff > 0.0 ? 1.0 : -1.0) * height_scale *
                                 sigmoid_prime(hp);
                out.grad.height_bias += g;
                for (int c = 0; c < F; ++c) out.grad.height_weights[c] += g * fmean[c];
            }
        }
    }

    out.breakdown = total_loss(comps, lw);
    return out;
}

TrainResult train(const std::vector<Scene>& scenes, const HeadConfig& cfg,
                  const CameraModel& model) {
    validate(cfg);
    if (scenes.size() < 2) throw ConfigError("train: need at least two scenes for a split");

    TrainResult result;

    // deterministic 80/20 split
    std::vector<std::size_t> order(scenes.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(cfg.seed ^ 0x5157AB1EULL);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[split_rng.uniform_int(0, static_cast<long>(i) - 1)]);
    const std::size_t n_val = std::max<std::size_t>(1, scenes.size() / 5);
    result.val_indices.assign(order.begin(), order.begin() + n_val);
    result.train_indices.assign(order.begin() + n_val, order.end());

    std::vector<TrainingSample> train_samples;
    train_samples.reserve(result.train_indices.size());
    for (std::size_t idx : result.train_indices)
        train_samples.push_back(
            make_training_sample(scenes[idx], cfg, model, &result.norm_clamps));

    HeadParams params = HeadParams::random_init(cfg, cfg.seed ^ 0xA11CEULL);
    Rng rng(cfg.seed);
    const long eval_every = std::max<long>(1, cfg.steps / 10);

    const auto record_val = [&](long step) {
        result.history.val.push_back(
            {step, validation_distance_mae(params, scenes, result.val_indices, cfg, model)});
    };
    record_val(0);

    std::vector<TrainingSample> batch;
    for (long step = 1; step <= cfg.steps; ++step) {
        batch.clear();
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& src = train_samples[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<long>(train_samples.size()) - 1))];
            Dihedral d;
            if (cfg.input_kind == InputKind::fisheye) {
                d.rot = static_cast<int>(rng.uniform_int(0, 3));
                d.flip = rng.uniform_int(0, 1) == 1;
            } else {
                d.flip = rng.uniform_int(0, 1) == 1;  // equirect: flip only
            }
            if (d.rot == 0 && !d.flip) batch.push_back(src);
            else batch.push_back(transform_sample(src, d, cfg));
        }

        const LossAndGrad lg = loss_and_grad(params, batch, cfg);
        if (!std::isfinite(lg.breakdown.total))
            throw TrainingDiverged("train: non-finite total loss", step);
        params.axpy(-cfg.learning_rate, lg.grad);
        result.history.steps.push_back({step, lg.breakdown});
        if (step % eval_every == 0 || step == cfg.steps) record_val(step);
    }

    result.params = std::move(params);
    return result;
}

Prediction predict(const HeadParams& params, const Image& image, const HeadConfig& cfg,
                   const CameraModel& model) {
    const FeatureGrid grid = extract_features(image, cfg, model);
    const std::vector<double> raw = forward(params, grid);
    Prediction pred;
    pred.detections = decode(raw, cfg);
    if (cfg.enable_height_head && params.has_height_head) {
        const int F = cfg.feature_dim;
        std::vector<double> fmean(F, 0.0);
        const int cells = grid.grid_size * grid.grid_size;
        for (int cell = 0; cell < cells; ++cell) {
            const double* f = grid.data.data() + static_cast<std::size_t>(cell) * F;
            for (int c = 0; c < F; ++c) fmean[c] += f[c];
        }
        double z = params.height_bias;
        for (int c = 0; c < F; ++c) z += params.height_weights[c] * fmean[c] / cells;
        pred.height_m = sigmoid(z) * cfg.height_max_m;
    }
    return pred;
}

double validation_distance_mae(const HeadParams& params, const std::vector<Scene>& scenes,
                               std::span<const std::size_t> indices, const HeadConfig& cfg,
                               const CameraModel& model) {
    double sum = 0.0;
    long count = 0;
    for (std::size_t idx : indices) {
        const Scene& scene = scenes[idx];
        if (scene.objects.empty()) continue;
        const FeatureGrid grid = extract_features(scene.image, cfg, model);
        const std::vector<double> raw = forward(params, grid);
        const Assignment assign = assign_targets(scene.objects, cfg);
        const int S = cfg.grid_size;
        for (int cell = 0; cell < S * S; ++cell) {
            const int gt_idx = assign.cell_gt[cell];
            if (gt_idx < 0) continue;
            const int a = assign.cell_anchor[cell];
            const double logit = raw[raw_index(cfg, cell, a, dist_row(cfg))];
            const double d = denormalize(cfg.norm, sigmoid(logit));
            sum += std::abs(d - scene.objects[gt_idx].distance_m);
            ++count;
        }
    }
    return count > 0 ? sum / count : 0.0;
}

}  // namespace omnidist
