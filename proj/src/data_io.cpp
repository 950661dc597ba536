#include "omnidist/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "omnidist/errors.hpp"
#include "omnidist/rng.hpp"

namespace omnidist {

namespace {

using nlohmann::json;

json box_to_json(const BBox& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

BBox box_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw FormatError("bbox must be [cx, cy, w, h]");
    BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!b.valid()) throw ValidationError("bbox extents must be positive");
    return b;
}

json parse_doc(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("document parse: ") + e.what());
    }
}

// Per-pixel integer hash; keeps generated rasters bit-identical across
// platforms (no libm in the texture path).
std::uint32_t pixel_hash(std::uint64_t seed, std::uint64_t u, std::uint64_t v) {
    Rng r(seed ^ (u * 0x9E3779B97F4A7C15ULL) ^ (v * 0xC2B2AE3D27D4EB4FULL));
    return static_cast<std::uint32_t>(r.next_u64());
}

struct HullPoint {
    double x, y;
};

double cross(const HullPoint& o, const HullPoint& a, const HullPoint& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew monotone chain; returns the hull in counter-clockwise order.
std::vector<HullPoint> convex_hull(std::vector<HullPoint> pts) {
    std::sort(pts.begin(), pts.end(), [](const HullPoint& a, const HullPoint& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const HullPoint& a, const HullPoint& b) {
                              return a.x == b.x && a.y == b.y;
                          }),
              pts.end());
    if (pts.size() < 3) return pts;
    std::vector<HullPoint> hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = pts.size() - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

// Even-odd scanline fill of a convex polygon. The fill is shaded radially,
// brightest at the silhouette centroid and dimming toward the rim, so the
// silhouette center stays identifiable at patch granularity.
void fill_polygon(Image& img, const std::vector<HullPoint>& poly, std::uint8_t peak_value) {
    if (poly.size() < 3) return;
    double ymin = poly[0].y, ymax = poly[0].y, cx = 0.0, cy = 0.0, rmax = 1.0;
    for (const auto& p : poly) {
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
        cx += p.x;
        cy += p.y;
    }
    cx /= static_cast<double>(poly.size());
    cy /= static_cast<double>(poly.size());
    for (const auto& p : poly) rmax = std::max(rmax, std::hypot(p.x - cx, p.y - cy));

    const int v0 = std::max(0, static_cast<int>(std::ceil(ymin)));
    const int v1 = std::min(img.height - 1, static_cast<int>(std::floor(ymax)));
    for (int v = v0; v <= v1; ++v) {
        const double y = v;
        std::vector<double> xs;
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const HullPoint& p = poly[i];
            const HullPoint& q = poly[(i + 1) % poly.size()];
            if ((p.y <= y && y < q.y) || (q.y <= y && y < p.y))
                xs.push_back(p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y));
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
            const int a = std::max(0, static_cast<int>(std::ceil(xs[i])));
            const int b = std::min(img.width - 1, static_cast<int>(std::floor(xs[i + 1])));
            for (int u = a; u <= b; ++u) {
                const double rim = std::min(1.0, std::hypot(u - cx, v - cy) / rmax);
                img.at(u, v) = static_cast<std::uint8_t>(peak_value - std::lround(72.0 * rim));
            }
        }
    }
}

}  // namespace

AnnotationsDoc read_annotations(const std::string& text) {
    const json j = parse_doc(text);
    if (!j.is_object() || !j.contains("images") || !j["images"].is_array())
        throw FormatError("annotations: top-level 'images' array required");
    AnnotationsDoc doc;
    for (const auto& rec : j["images"]) {
        if (!rec.contains("image") || !rec.contains("objects"))
            throw FormatError("annotations: record needs 'image' and 'objects'");
        ImageAnnotations ann;
        ann.image = rec["image"].get<std::string>();
        ann.camera = rec.value("camera", std::string{});
        for (const auto& o : rec["objects"]) {
            GroundTruthObject gt;
            gt.class_id = o.at("class_id").get<int>();
            gt.box = box_from_json(o.at("bbox"));
            gt.distance_m = o.at("distance_m").get<double>();
            if (gt.distance_m < 0.0)
                throw ValidationError("annotations: negative distance for image " + ann.image);
            ann.objects.push_back(gt);
        }
        doc.images.push_back(std::move(ann));
    }
    return doc;
}

std::string write_annotations(const AnnotationsDoc& doc) {
    json images = json::array();
    for (const auto& ann : doc.images) {
        json objects = json::array();
        for (const auto& gt : ann.objects)
            objects.push_back({{"class_id", gt.class_id},
                               {"bbox", box_to_json(gt.box)},
                               {"distance_m", gt.distance_m}});
        images.push_back({{"image", ann.image}, {"camera", ann.camera}, {"objects", objects}});
    }
    return json{{"images", images}}.dump(2) + "\n";
}

DetectionsDoc read_detections(const std::string& text) {
    const json j = parse_doc(text);
    if (!j.is_object() || !j.contains("images") || !j["images"].is_array())
        throw FormatError("detections: top-level 'images' array required");
    DetectionsDoc doc;
    for (const auto& rec : j["images"]) {
        if (!rec.contains("image") || !rec.contains("objects"))
            throw FormatError("detections: record needs 'image' and 'objects'");
        ImageDetections dets;
        dets.image = rec["image"].get<std::string>();
        for (const auto& o : rec["objects"]) {
            Detection d;
            d.class_id = o.at("class_id").get<int>();
            d.box = box_from_json(o.at("bbox"));
            d.confidence = o.at("confidence").get<double>();
            if (d.confidence < 0.0 || d.confidence > 1.0)
                throw ValidationError("detections: confidence outside [0, 1] for image " + dets.image);
            if (o.contains("distance_m")) {
                d.distance_m = o["distance_m"].get<double>();
                if (d.distance_m < 0.0)
                    throw ValidationError("detections: negative distance for image " + dets.image);
            } else {
                d.has_distance = false;
            }
            dets.objects.push_back(d);
        }
        doc.images.push_back(std::move(dets));
    }
    return doc;
}

std::string write_detections(const DetectionsDoc& doc) {
    json images = json::array();
    for (const auto& dets : doc.images) {
        json objects = json::array();
        for (const auto& d : dets.objects) {
            json o{{"class_id", d.class_id},
                   {"bbox", box_to_json(d.box)},
                   {"confidence", d.confidence}};
            if (d.has_distance) o["distance_m"] = d.distance_m;
            else o["geo_flagged"] = true;
            objects.push_back(std::move(o));
        }
        images.push_back({{"image", dets.image}, {"objects", objects}});
    }
    return json{{"images", images}}.dump(2) + "\n";
}

void validate(const SceneConfig& cfg, const CameraModel& model) {
    if (cfg.image_side_px < 16) throw ConfigError("scene: image side too small");
    if (cfg.min_objects < 0 || cfg.max_objects < cfg.min_objects)
        throw ConfigError("scene: bad object count range");
    if (cfg.radius_min_m <= 0.0 || cfg.radius_max_m < cfg.radius_min_m)
        throw ConfigError("scene: bad radius range");
    if (cfg.height_min_m <= 0.0 || cfg.height_max_m < cfg.height_min_m)
        throw ConfigError("scene: bad height range");
    if (cfg.height_max_m >= model.height_m)
        throw ConfigError("scene: object height must stay below the camera height");
    if (cfg.distance_min_m < 0.0 || cfg.distance_max_m < cfg.distance_min_m)
        throw ConfigError("scene: bad distance range");
    if (cfg.azimuth_max_rad < cfg.azimuth_min_rad) throw ConfigError("scene: bad azimuth range");
    if (cfg.noise_level < 0 || cfg.noise_level > 60) throw ConfigError("scene: bad noise level");
    // The widest silhouette point is the top rim of the farthest, tallest,
    // fattest cylinder; it must stay within the calibration table.
    const double k = model.height_m / (model.height_m - cfg.height_max_m);
    const double reach = k * (cfg.distance_max_m + cfg.radius_max_m);
    const double theta_needed = std::atan2(reach, model.height_m);
    if (theta_needed > model.max_theta())
        throw ConfigError("scene: distance range exceeds calibration coverage");
}

SceneConfig scene_config_from_json_text(const std::string& text) {
    const json j = parse_doc(text);
    SceneConfig cfg;
    try {
        cfg.image_side_px = j.value("image_side_px", cfg.image_side_px);
        if (j.contains("object_count")) {
            cfg.min_objects = j["object_count"][0].get<int>();
            cfg.max_objects = j["object_count"][1].get<int>();
        }
        const auto range = [&](const char* key, double& lo, double& hi) {
            if (j.contains(key)) {
                lo = j[key][0].get<double>();
                hi = j[key][1].get<double>();
            }
        };
        range("object_radius_m", cfg.radius_min_m, cfg.radius_max_m);
        range("object_height_m", cfg.height_min_m, cfg.height_max_m);
        range("distance_m", cfg.distance_min_m, cfg.distance_max_m);
        range("azimuth_rad", cfg.azimuth_min_rad, cfg.azimuth_max_rad);
        cfg.texture_seed = j.value("texture_seed", cfg.texture_seed);
        cfg.noise_level = j.value("noise_level", cfg.noise_level);
    } catch (const json::exception& e) {
        throw FormatError(std::string("scene config: ") + e.what());
    }
    return cfg;
}

std::string scene_config_to_json_text(const SceneConfig& cfg) {
    json j{{"image_side_px", cfg.image_side_px},
           {"object_count", {cfg.min_objects, cfg.max_objects}},
           {"object_radius_m", {cfg.radius_min_m, cfg.radius_max_m}},
           {"object_height_m", {cfg.height_min_m, cfg.height_max_m}},
           {"distance_m", {cfg.distance_min_m, cfg.distance_max_m}},
           {"azimuth_rad", {cfg.azimuth_min_rad, cfg.azimuth_max_rad}},
           {"texture_seed", cfg.texture_seed},
           {"noise_level", cfg.noise_level}};
    return j.dump(2) + "\n";
}

Scene generate_scene(std::uint64_t seed, const CameraModel& model, const SceneConfig& cfg) {
    validate(cfg, model);
    Rng rng(seed);
    Scene scene;
    scene.image = Image(cfg.image_side_px, cfg.image_side_px, 1);

    // Low-contrast blocky texture plus per-pixel noise, all integer math.
    for (int v = 0; v < cfg.image_side_px; ++v)
        for (int u = 0; u < cfg.image_side_px; ++u) {
            int val = 36 + static_cast<int>(pixel_hash(cfg.texture_seed, u / 8, v / 8) % 24u);
            if (cfg.noise_level > 0)
                val += static_cast<int>(pixel_hash(cfg.texture_seed ^ 0x5BD1E995ULL, u, v) %
                                        (2u * cfg.noise_level + 1u)) -
                       cfg.noise_level;
            scene.image.at(u, v) = static_cast<std::uint8_t>(std::clamp(val, 0, 255));
        }

    const long count = rng.uniform_int(cfg.min_objects, cfg.max_objects);
    constexpr int kCircleSamples = 32;
    for (long obj = 0; obj < count; ++obj) {
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            const double d = rng.uniform(cfg.distance_min_m, cfg.distance_max_m);
            const double az = rng.uniform(cfg.azimuth_min_rad, cfg.azimuth_max_rad);
            const double rho = rng.uniform(cfg.radius_min_m, cfg.radius_max_m);
            const double h = rng.uniform(cfg.height_min_m, cfg.height_max_m);
            const double cx = d * std::cos(az);
            const double cy = d * std::sin(az);
            const double top_scale = model.height_m / (model.height_m - h);

            std::vector<HullPoint> px;
            px.reserve(2 * kCircleSamples);
            bool visible = true;
            for (int s = 0; s < 2 * kCircleSamples && visible; ++s) {
                const double psi = 2.0 * std::numbers::pi * (s % kCircleSamples) / kCircleSamples;
                const bool top = s >= kCircleSamples;
                GroundPoint g{cx + rho * std::cos(psi), cy + rho * std::sin(psi)};
                if (top) g = {g.x_m * top_scale, g.y_m * top_scale};
                try {
                    const Vec2 p = ground_point_to_pixel(model, g);
                    px.push_back({p.x, p.y});
                } catch (const OutOfCalibrationRange&) {
                    visible = false;
                }
            }
            if (!visible) continue;

            double lo_u = px[0].x, hi_u = px[0].x, lo_v = px[0].y, hi_v = px[0].y;
            for (const auto& p : px) {
                lo_u = std::min(lo_u, p.x);
                hi_u = std::max(hi_u, p.x);
                lo_v = std::min(lo_v, p.y);
                hi_v = std::max(hi_v, p.y);
            }
            if (lo_u < 1.0 || lo_v < 1.0 || hi_u > cfg.image_side_px - 2.0 ||
                hi_v > cfg.image_side_px - 2.0)
                continue;
            BBox box{0.5 * (lo_u + hi_u), 0.5 * (lo_v + hi_v), hi_u - lo_u, hi_v - lo_v};
            if (box.w < 2.0 || box.h < 2.0) continue;

            bool overlaps = false;
            for (const auto& other : scene.objects)
                if (iou(box, other.box) > 0.05) overlaps = true;
            if (overlaps) continue;

            const auto peak = static_cast<std::uint8_t>(222 + pixel_hash(seed, obj, 0) % 14u);
            fill_polygon(scene.image, convex_hull(px), peak);
            scene.objects.push_back({0, box, d});
            placed = true;
        }
        if (!placed)
            throw GenerationError("generate_scene: could not place object after 100 samples");
    }
    return scene;
}

void generate_dataset(std::uint64_t seed, const CameraModel& model, const SceneConfig& cfg,
                      int n_images, const std::filesystem::path& outdir) {
    namespace fs = std::filesystem;
    fs::create_directories(outdir / "images");

    AnnotationsDoc doc;
    json image_list = json::array();
    for (int i = 0; i < n_images; ++i) {
        const Scene scene = generate_scene(Rng::derive_seed(seed, i), model, cfg);
        char name[32];
        std::snprintf(name, sizeof(name), "images/img_%05d.pgm", i);
        write_pnm(outdir / name, scene.image);
        doc.images.push_back({name, "camera.json", scene.objects});
        image_list.push_back(name);
    }

    std::ofstream(outdir / "camera.json") << write_camera(model);
    std::ofstream(outdir / "annotations.json") << write_annotations(doc);
    const json manifest{{"schema", "omnidist-dataset"},
                        {"version", 1},
                        {"seed", seed},
                        {"n_images", n_images},
                        {"camera", "camera.json"},
                        {"annotations", "annotations.json"},
                        {"scene_config", nlohmann::json::parse(scene_config_to_json_text(cfg))},
                        {"images", image_list}};
    std::ofstream(outdir / "manifest.json") << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw FormatError("load_dataset: cannot open " + p.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    Dataset ds;
    ds.camera = load_camera(slurp(dir / "camera.json"));
    ds.annotations = read_annotations(slurp(dir / "annotations.json"));
    ds.scenes.reserve(ds.annotations.images.size());
    for (const auto& ann : ds.annotations.images)
        ds.scenes.push_back({read_pnm(dir / ann.image), ann.objects});
    return ds;
}

}  // namespace omnidist
