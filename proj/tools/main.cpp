// omnidist command-line front end: geometric distance inference, fisheye ->
// equirectangular projection, synthetic dataset generation, toy-model
// training, metric evaluation and the calibration-robustness harness.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "omnidist/camera_model.hpp"

#include "omnidist/errors.hpp"
#include "omnidist/data_io.hpp"
#include "omnidist/evaluation.hpp"
#include "omnidist/image.hpp"
#include "omnidist/projection.hpp"
#include "omnidist/rng.hpp"
#include "omnidist/toy_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace omnidist;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Tracks created files so a failing command never leaves partial outputs.
class RunOutputs {
public:
    explicit RunOutputs(fs::path outdir) : outdir_(std::move(outdir)) {
        fs::create_directories(outdir_);
    }

    void write(const std::string& name, const std::string& content) {
        const fs::path p = outdir_ / name;
        fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary);
        if (!out) throw FormatError("cannot write " + p.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        created_.push_back(p);
    }

    void note_input(const std::string& name, const std::string& content) {
        char buf[20];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(fnv1a(content.data(), content.size())));
        input_hashes_[name] = buf;
    }

    void finish(const std::string& command, const json& config, std::uint64_t seed) {
        json outputs = json::array();
        for (const auto& p : created_) outputs.push_back(fs::relative(p, outdir_).string());
        const json manifest{{"command", command}, {"config", config},  {"seed", seed},
                            {"version", kVersion}, {"inputs", input_hashes_},
                            {"outputs", outputs}};
        write("manifest.json", manifest.dump(2) + "\n");
        done_ = true;
    }

    ~RunOutputs() {
        if (done_) return;
        std::error_code ec;
        for (const auto& p : created_) fs::remove(p, ec);
    }

private:
    fs::path outdir_;
    std::vector<fs::path> created_;
    json input_hashes_ = json::object();
    bool done_ = false;
};

std::vector<double> parse_number_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(std::stod(tok));
    }
    return out;
}

// Distance of a detection's ground-contact point (bottom-center of the box).
Detection geodist_one(const CameraModel& camera, Detection det) {
    const Vec2 contact{det.box.cx, det.box.cy + 0.5 * det.box.h};
    try {
        det.distance_m = ground_distance(camera, contact);
        det.has_distance = true;
    } catch (const OutOfCalibrationRange&) {
        det.has_distance = false;
    } catch (const NoGroundIntersection&) {
        det.has_distance = false;
    }
    return det;
}

int cmd_geodist(const std::string& camera_path, const std::string& dets_path,
                const std::string& outdir) {
    const std::string camera_text = slurp(camera_path);
    const std::string dets_text = slurp(dets_path);
    const CameraModel camera = load_camera(camera_text);
    DetectionsDoc doc = read_detections(dets_text);

    long flagged = 0, total = 0;
    for (auto& image : doc.images)
        for (auto& det : image.objects) {
            det = geodist_one(camera, det);
            ++total;
            if (!det.has_distance) ++flagged;
        }

    RunOutputs run(outdir);
    run.note_input(camera_path, camera_text);
    run.note_input(dets_path, dets_text);
    run.write("detections_geo.json", write_detections(doc));
    run.finish("geodist", {{"camera", camera_path}, {"detections", dets_path}}, 0);
    std::cout << "geodist: " << total << " detections, " << flagged << " flagged uncalibrated\n";
    return 0;
}

int cmd_project(const std::string& camera_path, const std::string& image_path,
                const std::string& bboxes_path, const std::string& image_name, int width,
                int height, double theta_max, const std::string& outdir) {
    const std::string camera_text = slurp(camera_path);
    const CameraModel camera = load_camera(camera_text);
    const EquirectSpec spec{width, height, theta_max};
    validate(spec);

    RunOutputs run(outdir);
    run.note_input(camera_path, camera_text);
    json config{{"camera", camera_path}, {"width", width}, {"height", height},
                {"theta_max_rad", theta_max}};

    if (!image_path.empty()) {
        const std::string raw = slurp(image_path);
        run.note_input(image_path, raw);
        const Image out = fisheye_to_equirect(decode_pnm(raw), camera, spec);
        run.write(out.channels == 1 ? "projected.pgm" : "projected.ppm", encode_pnm(out));
        config["image"] = image_path;
    }
    if (!bboxes_path.empty()) {
        const std::string text = slurp(bboxes_path);
        run.note_input(bboxes_path, text);
        const AnnotationsDoc doc = read_annotations(text);
        json images = json::array();
        for (const auto& ann : doc.images) {
            if (!image_name.empty() && ann.image != image_name) continue;
            json objects = json::array();
            for (const auto& gt : ann.objects) {
                const EquirectBox eq = bbox_to_equirect(camera, spec, gt.box);
                objects.push_back({{"class_id", gt.class_id},
                                   {"bbox", {eq.box.cx, eq.box.cy, eq.box.w, eq.box.h}},
                                   {"distance_m", gt.distance_m},
                                   {"wraps", eq.wraps}});
            }
            images.push_back({{"image", ann.image}, {"camera", ann.camera}, {"objects", objects}});
        }
        run.write("bboxes_equirect.json", json{{"images", images}}.dump(2) + "\n");
        config["bboxes"] = bboxes_path;
    }
    run.finish("project", config, 0);
    return 0;
}

int cmd_synth(const std::string& camera_path, const std::string& scene_config_path,
              const std::string& outdir, std::uint64_t seed, int n_images) {
    SceneConfig cfg;
    json config_echo;
    if (!scene_config_path.empty()) {
        const std::string text = slurp(scene_config_path);
        cfg = scene_config_from_json_text(text);
    }
    const CameraModel camera = camera_path.empty()
                                   ? make_synthetic_camera(cfg.image_side_px)
                                   : load_camera(slurp(camera_path));
    validate(cfg, camera);
    generate_dataset(seed, camera, cfg, n_images, outdir);
    std::cout << "synth: wrote " << n_images << " scenes to " << outdir << "\n";
    return 0;
}

int cmd_train(std::string data_dir, const std::string& config_path, const std::string& outdir,
              std::uint64_t seed, long steps_override) {
    HeadConfig cfg;
    if (!config_path.empty()) {
        const std::string text = slurp(config_path);
        cfg = head_config_from_json_text(text);
        if (data_dir.empty()) data_dir = json::parse(text).value("data", std::string{});
    }
    if (data_dir.empty()) throw ConfigError("train: no dataset given (--data or config 'data')");
    if (seed != static_cast<std::uint64_t>(-1)) cfg.seed = seed;
    if (steps_override >= 0) cfg.steps = steps_override;

    const Dataset ds = load_dataset(data_dir);
    if (!ds.scenes.empty()) cfg.image_side_px = ds.scenes.front().image.width;
    validate(cfg);

    const TrainResult result = train(ds.scenes, cfg, ds.camera);

    RunOutputs run(outdir);
    run.note_input(data_dir + "/annotations.json", slurp(fs::path(data_dir) / "annotations.json"));
    run.write("params.txt", write_params(result.params));
    run.write("train_config.json", head_config_to_json_text(cfg));

    std::string hist = "step,obj,cls,loc,dist,camera_height,total\n";
    char line[256];
    for (const auto& s : result.history.steps) {
        std::snprintf(line, sizeof(line), "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", s.step,
                      s.loss.obj, s.loss.cls, s.loss.loc, s.loss.dist, s.loss.camera_height,
                      s.loss.total);
        hist += line;
    }
    run.write("train_history.csv", hist);

    std::string val = "step,distance_mae_m\n";
    for (const auto& v : result.history.val) {
        std::snprintf(line, sizeof(line), "%ld,%.9g\n", v.step, v.distance_mae_m);
        val += line;
    }
    run.write("val_history.csv", val);
    run.finish("train", json::parse(head_config_to_json_text(cfg)), cfg.seed);

    std::cout << "train: " << cfg.steps << " steps, " << result.history.steps.size()
              << " recorded, final val MAE "
              << (result.history.val.empty() ? 0.0 : result.history.val.back().distance_mae_m)
              << " m, normalization clamps " << result.norm_clamps.total() << "\n";
    return 0;
}

int cmd_eval(const std::string& dets_path, const std::string& gts_path, const std::string& outdir,
             double iou_gate, const std::string& bin_edges_csv, const std::string& label) {
    const std::string dets_text = slurp(dets_path);
    const std::string gts_text = slurp(gts_path);
    EvalConfig cfg;
    cfg.distance_iou_gate = iou_gate;
    cfg.bin_edges = parse_number_list(bin_edges_csv);

    const EvalReport report =
        evaluate(read_detections(dets_text), read_annotations(gts_text), cfg);

    RunOutputs run(outdir);
    run.note_input(dets_path, dets_text);
    run.note_input(gts_path, gts_text);
    run.write("report.json", report_to_json_text(report));
    run.write("report.csv", report_to_csv(report, label));
    run.finish("eval",
               {{"detections", dets_path}, {"annotations", gts_path},
                {"iou_gate", iou_gate}, {"bin_edges", cfg.bin_edges}, {"label", label}},
               0);
    std::cout << "eval: precision " << report.precision << ", recall " << report.recall << "\n";
    return 0;
}

struct TrendPoint {
    double magnitude = 0.0;
    double abs_err = 0.0;
    double far_abs_err = 0.0;
    double model_abs_err = -1.0;  // < 0: no trained model evaluated
};

// Error sweep under a camera perturbation: the geometric estimator reads
// ground-truth boxes through the perturbed calibration; the optional trained
// head re-runs inference with the perturbed camera's features and is scored
// on detections matched at IoU 0.5.
template <typename Perturb>
std::vector<TrendPoint> sweep(const Dataset& ds, const std::vector<double>& magnitudes,
                              double far_lo, const HeadParams* params, const HeadConfig* cfg,
                              Perturb perturb) {
    std::vector<TrendPoint> out;
    for (const double mag : magnitudes) {
        const CameraModel cam = perturb(ds.camera, mag);
        TrendPoint point;
        point.magnitude = mag;
        double sum = 0.0, far_sum = 0.0;
        long n = 0, far_n = 0;
        double model_sum = 0.0;
        long model_n = 0;
        for (const auto& scene : ds.scenes) {
            for (const auto& gt : scene.objects) {
                Detection det{gt.class_id, gt.box, 1.0, 0.0, true};
                det = geodist_one(cam, det);
                if (!det.has_distance) continue;
                const double err = std::abs(det.distance_m - gt.distance_m);
                sum += err;
                ++n;
                if (gt.distance_m >= far_lo) {
                    far_sum += err;
                    ++far_n;
                }
            }
            if (params) {
                const Prediction pred = predict(*params, scene.image, *cfg, cam);
                const MatchResult m = match_detections(pred.detections, scene.objects, 0.5);
                for (const auto& pair : m.pairs) {
                    model_sum += std::abs(pred.detections[pair.det_index].distance_m -
                                          scene.objects[pair.gt_index].distance_m);
                    ++model_n;
                }
            }
        }
        point.abs_err = n > 0 ? sum / n : 0.0;
        point.far_abs_err = far_n > 0 ? far_sum / far_n : 0.0;
        if (params && model_n > 0) point.model_abs_err = model_sum / model_n;
        out.push_back(point);
    }
    return out;
}

std::string trend_svg(const std::vector<TrendPoint>& shifts, const std::string& x_label) {
    constexpr int W = 640, H = 400, ML = 70, MR = 20, MT = 30, MB = 50;
    double xmax = 1e-9, ymax = 1e-9;
    for (const auto& p : shifts) {
        xmax = std::max(xmax, p.magnitude);
        ymax = std::max(ymax, std::max(p.abs_err, p.far_abs_err));
    }
    const auto X = [&](double x) { return ML + (W - ML - MR) * x / xmax; };
    const auto Y = [&](double y) { return H - MB - (H - MT - MB) * y / ymax; };

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n"
        << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
        << "' stroke='black'/>\n"
        << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
        << "' stroke='black'/>\n";
    const auto polyline = [&](const char* color, bool far) {
        svg << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
        for (const auto& p : shifts)
            svg << X(p.magnitude) << "," << Y(far ? p.far_abs_err : p.abs_err) << " ";
        svg << "'/>\n";
    };
    polyline("#1666b0", false);
    polyline("#c03020", true);
    char buf[160];
    for (const auto& p : shifts) {
        std::snprintf(buf, sizeof(buf),
                      "<text x='%.1f' y='%d' font-size='12' text-anchor='middle'>%g</text>\n",
                      X(p.magnitude), H - MB + 18, p.magnitude);
        svg << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<text x='%d' y='%d' font-size='13'>%s</text>\n", W / 2 - 40, H - 12,
                  x_label.c_str());
    svg << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x='14' y='%d' font-size='13' transform='rotate(-90 14 %d)'>absolute "
                  "error (m)</text>\n",
                  H / 2, H / 2);
    svg << buf;
    svg << "<text x='" << W - 220 << "' y='" << MT
        << "' font-size='12' fill='#1666b0'>overall</text>\n"
        << "<text x='" << W - 120 << "' y='" << MT
        << "' font-size='12' fill='#c03020'>far bin</text>\n</svg>\n";
    return svg.str();
}

int cmd_robustness(const std::string& data_dir, const std::string& outdir,
                   const std::string& shifts_csv, const std::string& pose_csv, double far_lo,
                   const std::string& params_path, const std::string& train_config_path) {
    const Dataset ds = load_dataset(data_dir);
    HeadParams params;
    HeadConfig head_cfg;
    const bool with_model = !params_path.empty();
    if (with_model) {
        params = read_params(slurp(params_path));
        if (!train_config_path.empty())
            head_cfg = head_config_from_json_text(slurp(train_config_path));
        if (!ds.scenes.empty()) head_cfg.image_side_px = ds.scenes.front().image.width;
    }
    if (far_lo < 0.0) {
        // default far bin: top fifth of the ground-truth distance range
        double lo = 0.0, hi = 0.0;
        bool first = true;
        for (const auto& scene : ds.scenes)
            for (const auto& gt : scene.objects) {
                lo = first ? gt.distance_m : std::min(lo, gt.distance_m);
                hi = first ? gt.distance_m : std::max(hi, gt.distance_m);
                first = false;
            }
        far_lo = lo + 0.8 * (hi - lo);
    }
    std::vector<double> shifts = parse_number_list(shifts_csv);
    if (shifts.empty() || shifts.front() != 0.0) shifts.insert(shifts.begin(), 0.0);
    const std::vector<double> poses = parse_number_list(pose_csv);

    const HeadParams* pp = with_model ? &params : nullptr;
    const HeadConfig* pc = with_model ? &head_cfg : nullptr;
    const auto shift_points =
        sweep(ds, shifts, far_lo, pp, pc, [](const CameraModel& c, double m) {
            return shift_principal_point(c, m, 0.0);
        });
    std::vector<TrendPoint> pose_points;
    if (!poses.empty()) {
        std::vector<double> with_zero = poses;
        if (with_zero.front() != 0.0) with_zero.insert(with_zero.begin(), 0.0);
        pose_points = sweep(ds, with_zero, far_lo, pp, pc, [](const CameraModel& c, double m) {
            return perturb_pose(c, m, 0.0);
        });
    }

    RunOutputs run(outdir);
    std::string csv =
        "kind,magnitude,abs_err_m,far_abs_err_m,delta_m,far_delta_m,model_abs_err_m,"
        "model_delta_m\n";
    char line[240];
    const auto emit = [&](const char* kind, const std::vector<TrendPoint>& pts) {
        if (pts.empty()) return;
        for (const auto& p : pts) {
            std::snprintf(line, sizeof(line), "%s,%.9g,%.9g,%.9g,%.9g,%.9g", kind, p.magnitude,
                          p.abs_err, p.far_abs_err, p.abs_err - pts.front().abs_err,
                          p.far_abs_err - pts.front().far_abs_err);
            csv += line;
            if (p.model_abs_err >= 0.0) {
                std::snprintf(line, sizeof(line), ",%.9g,%.9g\n", p.model_abs_err,
                              p.model_abs_err - pts.front().model_abs_err);
                csv += line;
            } else {
                csv += ",,\n";
            }
        }
    };
    emit("principal_point_shift_px", shift_points);
    emit("pitch_rad", pose_points);
    run.write("robustness.csv", csv);
    run.write("robustness_shift.svg", trend_svg(shift_points, "principal point shift (px)"));
    if (!pose_points.empty())
        run.write("robustness_pitch.svg", trend_svg(pose_points, "pitch delta (rad)"));
    run.finish("robustness",
               {{"data", data_dir}, {"shifts_px", shifts}, {"pose_deltas_rad", poses},
                {"far_bin_lo_m", far_lo}, {"params", params_path}},
               0);

    for (const auto& p : shift_points)
        std::cout << "shift " << p.magnitude << " px: abs err " << p.abs_err << " m (far "
                  << p.far_abs_err << " m)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"omnidist: fisheye ground-distance estimation toolkit"};
    app.require_subcommand(1);

    std::string camera_path, dets_path, gts_path, image_path, bboxes_path, image_name;
    std::string data_dir, config_path, outdir = "out", bin_edges = "", label = "omnidist";
    std::string shifts = "0,1,5", pose_deltas = "";
    std::uint64_t seed = 7;
    long steps_override = -1;
    int n_images = 512, width = 256, height = 128;
    double theta_max = 1.5, iou_gate = 0.5, far_lo = -1.0;

    auto* geodist = app.add_subcommand("geodist", "geometric distances for detections");
    geodist->add_option("--camera", camera_path)->required();
    geodist->add_option("--dets", dets_path)->required();
    geodist->add_option("--out", outdir);

    auto* project = app.add_subcommand("project", "fisheye -> equirectangular remap");
    project->add_option("--camera", camera_path)->required();
    project->add_option("--in", image_path);
    project->add_option("--bboxes", bboxes_path);
    project->add_option("--image-name", image_name);
    project->add_option("--width", width);
    project->add_option("--height", height);
    project->add_option("--theta-max", theta_max);
    project->add_option("--out", outdir);

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--camera", camera_path);
    synth->add_option("--config,--scene-config", config_path);
    synth->add_option("--out", outdir);
    synth->add_option("--seed", seed);
    synth->add_option("--n", n_images);

    auto* train = app.add_subcommand("train", "train the toy detection+distance head");
    train->add_option("--data", data_dir);
    train->add_option("--config", config_path);
    train->add_option("--out", outdir);
    std::uint64_t train_seed = static_cast<std::uint64_t>(-1);
    train->add_option("--seed", train_seed);
    train->add_option("--steps", steps_override);

    auto* eval = app.add_subcommand("eval", "evaluate detections against annotations");
    eval->add_option("--dets", dets_path)->required();
    eval->add_option("--gts", gts_path)->required();
    eval->add_option("--out", outdir);
    eval->add_option("--iou-gate", iou_gate);
    eval->add_option("--bin-edges", bin_edges);
    eval->add_option("--label", label);

    auto* robust = app.add_subcommand("robustness", "perturbation sweep for the geometric estimator");
    robust->add_option("--data", data_dir)->required();
    robust->add_option("--out", outdir);
    robust->add_option("--shifts", shifts);
    robust->add_option("--pose-deltas", pose_deltas);
    robust->add_option("--far-bin-lo", far_lo);
    std::string robust_params, robust_train_config;
    robust->add_option("--params", robust_params);
    robust->add_option("--train-config", robust_train_config);

    CLI11_PARSE(app, argc, argv);

    try {
        if (geodist->parsed()) return cmd_geodist(camera_path, dets_path, outdir);
        if (project->parsed())
            return cmd_project(camera_path, image_path, bboxes_path, image_name, width, height,
                               theta_max, outdir);
        if (synth->parsed()) return cmd_synth(camera_path, config_path, outdir, seed, n_images);
        if (train->parsed())
            return cmd_train(data_dir, config_path, outdir, train_seed, steps_override);
        if (eval->parsed())
            return cmd_eval(dets_path, gts_path, outdir, iou_gate, bin_edges, label);
        if (robust->parsed())
            return cmd_robustness(data_dir, outdir, shifts, pose_deltas, far_lo, robust_params,
                                  robust_train_config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
