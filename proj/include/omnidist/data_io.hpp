#pragma once

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "omnidist/camera_model.hpp"
#include "omnidist/geometry.hpp"
#include "omnidist/image.hpp"

namespace omnidist {

struct GroundTruthObject {
    int class_id = 0;
    BBox box;
    double distance_m = 0.0;  // horizontal ground range of the object center
};

struct Detection {
    int class_id = 0;
    BBox box;
    double confidence = 0.0;
    double distance_m = 0.0;
    bool has_distance = true;  // geodist flags records it cannot calibrate
};

// Canonical annotation layout: one record per image, holding an image
// reference, a camera reference and the object array. Adapters for external
// dataset layouts convert into this one format.
struct ImageAnnotations {
    std::string image;
    std::string camera;
    std::vector<GroundTruthObject> objects;
};
struct AnnotationsDoc {
    std::vector<ImageAnnotations> images;
};

struct ImageDetections {
    std::string image;
    std::vector<Detection> objects;
};
struct DetectionsDoc {
    std::vector<ImageDetections> images;
};

// Document codecs. FormatError on malformed documents (message carries the
// parse position), ValidationError on invariant violations (negative
// distance, confidence outside [0, 1], non-positive box extents).
AnnotationsDoc read_annotations(const std::string& text);
std::string write_annotations(const AnnotationsDoc& doc);
DetectionsDoc read_detections(const std::string& text);
std::string write_detections(const DetectionsDoc& doc);

// Synthetic scene generation: upright cylinders standing on the ground
// plane, rendered as filled high-contrast silhouettes over a low-contrast
// textured background. Ground truth distance is the horizontal ground range
// of the cylinder axis.
struct SceneConfig {
    int image_side_px = 128;
    int min_objects = 1;
    int max_objects = 3;
    double radius_min_m = 0.35;
    double radius_max_m = 0.5;
    double height_min_m = 1.2;
    double height_max_m = 1.8;
    double distance_min_m = 0.8;
    double distance_max_m = 2.8;
    double azimuth_min_rad = -std::numbers::pi;
    double azimuth_max_rad = std::numbers::pi;
    std::uint64_t texture_seed = 1;
    int noise_level = 6;
};

void validate(const SceneConfig& cfg, const CameraModel& model);
SceneConfig scene_config_from_json_text(const std::string& text);
std::string scene_config_to_json_text(const SceneConfig& cfg);

struct Scene {
    Image image;
    std::vector<GroundTruthObject> objects;
};

// Deterministic in `seed`. Throws GenerationError when an object cannot be
// placed within 100 rejection samples.
Scene generate_scene(std::uint64_t seed, const CameraModel& model, const SceneConfig& cfg);

// Writes n_images scenes (images/img_%05d.pgm), annotations.json,
// camera.json and manifest.json under outdir. Per-image seeds are derived
// from `seed` and the image index, so the dataset is byte-reproducible.
void generate_dataset(std::uint64_t seed, const CameraModel& model, const SceneConfig& cfg,
                      int n_images, const std::filesystem::path& outdir);

// In-memory view of a dataset directory (camera.json + annotations.json +
// the referenced rasters).
struct Dataset {
    CameraModel camera;
    std::vector<Scene> scenes;
    AnnotationsDoc annotations;
};
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace omnidist
