#pragma once

#include "omnidist/camera_model.hpp"
#include "omnidist/geometry.hpp"
#include "omnidist/image.hpp"

namespace omnidist {

// Target geometry of an equirectangular remap: azimuth phi in [-pi, pi) on
// columns, polar angle theta in [0, theta_max] on rows, theta = 0 at the top.
struct EquirectSpec {
    int width_px = 0;
    int height_px = 0;
    double theta_max_rad = 0.0;
};

void validate(const EquirectSpec& spec);

// Box in equirectangular coordinates. Boxes straddling the phi = +-pi seam
// are returned in the wrapped frame that minimizes their width: cx may then
// exceed width_px and is to be read modulo width_px.
struct EquirectBox {
    BBox box;
    bool wraps = false;
};

// Source fisheye pixel for an equirect pixel. Throws OutOfCalibrationRange
// when the row's theta is beyond the calibration table.
Vec2 equirect_pixel_to_fisheye(const CameraModel& model, const EquirectSpec& spec,
                               Vec2 eq_pixel);

// Full-image remap with bilinear sampling; source pixels outside the image or
// the calibrated disk produce black. Rows are processed in parallel, capped
// by the OMNIDIST_THREADS environment variable; output is identical for any
// thread count. Sampling coordinates are quantized to 1/256 px so the result
// is insensitive to sub-ULP differences in libm.
Image fisheye_to_equirect(const Image& image, const CameraModel& model,
                          const EquirectSpec& spec);

// Maps `samples` uniformly spaced boundary points of a fisheye-space box
// through the inverse mapping and returns their axis-aligned hull.
// Throws OutOfCalibrationRange if any boundary point leaves the calibrated
// disk.
EquirectBox bbox_to_equirect(const CameraModel& model, const EquirectSpec& spec,
                             const BBox& box, int samples = 64);

}  // namespace omnidist
