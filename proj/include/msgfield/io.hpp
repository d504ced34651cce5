#pragma once

#include <map>
#include <string>
#include <vector>

#include "msgfield/image.hpp"
#include "msgfield/motion.hpp"
#include "msgfield/scene.hpp"
#include "msgfield/semantics.hpp"

namespace msgfield {

// ASCII scene format, magic MSGF1: header (count, field list) followed by one
// row per primitive; floats carry 9 significant digits, which round-trips
// stably (save -> load -> save is byte-identical).
void save_scene(const Scene& scene, const std::string& path);
Scene load_scene(const std::string& path);

struct CameraRecord {
  std::string id;
  Camera cam;
};

// JSON camera sets; order and ids preserved.
std::vector<CameraRecord> load_camera_set(const std::string& path);
void save_camera_set(const std::vector<CameraRecord>& cams, const std::string& path);

// 8-bit binary PGM (P5); foreground = value >= 128.
Mask load_mask(const std::string& path);
void save_mask(const Mask& mask, const std::string& path);

// 8-bit binary PPM (P6), linear values, no gamma.
Image load_ppm(const std::string& path);
void save_ppm(const Image& img, const std::string& path);

// 8-bit binary PGM (P5) of a unit-range gray image; values are clamped to
// [0,1] and quantized to 255 levels.
void save_gray(const GrayImage& img, const std::string& path);

// 16-bit binary PGM (P5, maxval 65535, big-endian) holding per-pixel integer
// labels. Labels outside [0, 65535] throw DomainError.
void save_label_image(const LabelImage& img, const std::string& path);
LabelImage load_label_image(const std::string& path);

struct FeatureFile {
  int dim = 0;
  std::vector<Eigen::VectorXd> canon;
  std::map<int32_t, Eigen::VectorXd> objects;
};

// JSON feature vectors. Vectors are renormalized on load when their norm
// strays from 1 by more than 1e-9 (with a stderr warning past 1e-3), so
// already-normalized files reload bit-exactly.
FeatureFile load_features(const std::string& path);
void save_features(const FeatureFile& features, const std::string& path);

// JSON detection manifest: {"features": "<features.json>", "views":
// [{"camera": id, "masks": {"<label>": "<mask.pgm>", ...}}, ...]}. File
// references are resolved relative to the manifest's directory.
DetectionInput load_detections(const std::string& path);

struct TrajectoryFile {
  MotionField field;
  std::vector<double> frame_loss;  // one per timestep
};

// JSON-lines trajectory, magic MSGT1: a header record carrying mode, basis
// count, and the coefficient matrix, then one record per timestep with that
// frame's basis deltas and final loss. Rigid records additionally carry the
// composed 4x4 transform; nonrigid records a digest of the coefficients.
// Reloading reproduces the motion field exactly.
void save_trajectory(const MotionField& field, const std::vector<double>& frame_loss,
                     const std::string& path);
TrajectoryFile load_trajectory(const std::string& path);

}  // namespace msgfield
