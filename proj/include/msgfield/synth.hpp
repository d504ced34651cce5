#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "msgfield/motion.hpp"
#include "msgfield/rasterizer.hpp"
#include "msgfield/scene.hpp"

namespace msgfield {

// How one generated object moves over the frame sequence.
struct MotionProgram {
  enum class Kind { kStatic, kRigid, kHinge };
  Kind kind = Kind::kStatic;
  // kRigid: per-frame translation plus rotation about the object centroid.
  Vec3 translation_per_frame = Vec3::Zero();
  Vec3 rotation_axis = Vec3(0, 0, 1);
  double rotation_deg_per_frame = 0.0;
  // kHinge (shape kHinge only): the swinging plate rotates about the shared
  // edge by this much per frame.
  double hinge_deg_per_frame = 0.0;
};

enum class ClusterShape { kBox, kSphereShell, kHinge };

// One generated object: a dense, saturated, color-jittered splat cluster.
// primitive_count is a target; lattice shapes round it to fill their grid.
struct ObjectSpec {
  ClusterShape shape = ClusterShape::kBox;
  int primitive_count = 96;
  Vec3 center = Vec3(0, 0, 2);
  double extent = 0.4;  // characteristic size (cube edge / sphere diameter / plate edge)
  Vec3 color = Vec3(0.8, 0.35, 0.2);
  int32_t label = 1;
  MotionProgram motion;
};

// Two-camera rig on a horizontal circle around `center`, one camera per
// azimuth, all aimed at the center.
struct RigSpec {
  int width = 64;
  int height = 64;
  double fx = 70.0;
  double fy = 70.0;
  Vec3 center = Vec3(0, 0, 2);
  double radius = 2.0;
  std::vector<double> azimuth_deg = {-30.0, 30.0};
  double near_z = 0.05;
  double far_z = 50.0;
};

struct SynthSpec {
  uint64_t seed = 1;
  std::vector<ObjectSpec> objects;
  int background_count = 16;
  int frame_count = 1;
  RigSpec rig;
  RenderConfig render;
};

// Ground truth for one frame: the exact per-primitive pose, the oracle RGB
// render per view, and each object's thresholded-opacity mask per view.
struct SynthFrame {
  std::vector<Vec3> mu;
  std::vector<Vec4> q;
  std::vector<Image> rgb;
  std::map<int32_t, std::vector<Mask>> masks;
};

struct SynthResult {
  Scene scene;  // frame-0 scene, labeled, dynamic flags set by motion kind
  std::vector<Camera> cams;
  std::vector<SynthFrame> frames;
  // Per rigid object: the world-space SE(3) taking frame-0 positions to each
  // frame (index 0 is the identity). Per hinge object: the swing angle.
  std::map<int32_t, std::vector<Mat4>> object_se3;
  std::map<int32_t, std::vector<double>> hinge_deg;
  // Synthetic open-vocabulary features: one unit vector per label plus the
  // shared canonical vectors (dimension 16).
  std::map<int32_t, Eigen::VectorXd> object_features;
  std::vector<Eigen::VectorXd> canon_features;
  // Primitive index range [begin, end) per label, and for hinge objects a
  // flag per in-range primitive marking the swinging plate.
  std::map<int32_t, std::pair<size_t, size_t>> object_range;
  std::map<int32_t, std::vector<uint8_t>> hinge_moving;
  // Frame-0 detection masks per label per view: the union of the object
  // primitives' projected footprint boxes. Unlike the tight silhouette masks
  // in SynthFrame (which supervise motion fits), these cover every pixel the
  // containment test samples, so labeling from them recovers the whole
  // object.
  std::map<int32_t, std::vector<Mask>> detection_masks;
};

// Deterministic in spec.seed: same spec -> byte-identical result.
SynthResult generate(const SynthSpec& spec);

// Copy of the scene with seeded Gaussian noise of the given scale added to
// every dynamic primitive's position; static primitives untouched.
Scene perturb_scene(const Scene& scene, double sigma, uint64_t seed);

// Packs one object's ground truth into the motion-fit observation layout:
// timestep t -> per-view {rgb, that object's mask}.
ObservationSet to_observations(const SynthResult& synth, int32_t label);

}  // namespace msgfield
