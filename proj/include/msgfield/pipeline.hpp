#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msgfield/motion.hpp"
#include "msgfield/semantics.hpp"
#include "msgfield/synth.hpp"

namespace msgfield {

// True when the mean absolute per-channel difference between the two frames,
// taken over the region's foreground pixels, exceeds tau_m. An empty region
// (or an infinite threshold) never reports motion. Throws ShapeMismatch when
// the images or the region disagree on dimensions.
bool detect_motion(const Image& frame_prev, const Image& frame_cur, const Mask& region_mask,
                   double tau_m);

// End-effector target: a position plus the approach direction packed as a
// unit quaternion rotating the tool axis (0,0,1) onto the approach vector.
struct GraspPose {
  Vec3 position = Vec3::Zero();
  Vec4 approach = Vec4(1, 0, 0, 0);
};

// Pluggable pose proposer. Implementations must be deterministic for fixed
// inputs; "no feasible grasp" is signaled by returning nullopt.
struct GraspProvider {
  virtual ~GraspProvider() = default;
  virtual std::optional<GraspPose> propose(const std::vector<size_t>& indices, const Scene& scene,
                                           const std::vector<Camera>& views) const = 0;
};

// Camera placed `distance` away from `target`, looking along `direction`
// (which becomes the camera z axis). Throws DomainError on a zero direction.
Camera look_at_camera(const Vec3& target, const Vec3& direction, double distance,
                      int image_size = 48, double focal = 40.0);

// Default provider: position is the centroid of the selected primitives and
// the approach comes straight down (+y). The approach flips to the direction
// of the least-occluded candidate view when the downward axis is misaligned
// with the configured arm axis by more than max_misalign_deg, or when other
// primitives occlude the object from directly above.
struct CentroidGraspProvider : GraspProvider {
  Vec3 arm_axis = Vec3(0, 1, 0);
  double max_misalign_deg = 60.0;
  double occlusion_pad = 0.02;
  double overhead_distance = 1.0;

  std::optional<GraspPose> propose(const std::vector<size_t>& indices, const Scene& scene,
                                   const std::vector<Camera>& views) const override;
};

struct RobotState {
  Vec3 position = Vec3::Zero();
  bool gripper_open = true;
  bool stopped = false;
};

// Kinematic simulation world: ground-truth geometry and scripted motion come
// from a generated dataset; the robot is a point end-effector that teleports
// by bounded steps. frame_at_tick scripts which ground-truth frame the
// cameras see at each tick (clamped to its last entry; empty = frame 0).
struct SimWorld {
  SynthResult truth;
  std::vector<size_t> frame_at_tick;
  Vec3 home = Vec3(0, -0.8, 0.8);
  RobotState robot;
  size_t clock = 0;

  size_t frame_at(size_t tick) const;
};

// World whose scripted motion starts at motion_start_tick: the cameras see
// frame 0 until then, then one generated frame per tick until the last.
SimWorld make_world(SynthResult truth, size_t motion_start_tick);

struct ManipulateConfig {
  std::string operation = "grasp";  // "grasp" closes, "place" opens
  double eps_p = 0.02;              // arrival radius and success radius
  double step_length = 0.1;         // per-tick end-effector motion budget
  double tau_m = 0.02;              // motion-detection threshold
  int max_ticks = 400;
  FitConfig fit;                    // settings for mid-approach motion refits
};

enum class ManipulateStatus { kSuccess, kFailure, kNotImplemented };

struct ManipulateResult {
  ManipulateStatus status = ManipulateStatus::kFailure;
  std::vector<std::string> log;  // one JSON line per executed control step
  int stop_events = 0;           // motion-triggered stop/refit count
  Vec3 final_position = Vec3::Zero();
  Vec3 goal_position = Vec3::Zero();  // ground-truth grasp point at the end
  double final_error = 0.0;
};

// Language-conditioned pick/place loop against the simulated world: resolve
// the queried object, propose a pose, then tick — perceive, and either stop
// and refit the scene when the watched region changes, or advance one step
// toward the pose. On arrival the gripper closes ("grasp") or opens
// ("place"); any other operation word yields kNotImplemented. Success means
// the end effector lands within eps_p of the object's ground-truth centroid
// at the final tick. The log replays byte-identically for identical inputs.
ManipulateResult manipulate(SimWorld& world, const SemanticTable& table,
                            const Eigen::VectorXd& text_feature, const GraspProvider& provider,
                            const ManipulateConfig& cfg);

}  // namespace msgfield
