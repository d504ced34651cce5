#pragma once

#include <map>
#include <vector>

#include "msgfield/losses.hpp"
#include "msgfield/rasterizer.hpp"
#include "msgfield/scene.hpp"

namespace msgfield {

enum class MotionMode { kRigid, kNonrigid };

struct BasisDelta {
  Vec3 dmu = Vec3::Zero();
  Vec4 dq = Vec4::Zero();
};

// Low-rank motion model: per timestep, B basis deltas; per dynamic primitive,
// a B-vector of coefficients (ordered by ascending primitive index). The
// frame-0 deltas are pinned to zero so every primitive starts at its rest
// pose. In rigid mode all coefficient vectors are the frozen unit vector
// e_0: basis 0 carries the shared transform and positions move under the
// corresponding SE(3) action rather than by per-primitive offsets.
struct MotionField {
  MotionMode mode = MotionMode::kRigid;
  int basis_count = 0;
  std::vector<int> timesteps;                    // ordered, first entry is the rest frame
  std::vector<std::vector<BasisDelta>> bases;    // [frame][basis]
  std::vector<Eigen::VectorXd> coeffs;           // [dynamic primitive]

  // Index of t in timesteps; throws UnknownTimestep.
  int frame_index(int t) const;
};

MotionField make_motion_field(MotionMode mode, int basis_count, std::vector<int> timesteps,
                              size_t n_dynamic, uint64_t seed = 0);

// Structural validation (sizes, ordering, zero rest frame, rigid coefficient
// freeze). Throws a DomainError subtype describing the violation.
void check_motion_field(const MotionField& field);

// Linear combination of the frame's basis deltas; no normalization.
void compose_motion(const Eigen::VectorXd& coeffs, const MotionField& field, int t, Vec3& dmu,
                    Vec4& dq);

// Additive pose update: mu + dmu, normalize(q + dq); everything else copied.
SplatPrimitive apply_motion(const SplatPrimitive& prim, const Vec3& dmu, const Vec4& dq);

// Frame indices {0, stride, 2*stride, ...} plus the last frame.
std::vector<int> sample_frames(int n_frames, int stride);

// Scene at time t: static primitives are copied bit-for-bit; dynamic ones are
// posed (rigid: SE(3) action of rigid_se3(field, t); nonrigid: apply_motion
// of the per-primitive composed deltas).
Scene pose_scene(const Scene& scene, const MotionField& field, int t);

// The shared rigid transform at t as a 4x4 matrix; rigid mode only.
Mat4 rigid_se3(const MotionField& field, int t);

// One camera's view of one timestep: RGB observation plus the binary mask of
// the dynamic object in that view.
struct FrameObservation {
  Image rgb;
  Mask mask;
};

// timestep -> one FrameObservation per camera (camera order).
using ObservationSet = std::map<int, std::vector<FrameObservation>>;

struct FitConfig {
  int iterations = 0;  // 0 = mode default (300 rigid, 1000 nonrigid)
  double lr_translation = 1e-2;
  double lr_quaternion = 1e-3;
  double lr_coeffs = 1e-2;
  LossWeights weights;
  int stride = 1;
  int rigidity_k = 5;
  RenderConfig render;
};

// Objective value and analytic gradients for one timestep: photometric L1 +
// SSIM on the full posed render, soft Dice between the dynamic-only opacity
// and the observed mask, and (nonrigid) coefficient rigidity over rest-pose
// neighbors. Gradients flow through the rasterizer backward pass and the pose
// chain into the frame's basis deltas and, in nonrigid mode, the coefficients.
struct MotionStepGrads {
  double loss = 0.0;
  LossParts parts;
  std::vector<Vec3> d_dmu;                 // per basis
  std::vector<Vec4> d_dq;                  // per basis
  std::vector<Eigen::VectorXd> d_coeffs;   // per dynamic primitive; empty when rigid
};

MotionStepGrads motion_step_gradients(const Scene& scene, const MotionField& field, int t,
                                      const std::vector<Camera>& cams,
                                      const std::vector<FrameObservation>& obs_t,
                                      const FitConfig& cfg);

struct FitResult {
  MotionField field;
  std::vector<double> trace;       // loss per iteration, timesteps concatenated
  std::vector<double> frame_loss;  // final loss per timestep (aligned with field.timesteps)
};

// Adam-optimizes the basis deltas frame by frame (warm-starting each frame
// from the previous one) and, in nonrigid mode, the shared coefficients. The
// rest frame is evaluated but never optimized. Throws NoDynamicPrimitives,
// MissingObservation, ShapeMismatch, DomainError.
FitResult fit(const Scene& scene, const MotionField& init, const std::vector<Camera>& cams,
              const ObservationSet& obs, const FitConfig& cfg);

}  // namespace msgfield
