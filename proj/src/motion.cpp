#include "msgfield/motion.hpp"

#include <algorithm>
#include <cmath>

#include "msgfield/errors.hpp"
#include "msgfield/util.hpp"

namespace msgfield {

int MotionField::frame_index(int t) const {
  for (size_t i = 0; i < timesteps.size(); ++i)
    if (timesteps[i] == t) return static_cast<int>(i);
  throw UnknownTimestep("timestep " + std::to_string(t) + " is not in the motion field");
}

MotionField make_motion_field(MotionMode mode, int basis_count, std::vector<int> timesteps,
                              size_t n_dynamic, uint64_t seed) {
  if (basis_count < 1) throw DomainError("basis count must be >= 1");
  if (timesteps.empty()) throw DomainError("motion field needs at least one timestep");
  for (size_t i = 1; i < timesteps.size(); ++i)
    if (timesteps[i] <= timesteps[i - 1]) throw DomainError("timesteps must strictly increase");
  MotionField f;
  f.mode = mode;
  f.basis_count = basis_count;
  f.timesteps = std::move(timesteps);
  f.bases.assign(f.timesteps.size(), std::vector<BasisDelta>(basis_count));
  Rng rng(seed);
  for (size_t i = 0; i < n_dynamic; ++i) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(basis_count);
    if (mode == MotionMode::kRigid) {
      w[0] = 1.0;
    } else {
      for (int b = 0; b < basis_count; ++b) w[b] = 0.1 * rng.normal();
    }
    f.coeffs.push_back(std::move(w));
  }
  return f;
}

void check_motion_field(const MotionField& field) {
  if (field.basis_count < 1) throw DomainError("basis count must be >= 1");
  if (field.timesteps.empty()) throw DomainError("motion field needs at least one timestep");
  for (size_t i = 1; i < field.timesteps.size(); ++i)
    if (field.timesteps[i] <= field.timesteps[i - 1])
      throw DomainError("timesteps must strictly increase");
  if (field.bases.size() != field.timesteps.size())
    throw ShapeMismatch("field has " + std::to_string(field.bases.size()) + " delta frames for " +
                        std::to_string(field.timesteps.size()) + " timesteps");
  for (const auto& frame : field.bases)
    if (static_cast<int>(frame.size()) != field.basis_count)
      throw ShapeMismatch("every frame must carry exactly " +
                          std::to_string(field.basis_count) + " basis deltas");
  for (const auto& d : field.bases.front())
    if (d.dmu != Vec3::Zero() || d.dq != Vec4::Zero())
      throw DomainError("rest-frame deltas must be exactly zero");
  for (const auto& w : field.coeffs) {
    if (w.size() != field.basis_count)
      throw ShapeMismatch("coefficient vectors must have one entry per basis");
    if (field.mode == MotionMode::kRigid &&
        w != Eigen::VectorXd::Unit(field.basis_count, 0))
      throw DomainError("rigid mode pins every coefficient vector to (1, 0, ..., 0)");
  }
}

void compose_motion(const Eigen::VectorXd& coeffs, const MotionField& field, int t, Vec3& dmu,
                    Vec4& dq) {
  if (coeffs.size() != field.basis_count)
    throw DimMismatch("coefficient vector has " + std::to_string(coeffs.size()) +
                      " entries, field has " + std::to_string(field.basis_count) + " bases");
  const auto& frame = field.bases[field.frame_index(t)];
  dmu = Vec3::Zero();
  dq = Vec4::Zero();
  for (int b = 0; b < field.basis_count; ++b) {
    dmu += coeffs[b] * frame[b].dmu;
    dq += coeffs[b] * frame[b].dq;
  }
}

SplatPrimitive apply_motion(const SplatPrimitive& prim, const Vec3& dmu, const Vec4& dq) {
  const Vec4 u = prim.q + dq;
  if (u.norm() <= 1e-9)
    throw DegenerateQuaternion("orientation delta cancels the rest orientation");
  SplatPrimitive posed = prim;
  posed.mu = prim.mu + dmu;
  posed.q = quat_normalized(u);
  return posed;
}

std::vector<int> sample_frames(int n_frames, int stride) {
  if (n_frames < 1) throw DomainError("need at least one frame");
  if (stride < 1) throw DomainError("stride must be >= 1");
  std::vector<int> out;
  for (int i = 0; i < n_frames; i += stride) out.push_back(i);
  if (out.back() != n_frames - 1) out.push_back(n_frames - 1);
  return out;
}

namespace {

std::vector<int> dynamic_indices(const Scene& scene) {
  std::vector<int> idx;
  for (size_t i = 0; i < scene.size(); ++i)
    if (scene.dynamic_mask[i]) idx.push_back(static_cast<int>(i));
  return idx;
}

void check_field_against_scene(const Scene& scene, const MotionField& field,
                               const std::vector<int>& dyn) {
  if (field.coeffs.size() != dyn.size())
    throw ShapeMismatch("motion field has " + std::to_string(field.coeffs.size()) +
                        " coefficient vectors but the scene has " + std::to_string(dyn.size()) +
                        " dynamic primitives");
}

// Shared rigid transform at t: rotation from the composed quaternion delta,
// translation from the composed position delta.
void rigid_transform(const MotionField& field, int t, Vec4& q_delta, Vec3& dmu,
                     double& inv_norm) {
  const Eigen::VectorXd w = field.coeffs.empty()
                                ? Eigen::VectorXd::Unit(field.basis_count, 0)
                                : field.coeffs.front();
  Vec4 dq;
  compose_motion(w, field, t, dmu, dq);
  const Vec4 u = quat_identity() + dq;
  const double n = u.norm();
  if (n <= 1e-9) throw DegenerateQuaternion("rigid orientation delta degenerates");
  q_delta = quat_normalized(u);
  inv_norm = 1.0 / n;
}

}  // namespace

Scene pose_scene(const Scene& scene, const MotionField& field, int t) {
  scene.check_consistent();
  const std::vector<int> dyn = dynamic_indices(scene);
  check_field_against_scene(scene, field, dyn);
  Scene posed = scene;
  if (dyn.empty()) {
    field.frame_index(t);  // still reject unknown timesteps
    return posed;
  }
  if (field.mode == MotionMode::kRigid) {
    Vec4 qd;
    Vec3 dmu;
    double inv_norm;
    rigid_transform(field, t, qd, dmu, inv_norm);
    const Mat3 r = rotation_matrix(qd);
    for (int i : dyn) {
      SplatPrimitive& p = posed.primitives[i];
      p.mu = r * p.mu + dmu;
      p.q = quat_multiply(qd, p.q);
    }
  } else {
    for (size_t k = 0; k < dyn.size(); ++k) {
      Vec3 dmu;
      Vec4 dq;
      compose_motion(field.coeffs[k], field, t, dmu, dq);
      posed.primitives[dyn[k]] = apply_motion(scene.primitives[dyn[k]], dmu, dq);
    }
  }
  return posed;
}

Mat4 rigid_se3(const MotionField& field, int t) {
  if (field.mode != MotionMode::kRigid)
    throw NotRigidMode("SE(3) extraction requires a rigid motion field");
  Vec4 qd;
  Vec3 dmu;
  double inv_norm;
  rigid_transform(field, t, qd, dmu, inv_norm);
  Mat4 m = Mat4::Identity();
  m.block<3, 3>(0, 0) = rotation_matrix(qd);
  m.block<3, 1>(0, 3) = dmu;
  return m;
}

MotionStepGrads motion_step_gradients(const Scene& scene, const MotionField& field, int t,
                                      const std::vector<Camera>& cams,
                                      const std::vector<FrameObservation>& obs_t,
                                      const FitConfig& cfg) {
  if (cams.empty()) throw DomainError("need at least one camera");
  if (obs_t.size() != cams.size())
    throw ShapeMismatch("got " + std::to_string(obs_t.size()) + " observations for " +
                        std::to_string(cams.size()) + " cameras");
  scene.check_consistent();
  const std::vector<int> dyn = dynamic_indices(scene);
  if (dyn.empty()) throw NoDynamicPrimitives("no dynamic primitives to pose");
  check_field_against_scene(scene, field, dyn);
  const size_t n_dyn = dyn.size();
  const int b_count = field.basis_count;
  const bool rigid = field.mode == MotionMode::kRigid;

  // Pose the scene, keeping what the chain rule needs.
  Scene posed = scene;
  std::vector<double> inv_norm(n_dyn, 1.0);  // nonrigid: 1/|q0 + dq| per primitive
  Vec4 qd = quat_identity();                 // rigid: shared unit delta
  double inv_norm_delta = 1.0;
  if (rigid) {
    Vec3 dmu;
    rigid_transform(field, t, qd, dmu, inv_norm_delta);
    const Mat3 r = rotation_matrix(qd);
    for (int i : dyn) {
      SplatPrimitive& p = posed.primitives[i];
      p.mu = r * p.mu + dmu;
      p.q = quat_multiply(qd, p.q);
    }
  } else {
    for (size_t k = 0; k < n_dyn; ++k) {
      Vec3 dmu;
      Vec4 dq;
      compose_motion(field.coeffs[k], field, t, dmu, dq);
      const SplatPrimitive& p0 = scene.primitives[dyn[k]];
      inv_norm[k] = 1.0 / (p0.q + dq).norm();
      posed.primitives[dyn[k]] = apply_motion(p0, dmu, dq);
    }
  }

  MotionStepGrads out;
  out.d_dmu.assign(b_count, Vec3::Zero());
  out.d_dq.assign(b_count, Vec4::Zero());
  if (!rigid) out.d_coeffs.assign(n_dyn, Eigen::VectorXd::Zero(b_count));

  // Per-dynamic-primitive gradients w.r.t. the posed mu / stored q, summed
  // over cameras and loss terms (weights already folded in).
  std::vector<Vec3> g_mu(n_dyn, Vec3::Zero());
  std::vector<Vec4> g_q(n_dyn, Vec4::Zero());

  for (size_t c = 0; c < cams.size(); ++c) {
    const Camera& cam = cams[c];
    const FrameObservation& ob = obs_t[c];

    RenderChannels full_ch;
    full_ch.color = true;
    full_ch.opacity = false;
    ForwardCache cache;
    const RenderTarget rt = render(posed, cam, full_ch, cfg.render, {}, &cache);
    const ImageLoss l1 = l1_rgb(rt.color, ob.rgb);
    out.parts.rgb += l1.value;
    Image up_color = l1.grad;
    if (cfg.weights.lambda_ssim > 0.0) {
      const ImageLoss ss = ssim_loss(rt.color, ob.rgb);
      out.parts.ssim += ss.value;
      for (size_t i = 0; i < up_color.data.size(); ++i)
        up_color.data[i] += cfg.weights.lambda_ssim * ss.grad.data[i];
    }
    const RenderGrads gr = backward(posed, cam, up_color, GrayImage(), cache, cfg.render, {});
    for (size_t k = 0; k < n_dyn; ++k) {
      g_mu[k] += gr.d_mu[dyn[k]];
      g_q[k] += gr.d_q[dyn[k]];
    }

    if (cfg.weights.lambda_dice > 0.0) {
      RenderChannels dyn_ch;
      dyn_ch.color = false;
      dyn_ch.opacity = true;
      RenderOverrides ov;
      ov.subset = &posed.dynamic_mask;
      ForwardCache dyn_cache;
      const RenderTarget drt = render(posed, cam, dyn_ch, cfg.render, ov, &dyn_cache);
      const ScalarLoss dice = dice_loss(drt.opacity, ob.mask);
      out.parts.dice += dice.value;
      GrayImage up_op = dice.grad;
      for (auto& v : up_op.data) v *= cfg.weights.lambda_dice;
      const RenderGrads gd = backward(posed, cam, Image(), up_op, dyn_cache, cfg.render, ov);
      for (size_t k = 0; k < n_dyn; ++k) {
        g_mu[k] += gd.d_mu[dyn[k]];
        g_q[k] += gd.d_q[dyn[k]];
      }
    }
  }

  if (!rigid && cfg.weights.lambda_rigidity > 0.0 && n_dyn >= 2) {
    std::vector<Vec3> rest(n_dyn);
    for (size_t k = 0; k < n_dyn; ++k) rest[k] = scene.primitives[dyn[k]].mu;
    const RigidityLoss rig = rigidity_loss(rest, field.coeffs, cfg.rigidity_k);
    out.parts.rigidity = rig.value;
    for (size_t k = 0; k < n_dyn; ++k)
      out.d_coeffs[k] += cfg.weights.lambda_rigidity * rig.grad[k];
  }

  // Chain into the frame's basis deltas (and coefficients when they move).
  const auto& frame = field.bases[field.frame_index(t)];
  if (rigid) {
    // mu' = R(qd) mu0 + dmu, q' = qd x q0, qd = normalize(id + dq).
    Vec3 g_dmu = Vec3::Zero();
    Vec4 g_qd = Vec4::Zero();
    for (size_t k = 0; k < n_dyn; ++k) {
      g_dmu += g_mu[k];
      g_qd += d_rotated_vec_d_unit_quat(qd, scene.primitives[dyn[k]].mu).transpose() * g_mu[k];
      g_qd += right_mult_matrix(scene.primitives[dyn[k]].q).transpose() * g_q[k];
    }
    const Vec4 g_dq = (g_qd - qd * qd.dot(g_qd)) * inv_norm_delta;
    const double w0 = field.coeffs.empty() ? 1.0 : field.coeffs.front()[0];
    // Only basis 0 is active in rigid mode; w is frozen at e_0.
    out.d_dmu[0] = w0 * g_dmu;
    out.d_dq[0] = w0 * g_dq;
  } else {
    for (size_t k = 0; k < n_dyn; ++k) {
      const Vec4 g_dq_k = g_q[k] * inv_norm[k];
      const auto& w = field.coeffs[k];
      for (int b = 0; b < b_count; ++b) {
        out.d_dmu[b] += w[b] * g_mu[k];
        out.d_dq[b] += w[b] * g_dq_k;
        out.d_coeffs[k][b] += frame[b].dmu.dot(g_mu[k]) + frame[b].dq.dot(g_dq_k);
      }
    }
  }

  out.loss = total_loss(out.parts, cfg.weights);
  return out;
}

FitResult fit(const Scene& scene, const MotionField& init, const std::vector<Camera>& cams,
              const ObservationSet& obs, const FitConfig& cfg) {
  if (cams.empty()) throw DomainError("need at least one camera");
  if (cfg.iterations < 0) throw DomainError("iteration count must be >= 0");
  if (cfg.stride < 1) throw DomainError("stride must be >= 1");
  if (cfg.rigidity_k < 1) throw DomainError("rigidity neighborhood must be >= 1");
  total_loss(LossParts{}, cfg.weights);  // rejects negative weights up front
  scene.check_consistent();
  check_motion_field(init);
  const std::vector<int> dyn = dynamic_indices(scene);
  if (dyn.empty()) throw NoDynamicPrimitives("scene has no dynamic primitives to fit");
  check_field_against_scene(scene, init, dyn);
  const bool rigid = init.mode == MotionMode::kRigid;
  const int iters = cfg.iterations > 0 ? cfg.iterations : (rigid ? 300 : 1000);
  const size_t n_dyn = dyn.size();
  const int b_count = init.basis_count;

  FitResult result;
  result.field = init;
  MotionField& field = result.field;

  for (size_t fi = 0; fi < field.timesteps.size(); ++fi) {
    const int t = field.timesteps[fi];
    const auto it = obs.find(t);
    if (it == obs.end())
      throw MissingObservation("no observations for timestep " + std::to_string(t));
    const auto& obs_t = it->second;

    if (fi == 0) {  // rest frame: evaluate for the record, never optimize
      result.frame_loss.push_back(
          motion_step_gradients(scene, field, t, cams, obs_t, cfg).loss);
      continue;
    }

    field.bases[fi] = field.bases[fi - 1];  // warm start

    AdamState st_t, st_q, st_w;
    std::vector<double> p_t(3 * b_count), p_q(4 * b_count), p_w;
    std::vector<double> g_t(3 * b_count), g_q(4 * b_count), g_w;
    if (!rigid) {
      p_w.resize(n_dyn * b_count);
      g_w.resize(n_dyn * b_count);
    }

    for (int iter = 0; iter < iters; ++iter) {
      const MotionStepGrads g = motion_step_gradients(scene, field, t, cams, obs_t, cfg);
      result.trace.push_back(g.loss);
      for (int b = 0; b < b_count; ++b) {
        for (int d = 0; d < 3; ++d) {
          p_t[3 * b + d] = field.bases[fi][b].dmu[d];
          g_t[3 * b + d] = g.d_dmu[b][d];
        }
        for (int d = 0; d < 4; ++d) {
          p_q[4 * b + d] = field.bases[fi][b].dq[d];
          g_q[4 * b + d] = g.d_dq[b][d];
        }
      }
      adam_step(st_t, p_t, g_t, cfg.lr_translation);
      adam_step(st_q, p_q, g_q, cfg.lr_quaternion);
      for (int b = 0; b < b_count; ++b) {
        for (int d = 0; d < 3; ++d) field.bases[fi][b].dmu[d] = p_t[3 * b + d];
        for (int d = 0; d < 4; ++d) field.bases[fi][b].dq[d] = p_q[4 * b + d];
      }
      if (!rigid) {
        for (size_t k = 0; k < n_dyn; ++k)
          for (int b = 0; b < b_count; ++b) {
            p_w[k * b_count + b] = field.coeffs[k][b];
            g_w[k * b_count + b] = g.d_coeffs[k][b];
          }
        adam_step(st_w, p_w, g_w, cfg.lr_coeffs);
        for (size_t k = 0; k < n_dyn; ++k)
          for (int b = 0; b < b_count; ++b) field.coeffs[k][b] = p_w[k * b_count + b];
      }
    }
    result.frame_loss.push_back(
        motion_step_gradients(scene, field, t, cams, obs_t, cfg).loss);
  }
  return result;
}

}  // namespace msgfield
