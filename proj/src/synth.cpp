#include "msgfield/synth.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "msgfield/errors.hpp"
#include "msgfield/util.hpp"

namespace msgfield {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kFeatureDim = 16;

Vec3 clamp_color(const Vec3& c) {
  return Vec3(std::clamp(c[0], 0.02, 0.98), std::clamp(c[1], 0.02, 0.98),
              std::clamp(c[2], 0.02, 0.98));
}

// Unit quaternion for a rotation of `rad` about `axis` (unit length).
Vec4 axis_angle_quat(const Vec3& axis, double rad) {
  const double h = 0.5 * rad;
  const double s = std::sin(h);
  return Vec4(std::cos(h), s * axis[0], s * axis[1], s * axis[2]);
}

// Right-handed frame with the given unit normal as its third column.
Mat3 frame_from_normal(const Vec3& n) {
  const Vec3 seed = std::abs(n[0]) > 0.9 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
  const Vec3 tu = (seed - seed.dot(n) * n).normalized();
  const Vec3 tv = n.cross(tu);
  Mat3 r;
  r.col(0) = tu;
  r.col(1) = tv;
  r.col(2) = n;
  return r;
}

Vec4 quat_from_matrix(const Mat3& r) {
  const Eigen::Quaterniond q(r);
  return Vec4(q.w(), q.x(), q.y(), q.z());
}

// Checkerboard-plus-jitter color so every object carries photometric texture.
Vec3 textured_color(const Vec3& base, int parity, Rng& rng) {
  const double checker = parity ? 1.3 : 0.65;
  return clamp_color(checker * base +
                     0.08 * Vec3(rng.normal(), rng.normal(), rng.normal()));
}

void add_prim(Scene& scene, const Vec3& mu, const Vec4& q, const Vec2& s, double o,
              const Vec3& c, int32_t label, uint8_t dynamic) {
  scene.primitives.push_back(make_primitive(mu, q, s, o, c, label));
  scene.dynamic_mask.push_back(dynamic);
}

void build_box(Scene& scene, const ObjectSpec& obj, uint8_t dynamic, Rng& rng) {
  const int n = std::max<int>(2, std::lround(std::sqrt(obj.primitive_count / 6.0)));
  const double step = obj.extent / n;
  const double half = 0.5 * obj.extent;
  const Vec3 axes[3] = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  for (int a = 0; a < 3; ++a)
    for (int sgn : {-1, 1}) {
      const Vec3 normal = sgn * axes[a];
      const Mat3 frame = frame_from_normal(normal);
      const Vec4 q = quat_from_matrix(frame);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double u = -half + step * (i + 0.5) + 0.05 * step * rng.normal();
          const double v = -half + step * (j + 0.5) + 0.05 * step * rng.normal();
          const Vec3 mu = obj.center + u * frame.col(0) + v * frame.col(1) + half * normal;
          add_prim(scene, mu, q, Vec2(0.8 * step, 0.8 * step), 0.95 + 0.04 * rng.uniform(),
                   textured_color(obj.color, (i + j) % 2, rng), obj.label, dynamic);
        }
    }
}

void build_sphere_shell(Scene& scene, const ObjectSpec& obj, uint8_t dynamic, Rng& rng) {
  const int n = std::max(obj.primitive_count, 8);
  const double radius = 0.5 * obj.extent;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  const double spacing = radius * std::sqrt(4.0 * kPi / n);
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    const Vec3 normal(r * std::cos(phi), r * std::sin(phi), z);
    const Vec3 mu = obj.center + radius * normal;
    const Vec4 q = quat_from_matrix(frame_from_normal(normal));
    add_prim(scene, mu, q, Vec2(0.62 * spacing, 0.62 * spacing), 0.95 + 0.04 * rng.uniform(),
             textured_color(obj.color, i % 2, rng), obj.label, dynamic);
  }
}

// Two coplanar plates sharing the y-aligned edge through the object center;
// the x>0 plate is the one hinge programs swing.
void build_hinge(Scene& scene, const ObjectSpec& obj, uint8_t dynamic, Rng& rng,
                 std::vector<uint8_t>* moving) {
  const int gy = std::max<int>(2, std::lround(std::sqrt(obj.primitive_count / 8.0)));
  const int gx = 2 * gy;
  const double plate_y = 0.6 * obj.extent;
  const double step_x = obj.extent / gx;
  const double step_y = plate_y / gy;
  for (int sgn : {-1, 1})
    for (int i = 0; i < gx; ++i)
      for (int j = 0; j < gy; ++j) {
        const double x =
            sgn * (step_x * (i + 0.5) + 0.05 * step_x * rng.normal());
        const double y =
            -0.5 * plate_y + step_y * (j + 0.5) + 0.05 * step_y * rng.normal();
        const Vec3 mu = obj.center + Vec3(x, y, 0);
        add_prim(scene, mu, quat_identity(), Vec2(0.8 * step_x, 0.8 * step_y),
                 0.95 + 0.04 * rng.uniform(), textured_color(obj.color, (i + j + sgn) % 2, rng),
                 obj.label, dynamic);
        moving->push_back(sgn > 0 ? 1 : 0);
      }
}

Camera rig_camera(const RigSpec& rig, double azim_deg) {
  const Mat3 r_cw =
      Eigen::AngleAxisd(azim_deg * kPi / 180.0, Vec3::UnitY()).toRotationMatrix();
  const Vec3 pos = rig.center - rig.radius * r_cw.col(2);
  const Mat3 r_wc = r_cw.transpose();
  return make_camera(rig.width, rig.height, rig.fx, rig.fy, 0.5 * (rig.width - 1),
                     0.5 * (rig.height - 1), quat_from_matrix(r_wc), -(r_wc * pos), rig.near_z,
                     rig.far_z);
}

void validate(const SynthSpec& spec) {
  if (spec.frame_count < 1) throw SynthSpecError("frame_count must be >= 1");
  if (spec.background_count < 0) throw SynthSpecError("background_count must be >= 0");
  if (spec.objects.empty() && spec.background_count == 0)
    throw SynthSpecError("spec generates an empty scene");
  if (spec.rig.width < 8 || spec.rig.height < 8)
    throw SynthSpecError("rig image size must be at least 8x8");
  if (spec.rig.fx <= 0 || spec.rig.fy <= 0) throw SynthSpecError("rig focal lengths must be > 0");
  if (spec.rig.radius <= 0) throw SynthSpecError("rig radius must be > 0");
  if (spec.rig.azimuth_deg.empty()) throw SynthSpecError("rig needs at least one camera");
  if (spec.rig.near_z <= 0 || spec.rig.near_z >= spec.rig.far_z)
    throw SynthSpecError("rig near/far planes invalid");
  std::vector<int32_t> labels;
  for (const auto& obj : spec.objects) {
    if (obj.label <= 0) throw SynthSpecError("object labels must be positive");
    labels.push_back(obj.label);
    if (obj.primitive_count < 8)
      throw SynthSpecError("object primitive_count must be at least 8");
    if (obj.extent <= 0) throw SynthSpecError("object extent must be > 0");
    if (obj.motion.kind == MotionProgram::Kind::kHinge && obj.shape != ClusterShape::kHinge)
      throw SynthSpecError("hinge motion requires the hinge shape");
    if (obj.motion.kind == MotionProgram::Kind::kRigid &&
        obj.motion.rotation_deg_per_frame != 0.0 && obj.motion.rotation_axis.norm() < 1e-12)
      throw SynthSpecError("rigid rotation needs a non-zero axis");
  }
  std::sort(labels.begin(), labels.end());
  if (std::adjacent_find(labels.begin(), labels.end()) != labels.end())
    throw SynthSpecError("object labels must be distinct");
}

}  // namespace

SynthResult generate(const SynthSpec& spec) {
  validate(spec);
  SynthResult out;
  Rng rng(spec.seed);

  // Scene: objects in spec order, then background clutter.
  for (const auto& obj : spec.objects) {
    const uint8_t dynamic = obj.motion.kind == MotionProgram::Kind::kStatic ? 0 : 1;
    const size_t begin = out.scene.size();
    if (obj.shape == ClusterShape::kBox) {
      build_box(out.scene, obj, dynamic, rng);
    } else if (obj.shape == ClusterShape::kSphereShell) {
      build_sphere_shell(out.scene, obj, dynamic, rng);
    } else {
      build_hinge(out.scene, obj, dynamic, rng, &out.hinge_moving[obj.label]);
    }
    out.object_range[obj.label] = {begin, out.scene.size()};
  }
  for (int i = 0; i < spec.background_count; ++i) {
    const Vec3 mu(rng.uniform(-1.6, 1.6), rng.uniform(-1.2, 1.2), rng.uniform(3.2, 5.0));
    const Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    const double s = rng.uniform(0.25, 0.5);
    const Vec3 c = clamp_color(Vec3(0.45, 0.42, 0.40) +
                               0.12 * Vec3(rng.normal(), rng.normal(), rng.normal()));
    add_prim(out.scene, mu, q, Vec2(s, s), rng.uniform(0.7, 0.95), c, 0, 0);
  }

  for (double azim : spec.rig.azimuth_deg) out.cams.push_back(rig_camera(spec.rig, azim));

  // Synthetic open-vocabulary features, decoupled from the geometry stream.
  Rng feature_rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
  auto draw_unit = [&feature_rng]() {
    Eigen::VectorXd v(kFeatureDim);
    for (int i = 0; i < kFeatureDim; ++i) v[i] = feature_rng.normal();
    return Eigen::VectorXd(v.normalized());
  };
  for (int i = 0; i < 4; ++i) out.canon_features.push_back(draw_unit());
  for (const auto& obj : spec.objects) out.object_features[obj.label] = draw_unit();

  // Ground-truth poses per frame.
  const size_t n = out.scene.size();
  out.frames.resize(spec.frame_count);
  for (int k = 0; k < spec.frame_count; ++k) {
    SynthFrame& frame = out.frames[k];
    frame.mu.resize(n);
    frame.q.resize(n);
    for (size_t i = 0; i < n; ++i) {
      frame.mu[i] = out.scene.primitives[i].mu;
      frame.q[i] = out.scene.primitives[i].q;
    }
    for (const auto& obj : spec.objects) {
      const auto [begin, end] = out.object_range[obj.label];
      if (obj.motion.kind == MotionProgram::Kind::kRigid) {
        auto& se3 = out.object_se3[obj.label];
        Vec3 centroid = Vec3::Zero();
        for (size_t i = begin; i < end; ++i) centroid += out.scene.primitives[i].mu;
        centroid /= static_cast<double>(end - begin);
        const double rad = k * obj.motion.rotation_deg_per_frame * kPi / 180.0;
        const Vec3 axis = obj.motion.rotation_deg_per_frame != 0.0
                              ? Vec3(obj.motion.rotation_axis.normalized())
                              : Vec3(0, 0, 1);
        const Vec4 qrot = axis_angle_quat(axis, rad);
        const Mat3 r = rotation_matrix(qrot);
        const Vec3 t = centroid - r * centroid +
                       static_cast<double>(k) * obj.motion.translation_per_frame;
        Mat4 m = Mat4::Identity();
        m.block<3, 3>(0, 0) = r;
        m.block<3, 1>(0, 3) = t;
        se3.push_back(m);
        if (k == 0) continue;  // frame 0 keeps the rest pose bit-exactly
        for (size_t i = begin; i < end; ++i) {
          frame.mu[i] = r * out.scene.primitives[i].mu + t;
          frame.q[i] = quat_multiply(qrot, out.scene.primitives[i].q);
        }
      } else if (obj.motion.kind == MotionProgram::Kind::kHinge) {
        const double deg = k * obj.motion.hinge_deg_per_frame;
        out.hinge_deg[obj.label].push_back(deg);
        if (k == 0) continue;
        const Vec4 qrot = axis_angle_quat(Vec3(0, 1, 0), deg * kPi / 180.0);
        const Mat3 r = rotation_matrix(qrot);
        const auto& moving = out.hinge_moving[obj.label];
        for (size_t i = begin; i < end; ++i) {
          if (!moving[i - begin]) continue;
          frame.mu[i] = r * (out.scene.primitives[i].mu - obj.center) + obj.center;
          frame.q[i] = quat_multiply(qrot, out.scene.primitives[i].q);
        }
      }
    }
  }

  // Oracle renders: reference renderer, frames in parallel (each frame owns
  // its buffers, so the schedule cannot change the output).
  const int total = spec.frame_count;
#pragma omp parallel for schedule(dynamic) num_threads(worker_threads())
  for (int k = 0; k < total; ++k) {
    SynthFrame& frame = out.frames[k];
    Scene posed = out.scene;
    for (size_t i = 0; i < n; ++i) {
      posed.primitives[i].mu = frame.mu[i];
      posed.primitives[i].q = frame.q[i];
    }
    for (const Camera& cam : out.cams)
      frame.rgb.push_back(
          render_naive(posed, cam, {true, false, false, false}, spec.render).color);
    for (const auto& obj : spec.objects) {
      const auto [begin, end] = out.object_range[obj.label];
      std::vector<uint8_t> subset(n, 0);
      for (size_t i = begin; i < end; ++i) subset[i] = 1;
      RenderOverrides ov;
      ov.subset = &subset;
      auto& masks = frame.masks[obj.label];
      for (const Camera& cam : out.cams) {
        const GrayImage op =
            render_naive(posed, cam, {false, true, false, false}, spec.render, ov).opacity;
        Mask m(op.width, op.height);
        for (size_t i = 0; i < op.data.size(); ++i) m.data[i] = op.data[i] >= 0.5 ? 1 : 0;
        masks.push_back(std::move(m));
      }
    }
  }

  // Detection masks: rasterize the rest-pose footprint boxes so that every
  // pixel bounds_in_mask can sample for an object primitive is foreground.
  for (const auto& obj : spec.objects) {
    const auto [begin, end] = out.object_range[obj.label];
    auto& dmasks = out.detection_masks[obj.label];
    for (const Camera& cam : out.cams) {
      Mask m(spec.rig.width, spec.rig.height, 0);
      for (size_t i = begin; i < end; ++i) {
        const ProjectedSplat ps = splat_projection(out.scene.primitives[i], cam);
        if (!ps.valid) continue;
        const long x0 = std::max(0L, std::lround(ps.p[0] - ps.h[0]));
        const long x1 = std::min<long>(spec.rig.width - 1, std::lround(ps.p[0] + ps.h[0]));
        const long y0 = std::max(0L, std::lround(ps.p[1] - ps.h[1]));
        const long y1 = std::min<long>(spec.rig.height - 1, std::lround(ps.p[1] + ps.h[1]));
        for (long y = y0; y <= y1; ++y)
          for (long x = x0; x <= x1; ++x) m.at(static_cast<int>(x), static_cast<int>(y)) = 1;
      }
      dmasks.push_back(std::move(m));
    }
  }
  return out;
}

Scene perturb_scene(const Scene& scene, double sigma, uint64_t seed) {
  if (sigma < 0) throw DomainError("perturb_scene: sigma must be >= 0");
  Scene out = scene;
  if (sigma == 0) return out;
  Rng rng(seed);
  for (size_t i = 0; i < out.size(); ++i) {
    if (!out.dynamic_mask[i]) continue;
    out.primitives[i].mu += sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
  }
  return out;
}

ObservationSet to_observations(const SynthResult& synth, int32_t label) {
  if (!synth.object_range.count(label))
    throw DomainError("to_observations: no object with label " + std::to_string(label));
  ObservationSet obs;
  for (size_t k = 0; k < synth.frames.size(); ++k) {
    const SynthFrame& frame = synth.frames[k];
    std::vector<FrameObservation> per_view;
    const auto& masks = frame.masks.at(label);
    for (size_t v = 0; v < synth.cams.size(); ++v)
      per_view.push_back({frame.rgb[v], masks[v]});
    obs[static_cast<int>(k)] = std::move(per_view);
  }
  return obs;
}

}  // namespace msgfield
