#include <cmath>

#include "doctest.h"
#include "msgfield/errors.hpp"
#include "msgfield/projection.hpp"
#include "msgfield/semantics.hpp"
#include "msgfield/synth.hpp"

using namespace msgfield;

namespace {

SynthSpec base_spec() {
  SynthSpec spec;
  spec.seed = 11;
  spec.background_count = 6;
  spec.frame_count = 3;
  ObjectSpec obj;
  obj.shape = ClusterShape::kBox;
  obj.primitive_count = 54;
  obj.center = Vec3(0, 0, 2);
  obj.extent = 0.36;
  obj.label = 1;
  spec.objects.push_back(obj);
  return spec;
}

bool scenes_identical(const Scene& a, const Scene& b) {
  if (a.size() != b.size() || a.dynamic_mask != b.dynamic_mask) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    const auto& pa = a.primitives[i];
    const auto& pb = b.primitives[i];
    if (pa.mu != pb.mu || pa.q != pb.q || pa.s != pb.s || pa.o != pb.o || pa.c != pb.c ||
        pa.label != pb.label)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("generate is deterministic in the seed") {
  const SynthSpec spec = base_spec();
  const SynthResult a = generate(spec);
  const SynthResult b = generate(spec);
  CHECK(scenes_identical(a.scene, b.scene));
  REQUIRE(a.frames.size() == b.frames.size());
  for (size_t k = 0; k < a.frames.size(); ++k) {
    for (size_t v = 0; v < a.cams.size(); ++v)
      CHECK(a.frames[k].rgb[v].data == b.frames[k].rgb[v].data);
    CHECK(a.frames[k].masks.at(1)[0].data == b.frames[k].masks.at(1)[0].data);
  }
  CHECK(a.object_features.at(1) == b.object_features.at(1));
  CHECK(a.canon_features.size() == 4);
  for (const auto& v : a.canon_features) CHECK(std::abs(v.norm() - 1.0) < 1e-12);
  CHECK(a.object_features.at(1).size() == 16);

  // A different seed moves the geometry.
  SynthSpec other = spec;
  other.seed = 12;
  CHECK(!scenes_identical(a.scene, generate(other).scene));
}

TEST_CASE("static scenes render identical frames") {
  const SynthResult res = generate(base_spec());
  REQUIRE(res.frames.size() == 3);
  REQUIRE(res.cams.size() == 2);
  for (size_t k = 1; k < 3; ++k) {
    for (size_t v = 0; v < 2; ++v) CHECK(res.frames[k].rgb[v].data == res.frames[0].rgb[v].data);
    CHECK(res.frames[k].mu == res.frames[0].mu);
    CHECK(res.frames[k].masks.at(1)[1].data == res.frames[0].masks.at(1)[1].data);
  }
  // Static object: no dynamic primitives, no motion ground truth.
  for (uint8_t d : res.scene.dynamic_mask) CHECK(d == 0);
  CHECK(res.object_se3.empty());
  CHECK(res.hinge_deg.empty());
}

TEST_CASE("rigid translation program moves ground truth linearly") {
  SynthSpec spec = base_spec();
  spec.frame_count = 4;
  spec.objects[0].motion.kind = MotionProgram::Kind::kRigid;
  spec.objects[0].motion.translation_per_frame = Vec3(0.1, 0, 0);
  const SynthResult res = generate(spec);

  const auto [begin, end] = res.object_range.at(1);
  for (int k = 0; k < 4; ++k) {
    const Mat4 m = res.object_se3.at(1)[k];
    CHECK((m.block<3, 3>(0, 0) - Mat3::Identity()).norm() == 0.0);
    CHECK((m.block<3, 1>(0, 3) - Vec3(0.1 * k, 0, 0)).norm() == 0.0);
    for (size_t i = begin; i < end; ++i) {
      const Vec3 expect = res.scene.primitives[i].mu + Vec3(0.1 * k, 0, 0);
      CHECK((res.frames[k].mu[i] - expect).norm() < 1e-12);
      CHECK(res.frames[k].q[i] == res.scene.primitives[i].q);
    }
  }
  // Background primitives never move.
  for (size_t i = end; i < res.scene.size(); ++i) {
    CHECK(res.frames[3].mu[i] == res.scene.primitives[i].mu);
    CHECK(res.scene.dynamic_mask[i] == 0);
  }
  for (size_t i = begin; i < end; ++i) CHECK(res.scene.dynamic_mask[i] == 1);
}

TEST_CASE("rigid rotation composes about the object centroid") {
  SynthSpec spec = base_spec();
  spec.frame_count = 2;
  spec.objects[0].motion.kind = MotionProgram::Kind::kRigid;
  spec.objects[0].motion.rotation_axis = Vec3(0, 1, 0);
  spec.objects[0].motion.rotation_deg_per_frame = 15.0;
  const SynthResult res = generate(spec);

  const auto [begin, end] = res.object_range.at(1);
  Vec3 centroid = Vec3::Zero();
  for (size_t i = begin; i < end; ++i) centroid += res.scene.primitives[i].mu;
  centroid /= static_cast<double>(end - begin);

  // Distances to the centroid are preserved and the SE(3) reproduces the
  // per-primitive ground truth.
  const Mat4 m = res.object_se3.at(1)[1];
  for (size_t i = begin; i < end; ++i) {
    const Vec3 rest = res.scene.primitives[i].mu;
    const Vec3 posed = res.frames[1].mu[i];
    CHECK(std::abs((posed - centroid).norm() - (rest - centroid).norm()) < 1e-12);
    const Vec3 via_se3 = m.block<3, 3>(0, 0) * rest + m.block<3, 1>(0, 3);
    CHECK((posed - via_se3).norm() < 1e-12);
  }
  // The rotation really is 15 degrees.
  const double trace = m.block<3, 3>(0, 0).trace();
  const double angle = std::acos(std::clamp(0.5 * (trace - 1.0), -1.0, 1.0)) * 180.0 / 3.14159265358979323846;
  CHECK(angle == doctest::Approx(15.0).epsilon(1e-10));
}

TEST_CASE("hinge program swings only the moving plate") {
  SynthSpec spec = base_spec();
  spec.frame_count = 3;
  spec.objects[0].shape = ClusterShape::kHinge;
  spec.objects[0].primitive_count = 72;
  spec.objects[0].motion.kind = MotionProgram::Kind::kHinge;
  spec.objects[0].motion.hinge_deg_per_frame = 10.0;
  const SynthResult res = generate(spec);

  const auto [begin, end] = res.object_range.at(1);
  const auto& moving = res.hinge_moving.at(1);
  REQUIRE(moving.size() == end - begin);
  CHECK(res.hinge_deg.at(1) == std::vector<double>{0.0, 10.0, 20.0});

  size_t moved = 0, still = 0;
  const Vec3 center = spec.objects[0].center;
  for (size_t i = begin; i < end; ++i) {
    const Vec3 rest = res.scene.primitives[i].mu;
    const Vec3 posed = res.frames[2].mu[i];
    if (moving[i - begin]) {
      ++moved;
      CHECK((posed - rest).norm() > 1e-3);
      // Hinge rotation about the y-axis through the shared edge preserves
      // the distance to that axis and the y-coordinate.
      const Vec3 rel_rest = rest - center;
      const Vec3 rel_posed = posed - center;
      CHECK(std::hypot(rel_posed[0], rel_posed[2]) ==
            doctest::Approx(std::hypot(rel_rest[0], rel_rest[2])).epsilon(1e-12));
      CHECK(rel_posed[1] == doctest::Approx(rel_rest[1]).epsilon(1e-12));
    } else {
      ++still;
      CHECK(posed == rest);
      CHECK(res.frames[2].q[i] == res.scene.primitives[i].q);
    }
  }
  CHECK(moved == still);
  CHECK(moved > 0);
  // The whole hinge object is optimizable.
  for (size_t i = begin; i < end; ++i) CHECK(res.scene.dynamic_mask[i] == 1);
}

TEST_CASE("masks equal the thresholded object-only opacity render") {
  SynthSpec spec = base_spec();
  spec.frame_count = 2;
  spec.objects[0].motion.kind = MotionProgram::Kind::kRigid;
  spec.objects[0].motion.translation_per_frame = Vec3(0.05, 0.02, 0);
  const SynthResult res = generate(spec);

  for (size_t k = 0; k < res.frames.size(); ++k) {
    Scene posed = res.scene;
    for (size_t i = 0; i < posed.size(); ++i) {
      posed.primitives[i].mu = res.frames[k].mu[i];
      posed.primitives[i].q = res.frames[k].q[i];
    }
    const auto [begin, end] = res.object_range.at(1);
    std::vector<uint8_t> subset(posed.size(), 0);
    for (size_t i = begin; i < end; ++i) subset[i] = 1;
    RenderOverrides ov;
    ov.subset = &subset;
    for (size_t v = 0; v < res.cams.size(); ++v) {
      const GrayImage op =
          render_naive(posed, res.cams[v], {false, true, false, false}, spec.render, ov).opacity;
      const Mask& stored = res.frames[k].masks.at(1)[v];
      REQUIRE(stored.data.size() == op.data.size());
      size_t fg = 0;
      for (size_t px = 0; px < op.data.size(); ++px) {
        CHECK(stored.data[px] == (op.data[px] >= 0.5 ? 1 : 0));
        fg += stored.data[px];
      }
      CHECK(fg > 0);  // the object is visible from the rig
    }
  }
}

TEST_CASE("ground-truth poses replayed through apply_motion reproduce the observations") {
  SynthSpec spec = base_spec();
  spec.frame_count = 3;
  spec.objects[0].motion.kind = MotionProgram::Kind::kRigid;
  spec.objects[0].motion.translation_per_frame = Vec3(0.04, 0, -0.02);
  spec.objects[0].motion.rotation_axis = Vec3(0, 1, 0);
  spec.objects[0].motion.rotation_deg_per_frame = 6.0;
  const SynthResult res = generate(spec);

  for (size_t k = 0; k < res.frames.size(); ++k) {
    Scene replay = res.scene;
    for (size_t i = 0; i < replay.size(); ++i) {
      const Vec3 dmu = res.frames[k].mu[i] - res.scene.primitives[i].mu;
      const Vec4 dq = res.frames[k].q[i] - res.scene.primitives[i].q;
      replay.primitives[i] = apply_motion(replay.primitives[i], dmu, dq);
    }
    for (size_t v = 0; v < res.cams.size(); ++v) {
      const Image img =
          render_naive(replay, res.cams[v], {true, false, false, false}, spec.render).color;
      double max_err = 0;
      for (size_t px = 0; px < img.data.size(); ++px)
        max_err = std::max(max_err, std::abs(img.data[px] - res.frames[k].rgb[v].data[px]));
      CHECK(max_err < 1e-6);
    }
  }
}

TEST_CASE("rig cameras aim at the rig center from both azimuths") {
  const SynthSpec spec = base_spec();
  const SynthResult res = generate(spec);
  REQUIRE(res.cams.size() == 2);
  for (const Camera& cam : res.cams) {
    const Vec3 c = world_to_camera(cam, spec.rig.center);
    CHECK(c[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c[2] == doctest::Approx(spec.rig.radius).epsilon(1e-12));
  }
  // The two views differ.
  CHECK(res.frames[0].rgb[0].data != res.frames[0].rgb[1].data);
}

TEST_CASE("sphere shell builder places primitives on the shell") {
  SynthSpec spec = base_spec();
  spec.objects[0].shape = ClusterShape::kSphereShell;
  spec.objects[0].primitive_count = 80;
  const SynthResult res = generate(spec);
  const auto [begin, end] = res.object_range.at(1);
  CHECK(end - begin == 80);
  for (size_t i = begin; i < end; ++i) {
    const double r = (res.scene.primitives[i].mu - spec.objects[0].center).norm();
    CHECK(r == doctest::Approx(0.5 * spec.objects[0].extent).epsilon(1e-9));
  }
}

TEST_CASE("perturb_scene is seeded noise on dynamic positions only") {
  SynthSpec spec = base_spec();
  spec.objects[0].motion.kind = MotionProgram::Kind::kRigid;
  const SynthResult res = generate(spec);

  CHECK(scenes_identical(perturb_scene(res.scene, 0.0, 9), res.scene));
  const Scene p1 = perturb_scene(res.scene, 0.01, 9);
  const Scene p2 = perturb_scene(res.scene, 0.01, 9);
  CHECK(scenes_identical(p1, p2));
  CHECK(!scenes_identical(p1, res.scene));
  const auto [begin, end] = res.object_range.at(1);
  for (size_t i = 0; i < res.scene.size(); ++i) {
    const bool dyn = res.scene.dynamic_mask[i] != 0;
    CHECK((p1.primitives[i].mu != res.scene.primitives[i].mu) == dyn);
    CHECK(p1.primitives[i].q == res.scene.primitives[i].q);
  }

  // Static-only scenes are untouched.
  const SynthResult stat = generate(base_spec());
  CHECK(scenes_identical(perturb_scene(stat.scene, 0.5, 3), stat.scene));

  // The noise is centered: over many primitives the mean displacement is
  // far below the scale.
  Scene big;
  for (int i = 0; i < 10000; ++i) {
    big.primitives.push_back(make_primitive(Vec3(0, 0, 5), Vec4(1, 0, 0, 0), Vec2(0.1, 0.1), 0.5,
                                            Vec3(0.5, 0.5, 0.5), 0));
    big.dynamic_mask.push_back(1);
  }
  const Scene noisy = perturb_scene(big, 0.2, 77);
  Vec3 mean = Vec3::Zero();
  for (size_t i = 0; i < big.size(); ++i) mean += noisy.primitives[i].mu - big.primitives[i].mu;
  mean /= 10000.0;
  CHECK(mean.norm() < 0.05 * 0.2);

  CHECK_THROWS_AS(perturb_scene(big, -1.0, 0), DomainError);
}

TEST_CASE("detection masks contain every footprint sample of their object") {
  SynthSpec spec = base_spec();
  ObjectSpec second;
  second.shape = ClusterShape::kSphereShell;
  second.primitive_count = 80;
  second.center = Vec3(0.45, 0.05, 2.1);
  second.extent = 0.3;
  second.label = 2;
  spec.objects.push_back(second);
  spec.objects[0].center = Vec3(-0.4, 0, 2);
  const SynthResult res = generate(spec);

  for (const auto& [label, range] : res.object_range) {
    REQUIRE(res.detection_masks.count(label));
    for (size_t v = 0; v < res.cams.size(); ++v) {
      const Mask& dm = res.detection_masks.at(label)[v];
      for (size_t i = range.first; i < range.second; ++i) {
        const ProjectedSplat ps = splat_projection(res.scene.primitives[i], res.cams[v]);
        REQUIRE(ps.valid);
        CHECK(bounds_in_mask(ps, dm));
      }
      // Generous but not degenerate: a strict superset of the silhouette,
      // still far from the full frame.
      const Mask& tight = res.frames[0].masks.at(label)[v];
      size_t d_fg = 0, t_fg = 0, covered = 0;
      for (size_t px = 0; px < dm.data.size(); ++px) {
        d_fg += dm.data[px];
        t_fg += tight.data[px];
        covered += tight.data[px] && dm.data[px];
      }
      CHECK(covered == t_fg);
      CHECK(d_fg > t_fg);
      CHECK(d_fg < dm.data.size() / 2);
    }
  }
}

TEST_CASE("distilling from detection masks recovers the generated labels exactly") {
  SynthSpec spec = base_spec();
  ObjectSpec second;
  second.shape = ClusterShape::kSphereShell;
  second.primitive_count = 80;
  second.center = Vec3(0.45, 0.05, 2.1);
  second.extent = 0.3;
  second.label = 2;
  spec.objects.push_back(second);
  spec.objects[0].center = Vec3(-0.4, 0, 2);
  const SynthResult res = generate(spec);

  // Strip the labels, then ask distill to rebuild them from the masks.
  Scene blank = res.scene;
  for (auto& p : blank.primitives) p.label = 0;

  DetectionInput det;
  det.features = res.object_features;
  det.canon = res.canon_features;
  std::map<std::string, Camera> cams;
  for (size_t v = 0; v < res.cams.size(); ++v) {
    const std::string id = "cam" + std::to_string(v);
    DetectionView view;
    view.camera_id = id;
    for (const auto& [label, masks] : res.detection_masks) view.masks[label] = masks[v];
    det.views.push_back(std::move(view));
    cams[id] = res.cams[v];
  }

  const DistillResult out = distill(blank, det, cams, 1e-4, spec.render);
  for (size_t i = 0; i < res.scene.size(); ++i)
    CHECK(out.scene.primitives[i].label == res.scene.primitives[i].label);
}

TEST_CASE("to_observations packs rgb and the object's masks per timestep") {
  SynthSpec spec = base_spec();
  spec.frame_count = 2;
  const SynthResult res = generate(spec);
  const ObservationSet obs = to_observations(res, 1);
  REQUIRE(obs.size() == 2);
  REQUIRE(obs.at(0).size() == 2);
  CHECK(obs.at(0)[0].rgb.data == res.frames[0].rgb[0].data);
  CHECK(obs.at(1)[1].rgb.data == res.frames[1].rgb[1].data);
  CHECK(obs.at(1)[0].mask.data == res.frames[1].masks.at(1)[0].data);
  CHECK_THROWS_AS(to_observations(res, 5), DomainError);
}

TEST_CASE("generate validates its spec") {
  SynthSpec spec = base_spec();
  spec.frame_count = 0;
  CHECK_THROWS_AS(generate(spec), SynthSpecError);

  spec = base_spec();
  spec.objects.clear();
  spec.background_count = 0;
  CHECK_THROWS_AS(generate(spec), SynthSpecError);

  spec = base_spec();
  spec.objects[0].label = 0;
  CHECK_THROWS_AS(generate(spec), SynthSpecError);

  spec = base_spec();
  spec.objects.push_back(spec.objects[0]);  // duplicate label
  CHECK_THROWS_AS(generate(spec), SynthSpecError);

  spec = base_spec();
  spec.objects[0].primitive_count = 4;
  CHECK_THROWS_AS(generate(spec), SynthSpecError);

  spec = base_spec();
  spec.objects[0].extent = 0.0;
  CHECK_THROWS_AS(generate(spec), SynthSpecError);

  spec = base_spec();
  spec.objects[0].motion.kind = MotionProgram::Kind::kHinge;  // box shape
  CHECK_THROWS_AS(generate(spec), SynthSpecError);

  spec = base_spec();
  spec.objects[0].motion.kind = MotionProgram::Kind::kRigid;
  spec.objects[0].motion.rotation_deg_per_frame = 5.0;
  spec.objects[0].motion.rotation_axis = Vec3::Zero();
  CHECK_THROWS_AS(generate(spec), SynthSpecError);

  spec = base_spec();
  spec.rig.azimuth_deg.clear();
  CHECK_THROWS_AS(generate(spec), SynthSpecError);

  spec = base_spec();
  spec.rig.near_z = 10.0;
  spec.rig.far_z = 1.0;
  CHECK_THROWS_AS(generate(spec), SynthSpecError);
}
