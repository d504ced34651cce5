#include <cmath>
#include <limits>

#include "doctest.h"
#include "msgfield/projection.hpp"
#include "msgfield/util.hpp"

using namespace msgfield;

namespace {

Camera basic_cam() {
  return make_camera(64, 64, 70, 70, 31.5, 31.5, Vec4(1, 0, 0, 0), Vec3::Zero(), 0.05, 50.0);
}

Vec4 random_unit_quat(Rng& rng) {
  Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  while (q.norm() < 1e-3) q = Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return quat_normalized(q);
}

// World point on the camera ray through pixel (px, py) at given depth.
Vec3 backproject(const Camera& cam, double px, double py, double depth) {
  const Vec3 cam_pt(depth * (px - cam.cx) / cam.fx, depth * (py - cam.cy) / cam.fy, depth);
  const Mat3 r = rotation_matrix(cam.q);
  return r.transpose() * (cam_pt - cam.t);
}

}  // namespace

TEST_CASE("on-axis splat projects to the principal point") {
  const Camera cam = basic_cam();
  const auto prim =
      make_primitive(Vec3(0, 0, 1), Vec4(1, 0, 0, 0), Vec2(0.05, 0.05), 1, Vec3::Zero());
  const auto ps = splat_projection(prim, cam);
  REQUIRE(ps.valid);
  CHECK(ps.p[0] == doctest::Approx(31.5).epsilon(1e-9));
  CHECK(ps.p[1] == doctest::Approx(31.5).epsilon(1e-9));
  CHECK(ps.depth == doctest::Approx(1.0));
  // a face-on splat at depth 1 spans fx * s * cutoff pixels
  CHECK(ps.h[0] == doctest::Approx(70 * 0.05 * 3).epsilon(1e-6));

  const auto ps_unit = splat_projection(prim, cam, true, 1.0);
  REQUIRE(ps_unit.valid);
  CHECK(ps_unit.h[0] == doctest::Approx(70 * 0.05).epsilon(1e-6));
}

TEST_CASE("splats behind or at the near plane are invalid") {
  const Camera cam = basic_cam();
  const auto behind =
      make_primitive(Vec3(0, 0, -1), Vec4(1, 0, 0, 0), Vec2(0.05, 0.05), 1, Vec3::Zero());
  CHECK_FALSE(splat_projection(behind, cam).valid);
  const auto at_origin =
      make_primitive(Vec3(0, 0, 0), Vec4(1, 0, 0, 0), Vec2(0.05, 0.05), 1, Vec3::Zero());
  CHECK_FALSE(splat_projection(at_origin, cam).valid);
  const auto in_front =
      make_primitive(Vec3(0, 0, 0.2), Vec4(1, 0, 0, 0), Vec2(0.05, 0.05), 1, Vec3::Zero());
  CHECK(splat_projection(in_front, cam).valid);
}

TEST_CASE("projection box bounds the ray-splat footprint") {
  Rng rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Camera cam = basic_cam();
    cam.q = random_unit_quat(rng);
    cam.t = Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.3;
    const double depth = rng.uniform(0.4, 4.0);
    const Vec3 mu = backproject(cam, rng.uniform(8, 55), rng.uniform(8, 55), depth);
    const auto prim = make_primitive(mu, random_unit_quat(rng),
                                     Vec2(rng.uniform(0.01, 0.2), rng.uniform(0.01, 0.2)),
                                     rng.uniform(0.2, 1.0), Vec3::Zero());
    const auto ps = splat_projection(prim, cam);  // bounds at the 3-sigma level set
    if (!ps.valid) continue;
    ++checked;
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const double g = ray_splat_gaussian_arg(prim, cam, x, y);
        if (g <= 9.0) {
          CHECK(x >= ps.p[0] - ps.h[0] - 1e-9);
          CHECK(x <= ps.p[0] + ps.h[0] + 1e-9);
          CHECK(y >= ps.p[1] - ps.h[1] - 1e-9);
          CHECK(y <= ps.p[1] + ps.h[1] + 1e-9);
        }
      }
    }
  }
  CHECK(checked > 60);  // most random draws must actually exercise the bound
}

TEST_CASE("ray_splat_gaussian_arg agrees with direct plane geometry") {
  const Camera cam = basic_cam();
  const auto prim =
      make_primitive(Vec3(0, 0, 1), Vec4(1, 0, 0, 0), Vec2(0.1, 0.2), 1, Vec3::Zero());
  for (const auto& px : {Vec2(31.5, 31.5), Vec2(40, 20), Vec2(10, 50)}) {
    const double xc = (px[0] - cam.cx) / cam.fx;
    const double yc = (px[1] - cam.cy) / cam.fy;
    const double expected = (xc / 0.1) * (xc / 0.1) + (yc / 0.2) * (yc / 0.2);
    CHECK(ray_splat_gaussian_arg(prim, cam, px[0], px[1]) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
  // splat rotated 90 deg about y is edge-on: the central ray runs parallel
  // to its plane and never intersects
  const auto edge_on = make_primitive(Vec3(0, 0, 1), Vec4(std::sqrt(0.5), 0, std::sqrt(0.5), 0),
                                      Vec2(0.1, 0.1), 1, Vec3::Zero());
  CHECK(std::isinf(ray_splat_gaussian_arg(edge_on, cam, cam.cx, cam.cy)));
}

TEST_CASE("bounds_in_mask corner and center semantics") {
  Mask mask(64, 64, 0);
  for (int y = 10; y <= 30; ++y)
    for (int x = 10; x <= 30; ++x) mask.at(x, y) = 1;

  ProjectedSplat ps;
  ps.valid = true;
  ps.p = Vec2(20, 20);
  ps.h = Vec2(5, 5);
  CHECK(bounds_in_mask(ps, mask));

  ps.p = Vec2(50, 50);  // fully on background
  CHECK_FALSE(bounds_in_mask(ps, mask));

  ps.p = Vec2(29, 20);  // straddles the mask edge
  CHECK_FALSE(bounds_in_mask(ps, mask));

  ps.p = Vec2(2, 20);  // corner off the image
  CHECK_FALSE(bounds_in_mask(ps, mask));

  ps.valid = false;
  CHECK_THROWS_AS(bounds_in_mask(ps, mask), DomainError);
}

TEST_CASE("to_ndc conventions") {
  const Camera cam = basic_cam();
  const Vec3 mid = to_ndc(cam, Vec3(0, 0, 10));
  CHECK(mid[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mid[1] == doctest::Approx(0.0).epsilon(1e-12));

  CHECK(to_ndc(cam, Vec3(0, 0, cam.near_z))[2] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(to_ndc(cam, Vec3(0, 0, cam.far_z))[2] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(to_ndc(cam, Vec3(0, 0, 0)), DegenerateProjection);

  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    Camera rc = basic_cam();
    rc.q = random_unit_quat(rng);
    rc.t = Vec3(rng.normal(), rng.normal(), rng.normal());
    const Vec3 p = backproject(rc, rng.uniform(0, 63), rng.uniform(0, 63),
                               rng.uniform(rc.near_z, rc.far_z));
    // frustum membership oracle: clip inequalities
    const Vec4 clip = rc.projection() * p.homogeneous();
    REQUIRE(clip[3] > 0);
    const bool inside = std::abs(clip[0]) <= clip[3] && std::abs(clip[1]) <= clip[3] &&
                        std::abs(clip[2]) <= clip[3];
    REQUIRE(inside);
    const Vec3 ndc = to_ndc(rc, p);
    CHECK(ndc.cwiseAbs().maxCoeff() <= 1.0 + 1e-9);
  }
}

TEST_CASE("occluding_primitives identifies blockers") {
  Scene scene;
  auto add = [&](const Vec3& mu, int32_t label) {
    scene.primitives.push_back(
        make_primitive(mu, Vec4(1, 0, 0, 0), Vec2(0.05, 0.05), 1, Vec3::Zero(), label));
    scene.dynamic_mask.push_back(0);
  };
  add(Vec3(0, 0, 2), 1);
  add(Vec3(0.02, 0, 2.1), 1);
  const Camera cam = basic_cam();

  CHECK(occluding_primitives(scene, 1, cam).empty());

  add(Vec3(0, 0, 1), 0);  // directly in front
  auto occ = occluding_primitives(scene, 1, cam);
  REQUIRE(occ.size() == 1);
  CHECK(occ[0] == 2);

  add(Vec3(0, 0, 3), 0);  // behind: cannot occlude
  occ = occluding_primitives(scene, 1, cam);
  REQUIRE(occ.size() == 1);
  CHECK(occ[0] == 2);

  // move the blocker behind the object: anti-monotone in depth
  scene.primitives[2].mu = Vec3(0, 0, 5);
  CHECK(occluding_primitives(scene, 1, cam).empty());

  CHECK_THROWS_AS(occluding_primitives(scene, 9, cam), EmptyObject);
}

TEST_CASE("select_views sorts by occlusion count, stable on ties") {
  Scene scene;
  auto add = [&](const Vec3& mu, int32_t label) {
    scene.primitives.push_back(
        make_primitive(mu, Vec4(1, 0, 0, 0), Vec2(0.05, 0.05), 1, Vec3::Zero(), label));
    scene.dynamic_mask.push_back(0);
  };
  add(Vec3(0, 0, 2), 1);
  add(Vec3(0, 0, 1), 0);  // blocks the straight-on view only

  const Camera straight = basic_cam();
  Camera side = basic_cam();
  // camera at (4, 0, 2) looking along world -x (+90 deg about y)
  side.q = Vec4(std::cos(M_PI / 4), 0, std::sin(M_PI / 4), 0);
  side.t = -(rotation_matrix(side.q) * Vec3(4, 0, 2));

  const std::vector<Camera> cams = {straight, side};
  const auto order = select_views(scene, 1, cams);
  REQUIRE(order.size() == 2);
  CHECK(order[0] == 1);
  CHECK(order[1] == 0);

  const std::vector<Camera> tied = {side, side};
  const auto tie_order = select_views(scene, 1, tied);
  CHECK(tie_order[0] == 0);
  CHECK(tie_order[1] == 1);

  CHECK_THROWS_AS(select_views(scene, 1, {}), DomainError);
}
