#include "msgfield/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace msgfield {

ProjectedSplat splat_projection(const SplatPrimitive& prim, const Camera& cam,
                                bool pixel_space, double cutoff_radius) {
  ProjectedSplat ps;
  ps.depth = world_to_camera(cam, prim.mu)[2];

  Vec3 tu, tv;
  tangentials(prim, tu, tv);
  Mat43 M = Mat43::Zero();
  M.block<3, 1>(0, 0) = prim.s[0] * tu;
  M.block<3, 1>(0, 1) = prim.s[1] * tv;
  M.block<3, 1>(0, 2) = prim.mu;
  M(3, 2) = 1.0;

  const Mat4 pfull = pixel_space ? cam.pixel_projection() : cam.projection();
  ps.T = (pfull * M).transpose();  // col j: (u,v,1)-coefficients of clip coord j

  if (!(ps.depth > cam.near_z)) return ps;

  // Dual conic of the level set u^2 + v^2 = r^2. The box edges are the
  // axis-aligned tangent lines of the projected ellipse.
  const double r2 = cutoff_radius * cutoff_radius;
  const Vec3 f(r2, r2, -1.0);
  const Vec3 t4 = ps.T.col(3);
  ps.d = f.dot(t4.cwiseProduct(t4));
  if (!(ps.d < -1e-12)) return ps;  // degenerate or not an in-front ellipse

  for (int i = 0; i < 2; ++i) {
    const Vec3 ti = ps.T.col(i);
    ps.p[i] = f.dot(ti.cwiseProduct(t4)) / ps.d;
    const double rad = ps.p[i] * ps.p[i] - f.dot(ti.cwiseProduct(ti)) / ps.d;
    if (!(rad >= 0.0)) return ps;
    ps.h[i] = std::sqrt(rad);
  }
  ps.valid = std::isfinite(ps.p[0]) && std::isfinite(ps.p[1]) && std::isfinite(ps.h[0]) &&
             std::isfinite(ps.h[1]);
  return ps;
}

bool bounds_in_mask(const ProjectedSplat& ps, const Mask& mask) {
  if (!ps.valid) throw DomainError("bounds_in_mask requires a valid projection");
  const double x0 = ps.p[0] - ps.h[0], x1 = ps.p[0] + ps.h[0];
  const double y0 = ps.p[1] - ps.h[1], y1 = ps.p[1] + ps.h[1];
  const double pts[5][2] = {{x0, y0}, {x1, y0}, {x0, y1}, {x1, y1}, {ps.p[0], ps.p[1]}};
  for (const auto& pt : pts) {
    const long xi = std::lround(pt[0]);
    const long yi = std::lround(pt[1]);
    if (!mask.in_bounds(static_cast<int>(xi), static_cast<int>(yi))) return false;
    if (!mask.at(static_cast<int>(xi), static_cast<int>(yi))) return false;
  }
  return true;
}

Vec3 to_ndc(const Camera& cam, const Vec3& mu) {
  const Vec4 clip = cam.projection() * mu.homogeneous();
  if (std::abs(clip[3]) < 1e-12)
    throw DegenerateProjection("clip-space w is " + std::to_string(clip[3]));
  return clip.head<3>() / clip[3];
}

std::vector<size_t> occluding_primitives(const Scene& scene, int32_t object_label,
                                         const Camera& cam, double pad) {
  scene.check_consistent();
  bool label_seen = false;
  Vec2 lo(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  double min_z = std::numeric_limits<double>::infinity();
  for (const auto& prim : scene.primitives) {
    if (prim.label != object_label) continue;
    label_seen = true;
    if (world_to_camera(cam, prim.mu)[2] < 1e-12) continue;  // unprojectable
    const Vec3 ndc = to_ndc(cam, prim.mu);
    lo = lo.cwiseMin(ndc.head<2>());
    hi = hi.cwiseMax(ndc.head<2>());
    min_z = std::min(min_z, ndc[2]);
  }
  if (!label_seen) throw EmptyObject("no primitive carries label " + std::to_string(object_label));

  std::vector<size_t> out;
  if (!std::isfinite(min_z)) return out;  // object has no camera-facing footprint
  lo.array() -= pad;
  hi.array() += pad;
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const auto& prim = scene.primitives[i];
    if (prim.label == object_label) continue;
    if (world_to_camera(cam, prim.mu)[2] < 1e-12) continue;
    const Vec3 ndc = to_ndc(cam, prim.mu);
    if (ndc[0] < lo[0] || ndc[0] > hi[0] || ndc[1] < lo[1] || ndc[1] > hi[1]) continue;
    if (ndc[2] < min_z) out.push_back(i);
  }
  return out;
}

std::vector<size_t> select_views(const Scene& scene, int32_t object_label,
                                 const std::vector<Camera>& candidate_cams, double pad) {
  if (candidate_cams.empty()) throw DomainError("select_views needs at least one candidate");
  std::vector<size_t> counts(candidate_cams.size());
  for (size_t i = 0; i < candidate_cams.size(); ++i)
    counts[i] = occluding_primitives(scene, object_label, candidate_cams[i], pad).size();
  std::vector<size_t> order(candidate_cams.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return counts[a] < counts[b]; });
  return order;
}

double ray_splat_gaussian_arg(const SplatPrimitive& prim, const Camera& cam, double px,
                              double py) {
  const Mat3 rc = rotation_matrix(cam.q);
  const Vec3 mu_c = rc * prim.mu + cam.t;
  Vec3 tu, tv;
  tangentials(prim, tu, tv);
  const Vec3 u_c = rc * tu;
  const Vec3 v_c = rc * tv;
  const Vec3 n_c = u_c.cross(v_c);

  const Vec3 dir((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
  const double denom = dir.dot(n_c);
  const double inf = std::numeric_limits<double>::infinity();
  if (std::abs(denom) < 1e-14) return inf;  // ray parallel to splat plane
  const double step = mu_c.dot(n_c) / denom;
  if (step <= 0.0) return inf;  // intersection behind the camera
  const Vec3 rel = step * dir - mu_c;
  const double u = rel.dot(u_c) / prim.s[0];
  const double v = rel.dot(v_c) / prim.s[1];
  return u * u + v * v;
}

}  // namespace msgfield
