#pragma once

#include <vector>

#include "msgfield/image.hpp"
#include "msgfield/scene.hpp"

namespace msgfield {

// Screen-space footprint of one splat. T maps splat-local homogeneous plane
// coordinates (u,v,1) to clip coordinates: clip_j = T.col(j) . (u,v,1), with
// x/y already in pixels when built via pixel_projection(). p is the projected
// center and h the half extents of an axis-aligned box bounding the level set
// (u^2+v^2 = cutoff_radius^2) of the splat, both in the same x/y units as T.
struct ProjectedSplat {
  Mat34 T = Mat34::Zero();
  Vec2 p = Vec2::Zero();
  Vec2 h = Vec2::Zero();
  double d = 0.0;      // conic discriminant; negative for a usable ellipse
  double depth = 0.0;  // camera-space z of the splat center
  bool valid = false;
};

// Projects one splat. The box bounds the cutoff_radius level set (default 3,
// i.e. the rasterizer's cutoff), which for cutoff_radius = 1 reduces to the
// unit-disk dual-conic bound. valid is false when the center sits at or
// behind the near plane or the dual conic degenerates.
ProjectedSplat splat_projection(const SplatPrimitive& prim, const Camera& cam,
                                bool pixel_space = true, double cutoff_radius = 3.0);

// True iff the four corners and the center of the box [p +- h], rounded to
// pixel centers, all land on mask foreground. Any corner falling outside the
// image makes the result false.
bool bounds_in_mask(const ProjectedSplat& ps, const Mask& mask);

// Perspective-divided clip coordinates of a world point.
Vec3 to_ndc(const Camera& cam, const Vec3& mu);

// Indices (ascending) of non-object primitives that sit inside the object's
// padded NDC footprint and in front of its closest primitive.
std::vector<size_t> occluding_primitives(const Scene& scene, int32_t object_label,
                                         const Camera& cam, double pad = 0.02);

// Candidate camera indices, stably sorted by how many primitives occlude the
// object in each view (fewest first).
std::vector<size_t> select_views(const Scene& scene, int32_t object_label,
                                 const std::vector<Camera>& candidate_cams, double pad = 0.02);

// Gaussian argument (u/s_u)^2 + (v/s_v)^2 of the intersection between the ray
// through pixel (px, py) and the splat plane, computed by direct camera-space
// ray / plane geometry (no T matrix). Returns +inf for rays parallel to the
// plane or intersections behind the camera. Shared by the reference renderer
// and used as an independent oracle against the T-based path.
double ray_splat_gaussian_arg(const SplatPrimitive& prim, const Camera& cam, double px,
                              double py);

}  // namespace msgfield
