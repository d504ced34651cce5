#pragma once

#include <cstdint>
#include <vector>

#include "msgfield/types.hpp"

namespace msgfield {

// A planar (2D) Gaussian splat: position, orientation (first two rotation
// columns span the splat plane), per-axis scale, opacity, color, and an
// integer object label (0 = background / unlabeled).
struct SplatPrimitive {
  Vec3 mu = Vec3::Zero();
  Vec4 q = Vec4(1, 0, 0, 0);  // (w,x,y,z)
  Vec2 s = Vec2(1, 1);
  double o = 1.0;
  Vec3 c = Vec3::Zero();
  int32_t label = 0;
};

SplatPrimitive make_primitive(const Vec3& mu, const Vec4& q, const Vec2& s, double o,
                              const Vec3& c, int32_t label = 0);

// In-plane axes of the splat (columns 0 and 1 of the rotation matrix).
void tangentials(const SplatPrimitive& prim, Vec3& tu, Vec3& tv);

// Pinhole camera with a world-to-camera rigid pose. The clip convention is
// OpenGL-like: visible depths map to ndc z in [-1, 1] (near -> -1) and pixel
// centers sit at integer coordinates, (0,0) being the top-left pixel.
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Vec4 q = Vec4(1, 0, 0, 0);  // world-to-camera rotation
  Vec3 t = Vec3::Zero();      // world-to-camera translation
  double near_z = 0.01;
  double far_z = 100.0;

  // 4x4 world -> camera rigid transform.
  Mat4 view_matrix() const;
  // 4x4 homogeneous world -> clip-space projection (includes the pose).
  Mat4 projection() const;
  // projection() composed with the ndc -> pixel mapping on x/y. Used to build
  // splat transforms directly in pixel coordinates.
  Mat4 pixel_projection() const;
};

Camera make_camera(int width, int height, double fx, double fy, double cx, double cy,
                   const Vec4& q, const Vec3& t, double near_z, double far_z);

Vec3 world_to_camera(const Camera& cam, const Vec3& point);

struct Scene {
  std::vector<SplatPrimitive> primitives;
  // true = primitive is optimized by the motion stage; false = held static.
  std::vector<uint8_t> dynamic_mask;

  size_t size() const { return primitives.size(); }
  void check_consistent() const;
};

}  // namespace msgfield
