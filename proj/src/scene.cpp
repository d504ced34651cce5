#include "msgfield/scene.hpp"

#include <cmath>

namespace msgfield {

static bool finite3(const Vec3& v) {
  return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

SplatPrimitive make_primitive(const Vec3& mu, const Vec4& q, const Vec2& s, double o,
                              const Vec3& c, int32_t label) {
  if (!finite3(mu)) throw DomainError("primitive position must be finite");
  if (!(s[0] > 0.0) || !(s[1] > 0.0))
    throw DomainError("primitive scales must be positive, got (" + std::to_string(s[0]) + ", " +
                      std::to_string(s[1]) + ")");
  if (!std::isfinite(s[0]) || !std::isfinite(s[1]))
    throw DomainError("primitive scales must be finite");
  if (!(o >= 0.0 && o <= 1.0))
    throw DomainError("opacity must lie in [0,1], got " + std::to_string(o));
  for (int k = 0; k < 3; ++k)
    if (!(c[k] >= 0.0 && c[k] <= 1.0))
      throw DomainError("color channels must lie in [0,1], got " + std::to_string(c[k]));
  SplatPrimitive p;
  p.mu = mu;
  p.q = quat_normalized(q);  // throws DegenerateQuaternion (a DomainError) on zero norm
  p.s = s;
  p.o = o;
  p.c = c;
  p.label = label;
  return p;
}

void tangentials(const SplatPrimitive& prim, Vec3& tu, Vec3& tv) {
  tangentials(prim.q, tu, tv);
}

Mat4 Camera::view_matrix() const {
  Mat4 v = Mat4::Identity();
  v.block<3, 3>(0, 0) = rotation_matrix(q);
  v.block<3, 1>(0, 3) = t;
  return v;
}

Mat4 Camera::projection() const {
  Mat4 k = Mat4::Zero();
  k(0, 0) = 2.0 * fx / width;
  k(0, 2) = (2.0 * cx - width + 1.0) / width;
  k(1, 1) = 2.0 * fy / height;
  k(1, 2) = (2.0 * cy - height + 1.0) / height;
  k(2, 2) = (far_z + near_z) / (far_z - near_z);
  k(2, 3) = -2.0 * far_z * near_z / (far_z - near_z);
  k(3, 2) = 1.0;
  return k * view_matrix();
}

Mat4 Camera::pixel_projection() const {
  Mat4 ndc2pix = Mat4::Identity();
  ndc2pix(0, 0) = width / 2.0;
  ndc2pix(0, 3) = (width - 1) / 2.0;
  ndc2pix(1, 1) = height / 2.0;
  ndc2pix(1, 3) = (height - 1) / 2.0;
  return ndc2pix * projection();
}

Camera make_camera(int width, int height, double fx, double fy, double cx, double cy,
                   const Vec4& q, const Vec3& t, double near_z, double far_z) {
  if (width <= 0 || height <= 0) throw InvalidCamera("image dimensions must be positive");
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidCamera("focal lengths must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy))
    throw InvalidCamera("principal point must be finite");
  if (!(near_z > 0.0)) throw InvalidCamera("near plane must be positive");
  if (!(far_z > near_z)) throw InvalidCamera("far plane must exceed near plane");
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  try {
    cam.q = quat_normalized(q);
  } catch (const DegenerateQuaternion&) {
    throw InvalidCamera("camera rotation quaternion has zero norm");
  }
  cam.t = t;
  cam.near_z = near_z;
  cam.far_z = far_z;
  return cam;
}

Vec3 world_to_camera(const Camera& cam, const Vec3& point) {
  return rotation_matrix(cam.q) * point + cam.t;
}

void Scene::check_consistent() const {
  if (primitives.size() != dynamic_mask.size())
    throw ShapeMismatch("scene has " + std::to_string(primitives.size()) + " primitives but " +
                        std::to_string(dynamic_mask.size()) + " dynamic flags");
}

}  // namespace msgfield
