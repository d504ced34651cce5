#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "msgfield/errors.hpp"

namespace msgfield {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Mat43 = Eigen::Matrix<double, 4, 3>;

// Quaternions are stored (w, x, y, z) and composed with the Hamilton product.
// All rotation helpers normalize internally, so callers may hand in raw
// (unnormalized) parameter vectors, e.g. mid-optimization.

inline Vec4 quat_identity() { return Vec4(1.0, 0.0, 0.0, 0.0); }

inline Vec4 quat_normalized(const Vec4& q) {
  const double n = q.norm();
  if (!(n > 1e-12)) throw DegenerateQuaternion("quaternion norm too small: " + std::to_string(n));
  // Idempotent: near-unit input is returned bit-for-bit, so values that went
  // through a save/load round trip are not perturbed again.
  if (std::abs(n - 1.0) <= 1e-8) return q;
  return q / n;
}

// d normalize(q) / dq = (I - qhat qhat^T) / |q|
inline Mat4 quat_normalize_jacobian(const Vec4& q) {
  const double n = q.norm();
  if (!(n > 1e-12)) throw DegenerateQuaternion("quaternion norm too small: " + std::to_string(n));
  const Vec4 qh = q / n;
  return (Mat4::Identity() - qh * qh.transpose()) / n;
}

inline Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
  return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

// Matrix form of right-multiplication: right_mult_matrix(b) * a == a x b.
inline Mat4 right_mult_matrix(const Vec4& b) {
  Mat4 m;
  m << b[0], -b[1], -b[2], -b[3],
       b[1],  b[0],  b[3], -b[2],
       b[2], -b[3],  b[0],  b[1],
       b[3],  b[2], -b[1],  b[0];
  return m;
}

inline Mat3 rotation_matrix(const Vec4& q_raw) {
  const Vec4 q = quat_normalized(q_raw);
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
       2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y);
  return r;
}

// First two columns of rotation_matrix(q): the splat's in-plane axes.
inline void tangentials(const Vec4& q_raw, Vec3& tu, Vec3& tv) {
  const Mat3 r = rotation_matrix(q_raw);
  tu = r.col(0);
  tv = r.col(1);
}

// d t_u / d qhat for a unit quaternion qhat (w,x,y,z), rows are xyz of t_u.
inline Mat34 d_tu_d_unit_quat(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat34 j;
  j << 0,      0,      -4 * y, -4 * z,
       2 * z,  2 * y,   2 * x,  2 * w,
      -2 * y,  2 * z,  -2 * w,  2 * x;
  return j;
}

inline Mat34 d_tv_d_unit_quat(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat34 j;
  j << -2 * z,  2 * y,  2 * x, -2 * w,
        0,     -4 * x,  0,     -4 * z,
        2 * x,  2 * w,  2 * z,  2 * y;
  return j;
}

// d (R(qhat) v) / d qhat for a unit quaternion and a fixed vector v. Valid as
// an embedding-space representative: compose with quat_normalize_jacobian to
// get derivatives w.r.t. raw parameters.
inline Mat34 d_rotated_vec_d_unit_quat(const Vec4& q, const Vec3& v) {
  const double w = q[0];
  const Vec3 u(q[1], q[2], q[3]);
  Mat3 vx;
  vx << 0, -v[2], v[1],
        v[2], 0, -v[0],
       -v[1], v[0], 0;
  Mat34 j;
  j.col(0) = 2.0 * u.cross(v);
  j.block<3, 3>(0, 1) =
      2.0 * (u.dot(v) * Mat3::Identity() + u * v.transpose() - 2.0 * v * u.transpose() - w * vx);
  return j;
}

// Chain through internal normalization: derivative of the tangentials with
// respect to the raw quaternion parameters.
inline Mat34 d_tu_dq(const Vec4& q_raw) {
  return d_tu_d_unit_quat(quat_normalized(q_raw)) * quat_normalize_jacobian(q_raw);
}

inline Mat34 d_tv_dq(const Vec4& q_raw) {
  return d_tv_d_unit_quat(quat_normalized(q_raw)) * quat_normalize_jacobian(q_raw);
}

}  // namespace msgfield
