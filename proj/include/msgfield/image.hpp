#pragma once

#include <cstdint>
#include <vector>

#include "msgfield/errors.hpp"
#include "msgfield/types.hpp"

namespace msgfield {

// Row-major RGB image, interleaved doubles in [0,1] (not enforced; losses and
// io clamp where a format requires it).
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw ShapeMismatch("image dimensions must be positive");
    data.assign(static_cast<size_t>(w) * h * 3, fill);
  }

  size_t idx(int x, int y) const { return (static_cast<size_t>(y) * width + x) * 3; }
  double* px(int x, int y) { return data.data() + idx(x, y); }
  const double* px(int x, int y) const { return data.data() + idx(x, y); }

  Vec3 pixel(int x, int y) const {
    const double* p = px(x, y);
    return Vec3(p[0], p[1], p[2]);
  }
  void set_pixel(int x, int y, const Vec3& c) {
    double* p = px(x, y);
    p[0] = c[0]; p[1] = c[1]; p[2] = c[2];
  }

  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

// Single-channel double image (opacity, depth, per-pixel scalars).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw ShapeMismatch("image dimensions must be positive");
    data.assign(static_cast<size_t>(w) * h, fill);
  }

  double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  bool empty() const { return data.empty(); }
};

// Binary foreground mask. 1 = foreground.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int w, int h, uint8_t fill = 0) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw ShapeMismatch("mask dimensions must be positive");
    data.assign(static_cast<size_t>(w) * h, fill);
  }

  uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

// Per-pixel integer labels; 0 is reserved for "unlabeled / background".
struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<int32_t> data;

  LabelImage() = default;
  LabelImage(int w, int h, int32_t fill = 0) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw ShapeMismatch("label image dimensions must be positive");
    data.assign(static_cast<size_t>(w) * h, fill);
  }

  int32_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  int32_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
};

}  // namespace msgfield
