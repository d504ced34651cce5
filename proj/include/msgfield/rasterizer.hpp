#pragma once

#include <optional>
#include <vector>

#include "msgfield/image.hpp"
#include "msgfield/projection.hpp"
#include "msgfield/scene.hpp"

namespace msgfield {

// Which output channels to produce. Disabled channels stay unallocated.
struct RenderChannels {
  bool color = true;
  bool opacity = true;
  bool depth = false;
  bool label = false;
};

// Blending semantics shared by the tiled renderer and the per-pixel reference
// renderer: primitives with alpha below alpha_cutoff or squared splat-frame
// distance above gauss_cutoff are skipped, and a pixel stops blending once
// its transmittance drops below transmittance_floor.
struct RenderConfig {
  double alpha_cutoff = 1.0 / 255.0;
  double gauss_cutoff = 9.0;  // 3 sigma
  double transmittance_floor = 1e-4;
  int tile_size = 16;
  Vec3 background = Vec3::Zero();
};

// Optional per-call replacements: paint every primitive one color, give each
// its own color, or render only a subset (flag per primitive).
struct RenderOverrides {
  std::optional<Vec3> uniform_color;
  const std::vector<Vec3>* colors = nullptr;
  const std::vector<uint8_t>* subset = nullptr;
};

struct RenderTarget {
  Image color;        // blended RGB over background
  GrayImage opacity;  // 1 - final transmittance
  GrayImage depth;    // blend-weighted camera-space depth of splat centers
  LabelImage label;   // label of the largest single blend weight, 0 if none
};

// Opaque token pairing a forward pass with a later backward pass; backward
// refuses to run against a scene/camera/config that no longer matches.
struct ForwardCache {
  uint64_t digest = 0;
  bool filled = false;
};

struct RenderGrads {
  std::vector<Vec3> d_mu;
  std::vector<Vec4> d_q;
  std::vector<double> d_o;
  // Per-primitive total blend weight, summed over every rendered pixel.
  std::vector<double> contrib;
};

// Tiled forward renderer (parallel over tiles, deterministic for any thread
// count). Pass a ForwardCache to arm a later backward() call.
RenderTarget render(const Scene& scene, const Camera& cam, const RenderChannels& channels = {},
                    const RenderConfig& cfg = {}, const RenderOverrides& ov = {},
                    ForwardCache* cache = nullptr);

// Reference semantics: every pixel tests every renderable primitive in full
// depth order, with no tiles, no footprint boxes, and the ray-splat value
// computed by direct plane intersection. Serial by design.
RenderTarget render_naive(const Scene& scene, const Camera& cam,
                          const RenderChannels& channels = {}, const RenderConfig& cfg = {},
                          const RenderOverrides& ov = {});

// Exact gradients of sum(d_color . color) + sum(d_opacity . opacity) w.r.t.
// each primitive's mu, q, o under forward semantics (cutoffs act as constant
// masks). Either upstream image may be empty (treated as zero). Throws
// StaleForward if the inputs do not match the paired forward pass.
RenderGrads backward(const Scene& scene, const Camera& cam, const Image& d_color,
                     const GrayImage& d_opacity, const ForwardCache& cache,
                     const RenderConfig& cfg = {}, const RenderOverrides& ov = {});

// Forward-only per-primitive blend weights; when restrict_pixels is given,
// only its foreground pixels are accumulated.
std::vector<double> blend_contributions(const Scene& scene, const Camera& cam,
                                        const RenderConfig& cfg = {},
                                        const RenderOverrides& ov = {},
                                        const Mask* restrict_pixels = nullptr);

// Worker-thread count for tiled kernels: MSGFIELD_THREADS if set, else the
// OpenMP default.
int worker_threads();

}  // namespace msgfield
