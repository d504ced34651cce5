#include "msgfield/rasterizer.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "msgfield/util.hpp"

namespace msgfield {

int worker_threads() {
  if (const char* env = std::getenv("MSGFIELD_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return omp_get_max_threads();
}

namespace {

// One renderable primitive after projection, with per-call color overrides
// applied. Kept as flat copies for locality in the pixel loops.
struct PrimView {
  size_t index = 0;
  ProjectedSplat ps;
  Vec3 color = Vec3::Zero();
  double o = 0.0;
  int32_t label = 0;
};

void check_overrides(const Scene& scene, const RenderOverrides& ov) {
  if (ov.subset && ov.subset->size() != scene.size())
    throw ShapeMismatch("subset override size differs from primitive count");
  if (ov.colors && ov.colors->size() != scene.size())
    throw ShapeMismatch("color override size differs from primitive count");
}

// Renderable primitives, front-to-back (camera depth of the center, then
// scene index — a total order, so storage order never matters).
std::vector<PrimView> project_sorted(const Scene& scene, const Camera& cam,
                                     const RenderConfig& cfg, const RenderOverrides& ov) {
  scene.check_consistent();
  check_overrides(scene, ov);
  const double cutoff_radius = std::sqrt(cfg.gauss_cutoff);
  std::vector<PrimView> views;
  views.reserve(scene.size());
  for (size_t i = 0; i < scene.size(); ++i) {
    if (ov.subset && !(*ov.subset)[i]) continue;
    const SplatPrimitive& prim = scene.primitives[i];
    PrimView v;
    v.ps = splat_projection(prim, cam, true, cutoff_radius);
    if (!v.ps.valid) continue;
    v.index = i;
    v.color = ov.colors ? (*ov.colors)[i] : (ov.uniform_color ? *ov.uniform_color : prim.c);
    v.o = prim.o;
    v.label = prim.label;
    views.push_back(v);
  }
  std::sort(views.begin(), views.end(), [](const PrimView& a, const PrimView& b) {
    if (a.ps.depth != b.ps.depth) return a.ps.depth < b.ps.depth;
    return a.index < b.index;
  });
  return views;
}

struct TileGrid {
  int tile = 16;
  int nx = 0, ny = 0;
  std::vector<std::vector<int>> bins;  // per tile, view indices in depth order
};

TileGrid build_bins(const std::vector<PrimView>& views, int width, int height, int tile) {
  if (tile <= 0) throw DomainError("tile size must be positive");
  TileGrid grid;
  grid.tile = tile;
  grid.nx = (width + tile - 1) / tile;
  grid.ny = (height + tile - 1) / tile;
  grid.bins.assign(static_cast<size_t>(grid.nx) * grid.ny, {});
  for (int vi = 0; vi < static_cast<int>(views.size()); ++vi) {
    const ProjectedSplat& ps = views[vi].ps;
    int ix0 = static_cast<int>(std::ceil(ps.p[0] - ps.h[0]));
    int ix1 = static_cast<int>(std::floor(ps.p[0] + ps.h[0]));
    int iy0 = static_cast<int>(std::ceil(ps.p[1] - ps.h[1]));
    int iy1 = static_cast<int>(std::floor(ps.p[1] + ps.h[1]));
    ix0 = std::max(ix0, 0);
    iy0 = std::max(iy0, 0);
    ix1 = std::min(ix1, width - 1);
    iy1 = std::min(iy1, height - 1);
    if (ix0 > ix1 || iy0 > iy1) continue;
    for (int ty = iy0 / tile; ty <= iy1 / tile; ++ty)
      for (int tx = ix0 / tile; tx <= ix1 / tile; ++tx)
        grid.bins[static_cast<size_t>(ty) * grid.nx + tx].push_back(vi);
  }
  return grid;
}

// Splat-frame coordinates of the pixel ray's plane intersection, from the
// projective transform. Returns false for a numerically degenerate solve.
inline bool splat_uv(const ProjectedSplat& ps, double x, double y, Vec3& k, Vec3& l, Vec3& n,
                     double& u, double& v) {
  k = x * ps.T.col(3) - ps.T.col(0);
  l = y * ps.T.col(3) - ps.T.col(1);
  n = k.cross(l);
  if (std::abs(n[2]) < 1e-18) return false;
  u = n[0] / n[2];
  v = n[1] / n[2];
  return true;
}

uint64_t forward_digest(const Scene& scene, const Camera& cam, const RenderConfig& cfg,
                        const RenderOverrides& ov) {
  Digest d;
  d.i64(static_cast<int64_t>(scene.size()));
  for (const auto& p : scene.primitives) {
    for (int i = 0; i < 3; ++i) d.f64(p.mu[i]);
    for (int i = 0; i < 4; ++i) d.f64(p.q[i]);
    d.f64(p.s[0]);
    d.f64(p.s[1]);
    d.f64(p.o);
    for (int i = 0; i < 3; ++i) d.f64(p.c[i]);
    d.i64(p.label);
  }
  d.i64(cam.width);
  d.i64(cam.height);
  d.f64(cam.fx);
  d.f64(cam.fy);
  d.f64(cam.cx);
  d.f64(cam.cy);
  for (int i = 0; i < 4; ++i) d.f64(cam.q[i]);
  for (int i = 0; i < 3; ++i) d.f64(cam.t[i]);
  d.f64(cam.near_z);
  d.f64(cam.far_z);
  d.f64(cfg.alpha_cutoff);
  d.f64(cfg.gauss_cutoff);
  d.f64(cfg.transmittance_floor);
  d.i64(cfg.tile_size);
  for (int i = 0; i < 3; ++i) d.f64(cfg.background[i]);
  d.i64(ov.uniform_color ? 1 : 0);
  if (ov.uniform_color)
    for (int i = 0; i < 3; ++i) d.f64((*ov.uniform_color)[i]);
  if (ov.colors)
    for (const auto& c : *ov.colors)
      for (int i = 0; i < 3; ++i) d.f64(c[i]);
  if (ov.subset)
    for (uint8_t b : *ov.subset) d.i64(b);
  return d.value();
}

RenderTarget alloc_target(int width, int height, const RenderChannels& ch) {
  RenderTarget rt;
  if (ch.color) rt.color = Image(width, height);
  if (ch.opacity) rt.opacity = GrayImage(width, height);
  if (ch.depth) rt.depth = GrayImage(width, height);
  if (ch.label) rt.label = LabelImage(width, height);
  return rt;
}

void write_pixel(RenderTarget& rt, const RenderChannels& ch, const RenderConfig& cfg, int x,
                 int y, const Vec3& col, double tr, double dep, int32_t lab) {
  if (ch.color) rt.color.set_pixel(x, y, col + tr * cfg.background);
  if (ch.opacity) rt.opacity.at(x, y) = 1.0 - tr;
  if (ch.depth) rt.depth.at(x, y) = dep;
  if (ch.label) rt.label.at(x, y) = lab;
}

}  // namespace

RenderTarget render(const Scene& scene, const Camera& cam, const RenderChannels& channels,
                    const RenderConfig& cfg, const RenderOverrides& ov, ForwardCache* cache) {
  const auto views = project_sorted(scene, cam, cfg, ov);
  const TileGrid grid = build_bins(views, cam.width, cam.height, cfg.tile_size);
  RenderTarget rt = alloc_target(cam.width, cam.height, channels);
  const int n_tiles = grid.nx * grid.ny;

#pragma omp parallel for schedule(dynamic) num_threads(worker_threads())
  for (int tile = 0; tile < n_tiles; ++tile) {
    const auto& bin = grid.bins[tile];
    const int x0 = (tile % grid.nx) * grid.tile;
    const int y0 = (tile / grid.nx) * grid.tile;
    const int x1 = std::min(cam.width, x0 + grid.tile);
    const int y1 = std::min(cam.height, y0 + grid.tile);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        double tr = 1.0, dep = 0.0, best_w = 0.0;
        Vec3 col = Vec3::Zero();
        int32_t lab = 0;
        for (int vi : bin) {
          const PrimView& v = views[vi];
          Vec3 k, l, n;
          double u, vv;
          if (!splat_uv(v.ps, x, y, k, l, n, u, vv)) continue;
          const double g = u * u + vv * vv;
          if (g > cfg.gauss_cutoff) continue;
          const double alpha = v.o * std::exp(-0.5 * g);
          if (alpha < cfg.alpha_cutoff) continue;
          const double w = alpha * tr;
          col += w * v.color;
          dep += w * v.ps.depth;
          if (w > best_w) {
            best_w = w;
            lab = v.label;
          }
          tr *= 1.0 - alpha;
          if (tr < cfg.transmittance_floor) break;
        }
        write_pixel(rt, channels, cfg, x, y, col, tr, dep, lab);
      }
    }
  }

  if (cache) {
    cache->digest = forward_digest(scene, cam, cfg, ov);
    cache->filled = true;
  }
  return rt;
}

RenderTarget render_naive(const Scene& scene, const Camera& cam, const RenderChannels& channels,
                          const RenderConfig& cfg, const RenderOverrides& ov) {
  const auto views = project_sorted(scene, cam, cfg, ov);
  RenderTarget rt = alloc_target(cam.width, cam.height, channels);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      double tr = 1.0, dep = 0.0, best_w = 0.0;
      Vec3 col = Vec3::Zero();
      int32_t lab = 0;
      for (const PrimView& v : views) {
        const double g = ray_splat_gaussian_arg(scene.primitives[v.index], cam, x, y);
        if (g > cfg.gauss_cutoff) continue;
        const double alpha = v.o * std::exp(-0.5 * g);
        if (alpha < cfg.alpha_cutoff) continue;
        const double w = alpha * tr;
        col += w * v.color;
        dep += w * v.ps.depth;
        if (w > best_w) {
          best_w = w;
          lab = v.label;
        }
        tr *= 1.0 - alpha;
        if (tr < cfg.transmittance_floor) break;
      }
      write_pixel(rt, channels, cfg, x, y, col, tr, dep, lab);
    }
  }
  return rt;
}

RenderGrads backward(const Scene& scene, const Camera& cam, const Image& d_color,
                     const GrayImage& d_opacity, const ForwardCache& cache,
                     const RenderConfig& cfg, const RenderOverrides& ov) {
  if (!cache.filled || cache.digest != forward_digest(scene, cam, cfg, ov))
    throw StaleForward("backward inputs do not match the recorded forward pass");
  const bool has_dc = !d_color.data.empty();
  const bool has_do = !d_opacity.empty();
  if (has_dc && (d_color.width != cam.width || d_color.height != cam.height))
    throw ShapeMismatch("color gradient image does not match camera size");
  if (has_do && (d_opacity.width != cam.width || d_opacity.height != cam.height))
    throw ShapeMismatch("opacity gradient image does not match camera size");

  const auto views = project_sorted(scene, cam, cfg, ov);
  const TileGrid grid = build_bins(views, cam.width, cam.height, cfg.tile_size);
  const int n_tiles = grid.nx * grid.ny;

  // Gradients w.r.t. the three used columns of T, accumulated per tile so the
  // final reduction can run in a fixed order regardless of thread count.
  struct TileGrad {
    Mat3 dT = Mat3::Zero();  // columns: dT_x, dT_y, dT_w
    double d_o = 0.0;
    double contrib = 0.0;
  };
  std::vector<std::vector<TileGrad>> tile_grads(n_tiles);

#pragma omp parallel for schedule(dynamic) num_threads(worker_threads())
  for (int tile = 0; tile < n_tiles; ++tile) {
    const auto& bin = grid.bins[tile];
    auto& grads = tile_grads[tile];
    grads.assign(bin.size(), TileGrad{});
    if (bin.empty()) continue;
    const int x0 = (tile % grid.nx) * grid.tile;
    const int y0 = (tile / grid.nx) * grid.tile;
    const int x1 = std::min(cam.width, x0 + grid.tile);
    const int y1 = std::min(cam.height, y0 + grid.tile);

    struct Hit {
      int pos;
      double alpha, w, u, v, G;
      Vec3 k, l, n;
    };
    std::vector<Hit> hits;
    hits.reserve(bin.size());

    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        hits.clear();
        double tr = 1.0;
        for (int pos = 0; pos < static_cast<int>(bin.size()); ++pos) {
          const PrimView& v = views[bin[pos]];
          Hit h;
          h.pos = pos;
          if (!splat_uv(v.ps, x, y, h.k, h.l, h.n, h.u, h.v)) continue;
          const double g = h.u * h.u + h.v * h.v;
          if (g > cfg.gauss_cutoff) continue;
          h.alpha = v.o * std::exp(-0.5 * g);
          if (h.alpha < cfg.alpha_cutoff) continue;
          h.w = h.alpha * tr;
          hits.push_back(h);
          tr *= 1.0 - h.alpha;
          if (tr < cfg.transmittance_floor) break;
        }
        if (hits.empty()) continue;

        const Vec3 dC = has_dc ? d_color.pixel(x, y) : Vec3::Zero();
        const double dO = has_do ? d_opacity.at(x, y) : 0.0;
        // The background composite behaves like a final forced-opaque splat.
        double total = dC.dot(cfg.background) * tr;
        for (auto& h : hits) {
          h.G = dC.dot(views[bin[h.pos]].color) + dO;
          total += h.G * h.w;
        }
        double partial = 0.0;
        for (const auto& h : hits) {
          partial += h.G * h.w;
          const double suffix = total - partial;
          const double tr_i = h.w / h.alpha;
          double d_alpha = h.G * tr_i;
          if (1.0 - h.alpha > 1e-12) d_alpha -= suffix / (1.0 - h.alpha);
          TileGrad& tg = grads[h.pos];
          tg.contrib += h.w;
          tg.d_o += d_alpha * (h.alpha / views[bin[h.pos]].o);
          const double d_g = d_alpha * (-0.5 * h.alpha);
          const double gu = d_g * 2.0 * h.u;
          const double gv = d_g * 2.0 * h.v;
          const double inv_nz = 1.0 / h.n[2];
          const Vec3 dn(gu * inv_nz, gv * inv_nz, -(gu * h.u + gv * h.v) * inv_nz);
          const Vec3 dk = h.l.cross(dn);
          const Vec3 dl = dn.cross(h.k);
          tg.dT.col(0) -= dk;
          tg.dT.col(1) -= dl;
          tg.dT.col(2) += x * dk + y * dl;
        }
      }
    }
  }

  RenderGrads rg;
  rg.d_mu.assign(scene.size(), Vec3::Zero());
  rg.d_q.assign(scene.size(), Vec4::Zero());
  rg.d_o.assign(scene.size(), 0.0);
  rg.contrib.assign(scene.size(), 0.0);

  const Mat4 pfull = cam.pixel_projection();
  const Vec3 r0 = pfull.row(0).head<3>();
  const Vec3 r1 = pfull.row(1).head<3>();
  const Vec3 r3 = pfull.row(3).head<3>();

  for (int tile = 0; tile < n_tiles; ++tile) {
    const auto& bin = grid.bins[tile];
    const auto& grads = tile_grads[tile];
    for (size_t pos = 0; pos < bin.size(); ++pos) {
      const TileGrad& tg = grads[pos];
      if (tg.contrib == 0.0 && tg.dT.isZero(0.0) && tg.d_o == 0.0) continue;
      const PrimView& v = views[bin[pos]];
      const SplatPrimitive& prim = scene.primitives[v.index];
      rg.contrib[v.index] += tg.contrib;
      rg.d_o[v.index] += tg.d_o;
      const Vec3 dT1 = tg.dT.col(0), dT2 = tg.dT.col(1), dT4 = tg.dT.col(2);
      rg.d_mu[v.index] += dT1[2] * r0 + dT2[2] * r1 + dT4[2] * r3;
      const Vec3 d_tu = prim.s[0] * (dT1[0] * r0 + dT2[0] * r1 + dT4[0] * r3);
      const Vec3 d_tv = prim.s[1] * (dT1[1] * r0 + dT2[1] * r1 + dT4[1] * r3);
      rg.d_q[v.index] +=
          d_tu_dq(prim.q).transpose() * d_tu + d_tv_dq(prim.q).transpose() * d_tv;
    }
  }
  return rg;
}

std::vector<double> blend_contributions(const Scene& scene, const Camera& cam,
                                        const RenderConfig& cfg, const RenderOverrides& ov,
                                        const Mask* restrict_pixels) {
  if (restrict_pixels &&
      (restrict_pixels->width != cam.width || restrict_pixels->height != cam.height))
    throw ShapeMismatch("restriction mask does not match camera size");
  const auto views = project_sorted(scene, cam, cfg, ov);
  const TileGrid grid = build_bins(views, cam.width, cam.height, cfg.tile_size);
  const int n_tiles = grid.nx * grid.ny;
  std::vector<std::vector<double>> tile_contrib(n_tiles);

#pragma omp parallel for schedule(dynamic) num_threads(worker_threads())
  for (int tile = 0; tile < n_tiles; ++tile) {
    const auto& bin = grid.bins[tile];
    auto& contrib = tile_contrib[tile];
    contrib.assign(bin.size(), 0.0);
    if (bin.empty()) continue;
    const int x0 = (tile % grid.nx) * grid.tile;
    const int y0 = (tile / grid.nx) * grid.tile;
    const int x1 = std::min(cam.width, x0 + grid.tile);
    const int y1 = std::min(cam.height, y0 + grid.tile);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        if (restrict_pixels && !restrict_pixels->at(x, y)) continue;
        double tr = 1.0;
        for (int pos = 0; pos < static_cast<int>(bin.size()); ++pos) {
          const PrimView& v = views[bin[pos]];
          Vec3 k, l, n;
          double u, vv;
          if (!splat_uv(v.ps, x, y, k, l, n, u, vv)) continue;
          const double g = u * u + vv * vv;
          if (g > cfg.gauss_cutoff) continue;
          const double alpha = v.o * std::exp(-0.5 * g);
          if (alpha < cfg.alpha_cutoff) continue;
          contrib[pos] += alpha * tr;
          tr *= 1.0 - alpha;
          if (tr < cfg.transmittance_floor) break;
        }
      }
    }
  }

  std::vector<double> out(scene.size(), 0.0);
  for (int tile = 0; tile < n_tiles; ++tile) {
    const auto& bin = grid.bins[tile];
    for (size_t pos = 0; pos < bin.size(); ++pos)
      out[views[bin[pos]].index] += tile_contrib[tile][pos];
  }
  return out;
}

}  // namespace msgfield
