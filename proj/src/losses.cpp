#include "msgfield/losses.hpp"

#include <algorithm>
#include <cmath>

namespace msgfield {

ImageLoss l1_rgb(const Image& img, const Image& gt) {
  if (!img.same_shape(gt)) throw ShapeMismatch("l1_rgb images differ in size");
  ImageLoss out;
  out.grad = Image(img.width, img.height);
  const double inv_n = 1.0 / static_cast<double>(img.data.size());
  double acc = 0.0;
  for (size_t i = 0; i < img.data.size(); ++i) {
    const double diff = img.data[i] - gt.data[i];
    acc += std::abs(diff);
    out.grad.data[i] = diff > 0 ? inv_n : (diff < 0 ? -inv_n : 0.0);
  }
  out.value = acc * inv_n;
  return out;
}

namespace {

constexpr int kWin = 11;

// Normalized 11x11 Gaussian window, sigma 1.5.
const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    std::vector<double> k(kWin * kWin);
    double sum = 0.0;
    for (int y = 0; y < kWin; ++y)
      for (int x = 0; x < kWin; ++x) {
        const double dx = x - (kWin - 1) / 2.0;
        const double dy = y - (kWin - 1) / 2.0;
        k[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
        sum += k[y * kWin + x];
      }
    for (double& v : k) v /= sum;
    return k;
  }();
  return w;
}

}  // namespace

ImageLoss ssim_loss(const Image& img, const Image& gt) {
  if (!img.same_shape(gt)) throw ShapeMismatch("ssim_loss images differ in size");
  if (img.width < kWin || img.height < kWin)
    throw ImageTooSmall("ssim needs at least " + std::to_string(kWin) + "x" +
                        std::to_string(kWin) + " pixels");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto& win = ssim_window();
  const int nx = img.width - kWin + 1;
  const int ny = img.height - kWin + 1;
  const double inv_windows = 1.0 / (static_cast<double>(nx) * ny * 3.0);

  ImageLoss out;
  out.grad = Image(img.width, img.height);
  double ssim_sum = 0.0;

  for (int ch = 0; ch < 3; ++ch) {
    for (int wy = 0; wy < ny; ++wy) {
      for (int wx = 0; wx < nx; ++wx) {
        double mu_x = 0, mu_y = 0, xx = 0, yy = 0, xy = 0;
        for (int j = 0; j < kWin; ++j) {
          for (int i = 0; i < kWin; ++i) {
            const double w = win[j * kWin + i];
            const double a = img.px(wx + i, wy + j)[ch];
            const double b = gt.px(wx + i, wy + j)[ch];
            mu_x += w * a;
            mu_y += w * b;
            xx += w * a * a;
            yy += w * b * b;
            xy += w * a * b;
          }
        }
        const double var_x = xx - mu_x * mu_x;
        const double var_y = yy - mu_y * mu_y;
        const double cov = xy - mu_x * mu_y;
        const double a1 = 2 * mu_x * mu_y + c1;
        const double a2 = 2 * cov + c2;
        const double b1 = mu_x * mu_x + mu_y * mu_y + c1;
        const double b2 = var_x + var_y + c2;
        const double s = (a1 * a2) / (b1 * b2);
        ssim_sum += s;

        // d s / d img pixel, scattered back over the window; loss is
        // 1 - mean(s) so the sign flips and the window average folds in.
        const double d_a1 = a2 / (b1 * b2);
        const double d_a2 = a1 / (b1 * b2);
        const double d_b1 = -s / b1;
        const double d_b2 = -s / b2;
        const double d_mu_x = d_a1 * 2 * mu_y + d_b1 * 2 * mu_x;
        for (int j = 0; j < kWin; ++j) {
          for (int i = 0; i < kWin; ++i) {
            const double w = win[j * kWin + i];
            const double a = img.px(wx + i, wy + j)[ch];
            const double b = gt.px(wx + i, wy + j)[ch];
            const double ds_dx =
                w * (d_mu_x + d_a2 * 2 * (b - mu_y) + d_b2 * 2 * (a - mu_x));
            out.grad.px(wx + i, wy + j)[ch] -= inv_windows * ds_dx;
          }
        }
      }
    }
  }
  out.value = 1.0 - ssim_sum * inv_windows;
  return out;
}

ScalarLoss dice_loss(const GrayImage& pred, const GrayImage& target) {
  if (pred.width != target.width || pred.height != target.height)
    throw ShapeMismatch("dice_loss images differ in size");
  constexpr double eps = 1e-6;
  double inter = 0, sum_p = 0, sum_g = 0;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    inter += pred.data[i] * target.data[i];
    sum_p += pred.data[i];
    sum_g += target.data[i];
  }
  const double num = 2 * inter + eps;
  const double den = sum_p + sum_g + eps;
  ScalarLoss out;
  out.value = 1.0 - num / den;
  out.grad = GrayImage(pred.width, pred.height);
  const double inv_den2 = 1.0 / (den * den);
  for (size_t i = 0; i < pred.data.size(); ++i)
    out.grad.data[i] = -(2 * target.data[i] * den - num) * inv_den2;
  return out;
}

ScalarLoss dice_loss(const GrayImage& pred, const Mask& target) {
  GrayImage t(target.width, target.height);
  for (size_t i = 0; i < target.data.size(); ++i) t.data[i] = target.data[i] ? 1.0 : 0.0;
  return dice_loss(pred, t);
}

RigidityLoss rigidity_loss(const std::vector<Vec3>& positions_t0,
                           const std::vector<Eigen::VectorXd>& coeffs, int k, double sigma_r) {
  const size_t n = positions_t0.size();
  if (n < 2) throw TooFewPrimitives("rigidity needs at least 2 primitives, got " +
                                    std::to_string(n));
  if (coeffs.size() != n) throw ShapeMismatch("coefficient count differs from position count");
  if (k < 1) throw DomainError("neighbor count must be at least 1");
  const int kk = std::min<int>(k, static_cast<int>(n) - 1);

  // k nearest neighbors by start position, ties by index.
  std::vector<std::vector<size_t>> nbrs(n);
  std::vector<double> all_d2;
  all_d2.reserve(n * kk);
  std::vector<std::pair<double, size_t>> cand;
  for (size_t i = 0; i < n; ++i) {
    cand.clear();
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      cand.emplace_back((positions_t0[i] - positions_t0[j]).squaredNorm(), j);
    }
    std::sort(cand.begin(), cand.end());
    nbrs[i].reserve(kk);
    for (int m = 0; m < kk; ++m) {
      nbrs[i].push_back(cand[m].second);
      all_d2.push_back(cand[m].first);
    }
  }
  if (sigma_r <= 0.0) {
    std::vector<double> dists(all_d2.size());
    for (size_t i = 0; i < all_d2.size(); ++i) dists[i] = std::sqrt(all_d2[i]);
    std::sort(dists.begin(), dists.end());
    const size_t mid = dists.size() / 2;
    sigma_r = dists.size() % 2 ? dists[mid] : 0.5 * (dists[mid - 1] + dists[mid]);
  }
  const double median_d2 = sigma_r * sigma_r;

  RigidityLoss out;
  out.grad.assign(n, Eigen::VectorXd::Zero(coeffs[0].size()));
  const double inv_terms = 1.0 / (static_cast<double>(n) * kk);
  double acc = 0.0;
  size_t edge = 0;
  for (size_t i = 0; i < n; ++i) {
    if (static_cast<size_t>(coeffs[i].size()) != static_cast<size_t>(coeffs[0].size()))
      throw ShapeMismatch("coefficient vectors differ in dimension");
    for (size_t j : nbrs[i]) {
      const double d2 = all_d2[edge++];
      const double omega = median_d2 < 1e-12 ? 1.0 : std::exp(-d2 / median_d2);
      const Eigen::VectorXd diff = coeffs[i] - coeffs[j];
      acc += omega * diff.squaredNorm();
      out.grad[i] += inv_terms * omega * 2.0 * diff;
      out.grad[j] -= inv_terms * omega * 2.0 * diff;
    }
  }
  out.value = acc * inv_terms;
  return out;
}

double total_loss(const LossParts& parts, const LossWeights& weights) {
  if (!(weights.lambda_ssim >= 0) || !(weights.lambda_dice >= 0) ||
      !(weights.lambda_rigidity >= 0))
    throw DomainError("loss weights must be non-negative");
  return parts.rgb + weights.lambda_ssim * parts.ssim + weights.lambda_dice * parts.dice +
         weights.lambda_rigidity * parts.rigidity;
}

void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads,
               double lr) {
  if (params.size() != grads.size()) throw ShapeMismatch("adam parameter/gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size())
    throw ShapeMismatch("adam state size differs from parameters");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& params, double eps) {
  std::vector<double> grad(params.size());
  std::vector<double> probe = params;
  for (size_t i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + eps;
    const double fp = f(probe);
    probe[i] = params[i] - eps;
    const double fm = f(probe);
    probe[i] = params[i];
    grad[i] = (fp - fm) / (2 * eps);
  }
  return grad;
}

}  // namespace msgfield
