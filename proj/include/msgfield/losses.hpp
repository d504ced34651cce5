#pragma once

#include <functional>
#include <vector>

#include "msgfield/image.hpp"
#include "msgfield/types.hpp"

namespace msgfield {

struct LossWeights {
  double lambda_ssim = 0.2;
  double lambda_dice = 1.0;
  double lambda_rigidity = 0.1;
};

struct LossParts {
  double rgb = 0.0;
  double ssim = 0.0;
  double dice = 0.0;
  double rigidity = 0.0;
};

struct ImageLoss {
  double value = 0.0;
  Image grad;  // d value / d first argument
};

struct ScalarLoss {
  double value = 0.0;
  GrayImage grad;
};

struct RigidityLoss {
  double value = 0.0;
  std::vector<Eigen::VectorXd> grad;  // per primitive, d value / d coefficients
};

// Mean absolute difference over pixels and channels; subgradient 0 at ties.
ImageLoss l1_rgb(const Image& img, const Image& gt);

// 1 - mean SSIM (11x11 Gaussian window, sigma 1.5, C1=0.01^2, C2=0.03^2 on
// [0,1] data), windows fully inside the image, channels averaged.
ImageLoss ssim_loss(const Image& img, const Image& gt);

// Soft Dice complement between a continuous [0,1] field and a second field.
ScalarLoss dice_loss(const GrayImage& pred, const GrayImage& target);
ScalarLoss dice_loss(const GrayImage& pred, const Mask& target);

// Mean over primitives and their k nearest start-position neighbors of
// omega_ij * |w_i - w_j|^2, omega_ij = exp(-dist^2 / sigma_r^2). Neighbor
// ties break by index. sigma_r <= 0 selects the median of all used neighbor
// distances (the default bandwidth; note this makes omega scale-free).
RigidityLoss rigidity_loss(const std::vector<Vec3>& positions_t0,
                           const std::vector<Eigen::VectorXd>& coeffs, int k,
                           double sigma_r = 0.0);

double total_loss(const LossParts& parts, const LossWeights& weights);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam update, in place.
void adam_step(AdamState& state, std::vector<double>& params,
               const std::vector<double>& grads, double lr);

// Central differences per coordinate.
std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                const std::vector<double>& params, double eps);

}  // namespace msgfield
