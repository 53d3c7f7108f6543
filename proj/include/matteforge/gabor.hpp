#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "matteforge/imgproc.hpp"

namespace mf {

struct GaborParams {
  double wavelength = 5.0;   // lambda, pixels
  double orientation = 0.0;  // theta, radians
  double phase = 0.0;        // psi, radians
  double sigma = 0.5;        // Gaussian std, pixels
  double aspect = 0.5;       // gamma
  int size = 7;              // odd kernel extent

  void check() const {
    if (wavelength <= 0 || sigma <= 0 || aspect <= 0) throw std::invalid_argument("GaborParams: lambda, sigma, gamma must be > 0");
    if (size < 1 || size % 2 == 0) throw std::invalid_argument("GaborParams: size must be odd");
  }
};

// tap(x, y) = exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x'/lambda + psi)
// with x' = x cos(theta) + y sin(theta), y' = -x sin(theta) + y cos(theta).
inline Kernel2D gabor_kernel(const GaborParams& p) {
  p.check();
  Kernel2D k(p.size, p.size);
  int r = p.size / 2;
  double ct = std::cos(p.orientation), st = std::sin(p.orientation);
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) {
      double xp = x * ct + y * st;
      double yp = -x * st + y * ct;
      double env = std::exp(-(xp * xp + p.aspect * p.aspect * yp * yp) / (2.0 * p.sigma * p.sigma));
      k.at(y + r, x + r) = env * std::cos(2.0 * M_PI * xp / p.wavelength + p.phase);
    }
  }
  return k;
}

struct GaborBank {
  std::vector<Kernel2D> kernels;
};

// 16 orientations theta_k = k*pi/16, lambda=5, gamma=0.5, sigma=0.5, psi=0, 7x7.
inline GaborBank default_bank() {
  GaborBank bank;
  bank.kernels.reserve(16);
  for (int k = 0; k < 16; ++k) {
    GaborParams p;
    p.orientation = k * M_PI / 16.0;
    bank.kernels.push_back(gabor_kernel(p));
  }
  return bank;
}

// One zero-padded response map per kernel, in bank order.
inline std::vector<GrayMap> gabor_responses(const GrayMap& map, const GaborBank& bank) {
  for (const auto& k : bank.kernels)
    if (map.h < k.h || map.w < k.w) throw std::invalid_argument("gabor_responses: map smaller than kernel");
  std::vector<GrayMap> out;
  out.reserve(bank.kernels.size());
  for (const auto& k : bank.kernels) out.push_back(conv2d_same(map, k, Padding::Zero));
  return out;
}

// Sum over filters of the per-pixel mean squared response difference.
inline double gabor_loss(const GrayMap& alpha, const GrayMap& alpha_pred, const GaborBank& bank) {
  if (!alpha.same_extent(alpha_pred)) throw std::invalid_argument("gabor_loss: extents differ");
  auto ra = gabor_responses(alpha, bank);
  auto rb = gabor_responses(alpha_pred, bank);
  double total = 0.0;
  for (size_t f = 0; f < ra.size(); ++f) {
    double acc = 0.0;
    for (size_t i = 0; i < ra[f].size(); ++i) {
      double d = ra[f].v[i] - rb[f].v[i];
      acc += d * d;
    }
    total += acc / double(alpha.size());
  }
  return total;
}

}  // namespace mf
