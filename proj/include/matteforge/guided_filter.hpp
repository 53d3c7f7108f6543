#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "matteforge/imgproc.hpp"

namespace mf {

struct GuidedFilterParams {
  int radius = 20;      // window is (2r+1) x (2r+1)
  double eps = 1e-4;    // ridge regularizer on the slope
  int subsample = 1;    // >1 selects the fast (subsampled) path

  void check() const {
    if (radius < 1) throw std::invalid_argument("GuidedFilterParams: radius must be >= 1");
    if (eps <= 0) throw std::invalid_argument("GuidedFilterParams: eps must be > 0");
    if (subsample < 1) throw std::invalid_argument("GuidedFilterParams: subsample must be >= 1");
  }
};

namespace detail {

inline GrayMap hadamard(const GrayMap& a, const GrayMap& b) {
  GrayMap out(a.h, a.w);
  for (size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

// Per-window ridge regression against gray guidance; returns the averaged
// coefficient maps (mean_a, mean_b).
inline void gf_coefficients_gray(const GrayMap& I, const GrayMap& p, int r, double eps, GrayMap& mean_a,
                                 GrayMap& mean_b) {
  GrayMap mI = box_filter(I, r);
  GrayMap mp = box_filter(p, r);
  GrayMap mIp = box_filter(hadamard(I, p), r);
  GrayMap mII = box_filter(hadamard(I, I), r);
  GrayMap a(I.h, I.w), b(I.h, I.w);
  for (size_t i = 0; i < I.size(); ++i) {
    double var = mII.v[i] - mI.v[i] * mI.v[i];
    double cov = mIp.v[i] - mI.v[i] * mp.v[i];
    a.v[i] = cov / (var + eps);
    b.v[i] = mp.v[i] - a.v[i] * mI.v[i];
  }
  mean_a = box_filter(a, r);
  mean_b = box_filter(b, r);
}

// Color guidance: per-window (Sigma + eps*Id) a = cov, solved with Cramer's
// rule on the symmetric 3x3 system (eps keeps it well-posed).
inline void gf_coefficients_color(const RgbImage& I, const GrayMap& p, int r, double eps,
                                  std::array<GrayMap, 3>& mean_a, GrayMap& mean_b) {
  std::array<GrayMap, 3> mI, cov_Ip;
  GrayMap mp = box_filter(p, r);
  for (int c = 0; c < 3; ++c) {
    mI[c] = box_filter(I.ch[c], r);
    GrayMap mIp = box_filter(hadamard(I.ch[c], p), r);
    cov_Ip[c] = GrayMap(p.h, p.w);
    for (size_t i = 0; i < p.size(); ++i) cov_Ip[c].v[i] = mIp.v[i] - mI[c].v[i] * mp.v[i];
  }
  // upper-triangular window covariances of I
  std::array<std::array<GrayMap, 3>, 3> var;
  for (int c0 = 0; c0 < 3; ++c0)
    for (int c1 = c0; c1 < 3; ++c1) {
      GrayMap m = box_filter(hadamard(I.ch[c0], I.ch[c1]), r);
      var[c0][c1] = GrayMap(p.h, p.w);
      for (size_t i = 0; i < p.size(); ++i) var[c0][c1].v[i] = m.v[i] - mI[c0].v[i] * mI[c1].v[i];
    }

  std::array<GrayMap, 3> a{GrayMap(p.h, p.w), GrayMap(p.h, p.w), GrayMap(p.h, p.w)};
  GrayMap b(p.h, p.w);
  for (size_t i = 0; i < p.size(); ++i) {
    double s00 = var[0][0].v[i] + eps, s01 = var[0][1].v[i], s02 = var[0][2].v[i];
    double s11 = var[1][1].v[i] + eps, s12 = var[1][2].v[i];
    double s22 = var[2][2].v[i] + eps;
    double c0 = cov_Ip[0].v[i], c1 = cov_Ip[1].v[i], c2 = cov_Ip[2].v[i];
    double det = s00 * (s11 * s22 - s12 * s12) - s01 * (s01 * s22 - s12 * s02) + s02 * (s01 * s12 - s11 * s02);
    double a0 = (c0 * (s11 * s22 - s12 * s12) - s01 * (c1 * s22 - s12 * c2) + s02 * (c1 * s12 - s11 * c2)) / det;
    double a1 = (s00 * (c1 * s22 - s12 * c2) - c0 * (s01 * s22 - s12 * s02) + s02 * (s01 * c2 - c1 * s02)) / det;
    double a2 = (s00 * (s11 * c2 - c1 * s12) - s01 * (s01 * c2 - c1 * s02) + c0 * (s01 * s12 - s11 * s02)) / det;
    a[0].v[i] = a0;
    a[1].v[i] = a1;
    a[2].v[i] = a2;
    b.v[i] = mp.v[i] - a0 * mI[0].v[i] - a1 * mI[1].v[i] - a2 * mI[2].v[i];
  }
  for (int c = 0; c < 3; ++c) mean_a[c] = box_filter(a[c], r);
  mean_b = box_filter(b, r);
}

inline GrayMap clamp01(GrayMap m) {
  for (auto& x : m.v) x = std::min(1.0, std::max(0.0, x));
  return m;
}

}  // namespace detail

// Fast Guided Filter with gray guidance; subsample 1 is the exact filter
// (the resize steps are identities then, so the code path is shared).
inline GrayMap fast_guided_filter(const GrayMap& I, const GrayMap& p, const GuidedFilterParams& params) {
  params.check();
  if (!I.same_extent(p)) throw std::invalid_argument("guided_filter: guidance and input extents differ");
  int s = params.subsample;
  if (I.h < s || I.w < s) throw std::invalid_argument("guided_filter: extents smaller than subsample factor");
  int lh = I.h / s, lw = I.w / s;
  GrayMap Is = resize_bilinear(I, lh, lw);
  GrayMap ps = resize_bilinear(p, lh, lw);
  int r = (params.radius + s - 1) / s;
  GrayMap mean_a, mean_b;
  detail::gf_coefficients_gray(Is, ps, r, params.eps, mean_a, mean_b);
  mean_a = resize_bilinear(mean_a, I.h, I.w);
  mean_b = resize_bilinear(mean_b, I.h, I.w);
  GrayMap out(I.h, I.w);
  for (size_t i = 0; i < I.size(); ++i) out.v[i] = mean_a.v[i] * I.v[i] + mean_b.v[i];
  return detail::clamp01(std::move(out));
}

inline GrayMap fast_guided_filter(const RgbImage& I, const GrayMap& p, const GuidedFilterParams& params) {
  params.check();
  if (I.h() != p.h || I.w() != p.w) throw std::invalid_argument("guided_filter: guidance and input extents differ");
  int s = params.subsample;
  if (p.h < s || p.w < s) throw std::invalid_argument("guided_filter: extents smaller than subsample factor");
  int lh = p.h / s, lw = p.w / s;
  RgbImage Is = resize_bilinear(I, lh, lw);
  GrayMap ps = resize_bilinear(p, lh, lw);
  int r = (params.radius + s - 1) / s;
  std::array<GrayMap, 3> mean_a;
  GrayMap mean_b;
  detail::gf_coefficients_color(Is, ps, r, params.eps, mean_a, mean_b);
  for (int c = 0; c < 3; ++c) mean_a[c] = resize_bilinear(mean_a[c], p.h, p.w);
  mean_b = resize_bilinear(mean_b, p.h, p.w);
  GrayMap out(p.h, p.w);
  for (size_t i = 0; i < p.size(); ++i) {
    out.v[i] = mean_a[0].v[i] * I.ch[0].v[i] + mean_a[1].v[i] * I.ch[1].v[i] + mean_a[2].v[i] * I.ch[2].v[i] +
               mean_b.v[i];
  }
  return detail::clamp01(std::move(out));
}

inline GrayMap guided_filter_gray(const GrayMap& I, const GrayMap& p, GuidedFilterParams params) {
  params.subsample = 1;
  return fast_guided_filter(I, p, params);
}

inline GrayMap guided_filter_color(const RgbImage& I, const GrayMap& p, GuidedFilterParams params) {
  params.subsample = 1;
  return fast_guided_filter(I, p, params);
}

}  // namespace mf
