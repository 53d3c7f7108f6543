#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <utility>
#include <vector>

#include "matteforge/image.hpp"

namespace mf {

// Square all-ones structuring element. For even k the anchor is asymmetric:
// offsets cover [-floor(k/2), ceil(k/2)-1] on each axis.
struct StructuringElement {
  int k = 1;
  explicit StructuringElement(int k_) : k(k_) {
    if (k_ < 1) throw std::invalid_argument("StructuringElement: k must be >= 1");
  }
  int lo() const { return -(k / 2); }
  int hi() const { return (k + 1) / 2 - 1; }
};

struct Kernel2D {
  int h = 0, w = 0;
  std::vector<double> v;

  Kernel2D() = default;
  Kernel2D(int h_, int w_, double fill = 0.0) : h(h_), w(w_), v(size_t(h_) * w_, fill) {
    if (h_ % 2 == 0 || w_ % 2 == 0) throw std::invalid_argument("Kernel2D: extents must be odd");
  }
  double& at(int y, int x) { return v[size_t(y) * w + x]; }
  double at(int y, int x) const { return v[size_t(y) * w + x]; }
};

enum class Padding { Zero, Reflect };

namespace detail {

inline int reflect_index(int i, int n) {
  // edge-repeating reflection: -1 -> 0, n -> n-1
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

}  // namespace detail

// Cross-correlation with "same" output extent. Output is not clipped.
inline GrayMap conv2d_same(const GrayMap& map, const Kernel2D& kernel, Padding padding) {
  if (kernel.h % 2 == 0 || kernel.w % 2 == 0) throw std::invalid_argument("conv2d_same: kernel extents must be odd");
  const int rh = kernel.h / 2, rw = kernel.w / 2;
  GrayMap out(map.h, map.w);
  for (int y = 0; y < map.h; ++y) {
    for (int x = 0; x < map.w; ++x) {
      double acc = 0.0;
      for (int dy = -rh; dy <= rh; ++dy) {
        for (int dx = -rw; dx <= rw; ++dx) {
          int sy = y + dy, sx = x + dx;
          double src;
          if (padding == Padding::Zero) {
            if (sy < 0 || sy >= map.h || sx < 0 || sx >= map.w) continue;
            src = map.at(sy, sx);
          } else {
            src = map.at(detail::reflect_index(sy, map.h), detail::reflect_index(sx, map.w));
          }
          acc += src * kernel.at(dy + rh, dx + rw);
        }
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

// Mean over the (2r+1)^2 window, truncated at the borders and normalized by
// the actual window size, so constant inputs are fixed points.
inline GrayMap box_filter(const GrayMap& map, int r) {
  if (r < 1) throw std::invalid_argument("box_filter: radius must be >= 1");
  // horizontal window sums via per-row prefix sums
  GrayMap hsum(map.h, map.w);
  std::vector<double> prefix(map.w + 1);
  for (int y = 0; y < map.h; ++y) {
    prefix[0] = 0.0;
    for (int x = 0; x < map.w; ++x) prefix[x + 1] = prefix[x] + map.at(y, x);
    for (int x = 0; x < map.w; ++x) {
      int x1 = std::max(0, x - r), x2 = std::min(map.w - 1, x + r);
      hsum.at(y, x) = prefix[x2 + 1] - prefix[x1];
    }
  }
  GrayMap out(map.h, map.w);
  std::vector<double> col_prefix(map.h + 1);
  for (int x = 0; x < map.w; ++x) {
    col_prefix[0] = 0.0;
    for (int y = 0; y < map.h; ++y) col_prefix[y + 1] = col_prefix[y] + hsum.at(y, x);
    for (int y = 0; y < map.h; ++y) {
      int y1 = std::max(0, y - r), y2 = std::min(map.h - 1, y + r);
      int x1 = std::max(0, x - r), x2 = std::min(map.w - 1, x + r);
      double count = double(y2 - y1 + 1) * double(x2 - x1 + 1);
      out.at(y, x) = (col_prefix[y2 + 1] - col_prefix[y1]) / count;
    }
  }
  return out;
}

namespace detail {

template <class Cmp>
GrayMap morph_1d_pass(const GrayMap& in, int lo, int hi, bool horizontal, Cmp better) {
  GrayMap out(in.h, in.w);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      bool seen = false;
      double best = 0.0;
      for (int d = lo; d <= hi; ++d) {
        int sy = horizontal ? y : y + d;
        int sx = horizontal ? x + d : x;
        if (sy < 0 || sy >= in.h || sx < 0 || sx >= in.w) continue;
        double val = in.at(sy, sx);
        if (!seen || better(val, best)) best = val, seen = true;
      }
      out.at(y, x) = best;
    }
  }
  return out;
}

}  // namespace detail

// Max over the footprint; out-of-bounds neighbors ignored. Square elements
// are separable, so two 1-D passes.
inline GrayMap dilate(const GrayMap& map, const StructuringElement& se) {
  auto gt = [](double a, double b) { return a > b; };
  return detail::morph_1d_pass(detail::morph_1d_pass(map, se.lo(), se.hi(), true, gt), se.lo(), se.hi(), false, gt);
}

inline GrayMap erode(const GrayMap& map, const StructuringElement& se) {
  auto lt = [](double a, double b) { return a < b; };
  return detail::morph_1d_pass(detail::morph_1d_pass(map, se.lo(), se.hi(), true, lt), se.lo(), se.hi(), false, lt);
}

// 1 iff value strictly greater than threshold.
inline GrayMap binarize(const GrayMap& alpha, double threshold = 0.5) {
  GrayMap out(alpha.h, alpha.w);
  for (size_t i = 0; i < alpha.size(); ++i) out.v[i] = alpha.v[i] > threshold ? 1.0 : 0.0;
  return out;
}

// Bilinear resize with half-pixel-center alignment.
inline GrayMap resize_bilinear(const GrayMap& map, int new_h, int new_w) {
  if (new_h < 1 || new_w < 1) throw std::invalid_argument("resize_bilinear: extents must be >= 1");
  if (new_h == map.h && new_w == map.w) return map;
  GrayMap out(new_h, new_w);
  double sy_scale = double(map.h) / new_h;
  double sx_scale = double(map.w) / new_w;
  for (int y = 0; y < new_h; ++y) {
    double sy = (y + 0.5) * sy_scale - 0.5;
    int y0 = int(std::floor(sy));
    double fy = sy - y0;
    int y0c = std::clamp(y0, 0, map.h - 1);
    int y1c = std::clamp(y0 + 1, 0, map.h - 1);
    for (int x = 0; x < new_w; ++x) {
      double sx = (x + 0.5) * sx_scale - 0.5;
      int x0 = int(std::floor(sx));
      double fx = sx - x0;
      int x0c = std::clamp(x0, 0, map.w - 1);
      int x1c = std::clamp(x0 + 1, 0, map.w - 1);
      out.at(y, x) = (1 - fy) * ((1 - fx) * map.at(y0c, x0c) + fx * map.at(y0c, x1c)) +
                     fy * ((1 - fx) * map.at(y1c, x0c) + fx * map.at(y1c, x1c));
    }
  }
  return out;
}

inline RgbImage resize_bilinear(const RgbImage& img, int new_h, int new_w) {
  RgbImage out;
  for (int c = 0; c < 3; ++c) out.ch[c] = resize_bilinear(img.ch[c], new_h, new_w);
  return out;
}

inline GrayMap crop(const GrayMap& map, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > map.h || left + w > map.w)
    throw std::invalid_argument("crop: rectangle out of bounds");
  GrayMap out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(y, x) = map.at(top + y, left + x);
  return out;
}

inline RgbImage crop(const RgbImage& img, int top, int left, int h, int w) {
  RgbImage out;
  for (int c = 0; c < 3; ++c) out.ch[c] = crop(img.ch[c], top, left, h, w);
  return out;
}

inline GrayMap center_crop(const GrayMap& map, int h, int w) {
  return crop(map, (map.h - h) / 2, (map.w - w) / 2, h, w);
}

inline RgbImage center_crop(const RgbImage& img, int h, int w) {
  return crop(img, (img.h() - h) / 2, (img.w() - w) / 2, h, w);
}

struct ComponentLabels {
  std::vector<int> labels;  // 0 = background, 1.. = components
  std::vector<size_t> sizes;  // sizes[i] is the pixel count of label i+1
  int h = 0, w = 0;
};

// 4-connected components of a binary map.
inline ComponentLabels connected_components(const GrayMap& binary) {
  ComponentLabels cl;
  cl.h = binary.h;
  cl.w = binary.w;
  cl.labels.assign(binary.size(), 0);
  int next = 0;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < binary.h; ++y) {
    for (int x = 0; x < binary.w; ++x) {
      if (binary.at(y, x) == 0.0 || cl.labels[size_t(y) * binary.w + x] != 0) continue;
      ++next;
      size_t count = 0;
      queue.push_back({y, x});
      cl.labels[size_t(y) * binary.w + x] = next;
      while (!queue.empty()) {
        auto [cy, cx] = queue.front();
        queue.pop_front();
        ++count;
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int d = 0; d < 4; ++d) {
          int ny = cy + dy[d], nx = cx + dx[d];
          if (ny < 0 || ny >= binary.h || nx < 0 || nx >= binary.w) continue;
          size_t idx = size_t(ny) * binary.w + nx;
          if (binary.v[idx] != 0.0 && cl.labels[idx] == 0) {
            cl.labels[idx] = next;
            queue.push_back({ny, nx});
          }
        }
      }
      cl.sizes.push_back(count);
    }
  }
  return cl;
}

namespace detail {

// First-order derivative-of-Gaussian taps, normalized so a unit ramp yields
// unit response; paired smoothing taps sum to 1.
inline void gaussian_derivative_taps(double sigma, std::vector<double>& smooth, std::vector<double>& deriv, int& hw) {
  hw = int(std::ceil(3.0 * sigma));
  smooth.assign(2 * hw + 1, 0.0);
  deriv.assign(2 * hw + 1, 0.0);
  double ssum = 0.0, dnorm = 0.0;
  for (int u = -hw; u <= hw; ++u) {
    double g = std::exp(-double(u) * u / (2.0 * sigma * sigma));
    smooth[u + hw] = g;
    deriv[u + hw] = u * g;
    ssum += g;
    dnorm += double(u) * u * g;
  }
  for (auto& s : smooth) s /= ssum;
  for (auto& d : deriv) d /= dnorm;
}

inline GrayMap sep_filter_reflect(const GrayMap& map, const std::vector<double>& kx, const std::vector<double>& ky) {
  int hwx = int(kx.size()) / 2, hwy = int(ky.size()) / 2;
  GrayMap tmp(map.h, map.w), out(map.h, map.w);
  for (int y = 0; y < map.h; ++y)
    for (int x = 0; x < map.w; ++x) {
      double acc = 0.0;
      for (int d = -hwx; d <= hwx; ++d) acc += map.at(y, reflect_index(x + d, map.w)) * kx[d + hwx];
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < map.h; ++y)
    for (int x = 0; x < map.w; ++x) {
      double acc = 0.0;
      for (int d = -hwy; d <= hwy; ++d) acc += tmp.at(reflect_index(y + d, map.h), x) * ky[d + hwy];
      out.at(y, x) = acc;
    }
  return out;
}

}  // namespace detail

// Per-pixel Euclidean magnitude of the Gaussian-derivative gradient.
inline GrayMap gaussian_derivative_magnitude(const GrayMap& map, double sigma = 1.4) {
  if (sigma <= 0) throw std::invalid_argument("gaussian_derivative_magnitude: sigma must be > 0");
  std::vector<double> smooth, deriv;
  int hw;
  detail::gaussian_derivative_taps(sigma, smooth, deriv, hw);
  GrayMap gx = detail::sep_filter_reflect(map, deriv, smooth);
  GrayMap gy = detail::sep_filter_reflect(map, smooth, deriv);
  GrayMap out(map.h, map.w);
  for (size_t i = 0; i < out.size(); ++i) out.v[i] = std::hypot(gx.v[i], gy.v[i]);
  return out;
}

}  // namespace mf
