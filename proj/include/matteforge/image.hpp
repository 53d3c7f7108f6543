#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mf {

// Single-channel floating point plane, values nominally in [0,1].
// Doubles as alpha matte, weak mask and generic scratch map.
struct GrayMap {
  int h = 0, w = 0;
  std::vector<double> v;

  GrayMap() = default;
  GrayMap(int h_, int w_, double fill = 0.0) : h(h_), w(w_), v(size_t(h_) * w_, fill) {
    if (h_ < 1 || w_ < 1) throw std::invalid_argument("GrayMap: extents must be >= 1");
  }

  double& at(int y, int x) { return v[size_t(y) * w + x]; }
  double at(int y, int x) const { return v[size_t(y) * w + x]; }
  size_t size() const { return v.size(); }
  bool same_extent(const GrayMap& o) const { return h == o.h && w == o.w; }
};

struct RgbImage {
  std::array<GrayMap, 3> ch;

  RgbImage() = default;
  RgbImage(int h, int w, double fill = 0.0) : ch{GrayMap(h, w, fill), GrayMap(h, w, fill), GrayMap(h, w, fill)} {}

  int h() const { return ch[0].h; }
  int w() const { return ch[0].w; }
  bool same_extent(const RgbImage& o) const { return h() == o.h() && w() == o.w(); }
};

struct RgbaImage {
  RgbImage color;
  GrayMap alpha;

  int h() const { return color.h(); }
  int w() const { return color.w(); }
  void check() const {
    if (color.h() != alpha.h || color.w() != alpha.w)
      throw std::invalid_argument("RgbaImage: color and alpha extents differ");
  }
};

enum class TriLabel : uint8_t { BG = 0, Unknown = 1, FG = 2 };

// Three-valued map; serialized as 8-bit gray with levels 0 / 128 / 255.
struct Trimap {
  int h = 0, w = 0;
  std::vector<TriLabel> v;

  Trimap() = default;
  Trimap(int h_, int w_, TriLabel fill = TriLabel::BG) : h(h_), w(w_), v(size_t(h_) * w_, fill) {}

  TriLabel& at(int y, int x) { return v[size_t(y) * w + x]; }
  TriLabel at(int y, int x) const { return v[size_t(y) * w + x]; }

  static uint8_t to_byte(TriLabel l) {
    switch (l) {
      case TriLabel::BG: return 0;
      case TriLabel::Unknown: return 128;
      default: return 255;
    }
  }
  static TriLabel from_byte(uint8_t b) {
    if (b == 0) return TriLabel::BG;
    if (b == 128) return TriLabel::Unknown;
    if (b == 255) return TriLabel::FG;
    throw std::runtime_error("Trimap: byte value " + std::to_string(int(b)) + " is not one of 0/128/255");
  }
};

// I = alpha * F + (1 - alpha) * B, per pixel and channel.
inline RgbImage composite(const RgbaImage& fg, const RgbImage& bg) {
  fg.check();
  if (fg.h() != bg.h() || fg.w() != bg.w())
    throw std::invalid_argument("composite: foreground and background extents differ");
  RgbImage out(bg.h(), bg.w());
  for (int c = 0; c < 3; ++c) {
    for (size_t i = 0; i < fg.alpha.size(); ++i) {
      double a = fg.alpha.v[i];
      double val = a * fg.color.ch[c].v[i] + (1.0 - a) * bg.ch[c].v[i];
      out.ch[c].v[i] = std::min(1.0, std::max(0.0, val));
    }
  }
  return out;
}

namespace detail {

inline void rgb_to_hsv(double r, double g, double b, double& hh, double& ss, double& vv) {
  double mx = std::max(r, std::max(g, b));
  double mn = std::min(r, std::min(g, b));
  double d = mx - mn;
  vv = mx;
  ss = mx > 0 ? d / mx : 0.0;
  if (d <= 0) {
    hh = 0.0;
    return;
  }
  if (mx == r)
    hh = (g - b) / d;
  else if (mx == g)
    hh = 2.0 + (b - r) / d;
  else
    hh = 4.0 + (r - g) / d;
  hh /= 6.0;
  if (hh < 0) hh += 1.0;
}

inline void hsv_to_rgb(double hh, double ss, double vv, double& r, double& g, double& b) {
  if (ss <= 0) {
    r = g = b = vv;
    return;
  }
  hh = hh - std::floor(hh);
  double h6 = hh * 6.0;
  int i = std::min(5, int(h6));
  double f = h6 - i;
  double p = vv * (1.0 - ss);
  double q = vv * (1.0 - ss * f);
  double t = vv * (1.0 - ss * (1.0 - f));
  switch (i) {
    case 0: r = vv; g = t; b = p; break;
    case 1: r = q; g = vv; b = p; break;
    case 2: r = p; g = vv; b = t; break;
    case 3: r = p; g = q; b = vv; break;
    case 4: r = t; g = p; b = vv; break;
    default: r = vv; g = p; b = q; break;
  }
}

}  // namespace detail

// Rotates hue by delta (fraction of a full turn); saturation and value kept.
inline RgbImage shift_hue(const RgbImage& img, double delta) {
  if (delta < -0.5 || delta > 0.5) throw std::invalid_argument("shift_hue: delta outside [-0.5, 0.5]");
  RgbImage out(img.h(), img.w());
  for (size_t i = 0; i < img.ch[0].size(); ++i) {
    double hh, ss, vv, r, g, b;
    detail::rgb_to_hsv(img.ch[0].v[i], img.ch[1].v[i], img.ch[2].v[i], hh, ss, vv);
    detail::hsv_to_rgb(hh + delta, ss, vv, r, g, b);
    out.ch[0].v[i] = std::min(1.0, std::max(0.0, r));
    out.ch[1].v[i] = std::min(1.0, std::max(0.0, g));
    out.ch[2].v[i] = std::min(1.0, std::max(0.0, b));
  }
  return out;
}

}  // namespace mf
