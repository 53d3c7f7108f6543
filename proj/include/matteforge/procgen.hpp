#pragma once

// Procedural desk-scale dataset: anti-aliased random-shape foregrounds on
// transparent canvases and textured backgrounds. Foregrounds are warm-toned
// and backgrounds cool-toned so that a small model can separate them.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "matteforge/image.hpp"
#include "matteforge/png_io.hpp"
#include "matteforge/rng.hpp"

namespace mf::procgen {

inline RgbaImage make_shape_foreground(Rng& rng, int size = 600) {
  RgbaImage out;
  out.color = RgbImage(size, size);
  out.alpha = GrayMap(size, size);

  struct Blob {
    double cx, cy, rx, ry, cos_t, sin_t;
  };
  int n_blobs = rng.uniform_int(3, 6);
  std::vector<Blob> blobs;
  for (int i = 0; i < n_blobs; ++i) {
    double theta = rng.uniform(0, 2 * M_PI);
    blobs.push_back({rng.uniform(0.25, 0.75) * size, rng.uniform(0.25, 0.75) * size,
                     rng.uniform(0.08, 0.22) * size, rng.uniform(0.08, 0.22) * size,
                     std::cos(theta), std::sin(theta)});
  }

  // warm base color with mild sinusoidal texture
  double base_r = rng.uniform(0.65, 1.0);
  double base_g = rng.uniform(0.2, 0.6);
  double base_b = rng.uniform(0.0, 0.25);
  double fx = rng.uniform(2.0, 8.0), fy = rng.uniform(2.0, 8.0);
  double phase = rng.uniform(0, 2 * M_PI);

  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double a = 0;
      for (const Blob& b : blobs) {
        double dx = x - b.cx, dy = y - b.cy;
        double u = (dx * b.cos_t + dy * b.sin_t) / b.rx;
        double v = (-dx * b.sin_t + dy * b.cos_t) / b.ry;
        double f = std::sqrt(u * u + v * v);
        // ~1.5 px anti-aliased rim in canvas units
        double edge = std::min(b.rx, b.ry) / 1.5;
        a = std::max(a, std::clamp((1.0 - f) * edge, 0.0, 1.0));
      }
      out.alpha.at(y, x) = a;
      double tex = 0.08 * std::sin(2 * M_PI * (fx * x + fy * y) / size + phase);
      out.color.ch[0].at(y, x) = std::clamp(base_r + tex, 0.0, 1.0);
      out.color.ch[1].at(y, x) = std::clamp(base_g + tex, 0.0, 1.0);
      out.color.ch[2].at(y, x) = std::clamp(base_b + 0.5 * tex, 0.0, 1.0);
    }
  return out;
}

inline RgbImage make_texture_background(Rng& rng, int h = 660, int w = 660) {
  RgbImage out(h, w);
  double base_r = rng.uniform(0.0, 0.3);
  double base_g = rng.uniform(0.3, 0.7);
  double base_b = rng.uniform(0.6, 1.0);
  double fx1 = rng.uniform(1.0, 6.0), fy1 = rng.uniform(1.0, 6.0), p1 = rng.uniform(0, 2 * M_PI);
  double fx2 = rng.uniform(6.0, 16.0), fy2 = rng.uniform(6.0, 16.0), p2 = rng.uniform(0, 2 * M_PI);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double t = 0.12 * std::sin(2 * M_PI * (fx1 * x + fy1 * y) / w + p1) +
                 0.06 * std::sin(2 * M_PI * (fx2 * x - fy2 * y) / w + p2) +
                 0.03 * (rng.uniform() - 0.5);
      out.ch[0].at(y, x) = std::clamp(base_r + 0.5 * t, 0.0, 1.0);
      out.ch[1].at(y, x) = std::clamp(base_g + t, 0.0, 1.0);
      out.ch[2].at(y, x) = std::clamp(base_b + t, 0.0, 1.0);
    }
  return out;
}

inline void write_foregrounds(const std::string& dir, int count, uint64_t seed, int size = 600) {
  std::filesystem::create_directories(dir);
  Rng root(seed);
  for (int i = 0; i < count; ++i) {
    Rng r = root.fork(uint64_t(i));
    char name[32];
    std::snprintf(name, sizeof(name), "fg_%04d.png", i);
    save_png(make_shape_foreground(r, size), (std::filesystem::path(dir) / name).string());
  }
}

inline void write_backgrounds(const std::string& dir, int count, uint64_t seed, int h = 660, int w = 660) {
  std::filesystem::create_directories(dir);
  Rng root(seed);
  for (int i = 0; i < count; ++i) {
    Rng r = root.fork(uint64_t(i) + 0x42474B47ULL);
    char name[32];
    std::snprintf(name, sizeof(name), "bg_%04d.png", i);
    save_png(make_texture_background(r, h, w), (std::filesystem::path(dir) / name).string());
  }
}

}  // namespace mf::procgen
