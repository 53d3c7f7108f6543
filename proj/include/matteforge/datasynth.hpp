#pragma once

// Dataset synthesis: foreground augmentation (11 rotations x flip),
// compositing onto backgrounds, weak-mask generation with rejection,
// trimap generation, train/test transforms, and the on-disk dataset
// writer with a provenance manifest.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "matteforge/image.hpp"
#include "matteforge/imgproc.hpp"
#include "matteforge/png_io.hpp"
#include "matteforge/rng.hpp"

namespace mf::synth {

using nlohmann::json;

struct SynthConfig {
  int rotations = 11;
  bool flips = true;
  int mask_kernel_min = 5;
  int mask_kernel_max = 30;
  double reject_ratio = 0.5;
  int short_side = 600;
  int crop_min = 512;
  int crop_max = 600;
  int out_size = 512;
  int trimap_kernel = 20;
  int trimap_repeats = 1;
  double hue_range = 0.1;
  bool rejection = true;
  bool test_mode = false;  // center-crop transform instead of random crop + hue
  uint64_t seed = 0;

  int variants_per_foreground() const { return rotations * (flips ? 2 : 1); }

  void check() const {
    if (rotations < 1 || mask_kernel_min < 1 || mask_kernel_max < mask_kernel_min)
      throw std::invalid_argument("SynthConfig: invalid kernel or rotation settings");
    if (reject_ratio < 0 || reject_ratio > 1)
      throw std::invalid_argument("SynthConfig: reject_ratio outside [0,1]");
    if (out_size < 1 || crop_min < out_size || crop_max < crop_min || short_side < crop_max)
      throw std::invalid_argument("SynthConfig: inconsistent crop/resize extents");
    if (trimap_kernel < 1 || (trimap_repeats != 1 && trimap_repeats != 2))
      throw std::invalid_argument("SynthConfig: trimap kernel/repeats invalid");
    if (hue_range < 0 || hue_range > 0.5)
      throw std::invalid_argument("SynthConfig: hue_range outside [0, 0.5]");
  }

  json to_json() const {
    return json{{"rotations", rotations},
                {"flips", flips},
                {"mask_kernel_min", mask_kernel_min},
                {"mask_kernel_max", mask_kernel_max},
                {"reject_ratio", reject_ratio},
                {"short_side", short_side},
                {"crop_min", crop_min},
                {"crop_max", crop_max},
                {"out_size", out_size},
                {"trimap_kernel", trimap_kernel},
                {"trimap_repeats", trimap_repeats},
                {"hue_range", hue_range},
                {"rejection", rejection},
                {"test_mode", test_mode},
                {"seed", seed}};
  }
};

struct TransformRecord {
  double angle = 0.0;
  bool flip = false;
};

struct MattingSample {
  RgbImage image;
  GrayMap alpha;
  GrayMap mask;
  Trimap trimap;
  int fg_index = -1, bg_index = -1;
  TransformRecord tf;
  uint64_t sample_state = 0;  // Rng state that regenerates this sample
};

// ---------------------------------------------------------------------------
// geometric variants

// Rotation about the canvas center with an expanded output canvas; color is
// sampled premultiplied by alpha so transparent borders do not bleed.
inline RgbaImage rotate_expand(const RgbaImage& src, double angle) {
  src.check();
  int h = src.h(), w = src.w();
  double c = std::cos(angle), s = std::sin(angle);
  int nw = int(std::ceil(std::abs(c) * w + std::abs(s) * h - 1e-9));
  int nh = int(std::ceil(std::abs(c) * h + std::abs(s) * w - 1e-9));
  RgbaImage out;
  out.color = RgbImage(nh, nw);
  out.alpha = GrayMap(nh, nw);
  double cxo = (nw - 1) / 2.0, cyo = (nh - 1) / 2.0;
  double cxi = (w - 1) / 2.0, cyi = (h - 1) / 2.0;
  for (int y = 0; y < nh; ++y)
    for (int x = 0; x < nw; ++x) {
      double dx = x - cxo, dy = y - cyo;
      double sx = c * dx + s * dy + cxi;   // inverse rotation
      double sy = -s * dx + c * dy + cyi;
      int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
      double fx = sx - x0, fy = sy - y0;
      double acc[4] = {0, 0, 0, 0};  // premultiplied r,g,b plus alpha
      for (int t = 0; t < 2; ++t)
        for (int u = 0; u < 2; ++u) {
          int yy = y0 + t, xx = x0 + u;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          double wgt = (t ? fy : 1 - fy) * (u ? fx : 1 - fx);
          double a = src.alpha.at(yy, xx);
          for (int ch = 0; ch < 3; ++ch) acc[ch] += wgt * a * src.color.ch[ch].at(yy, xx);
          acc[3] += wgt * a;
        }
      out.alpha.at(y, x) = acc[3];
      for (int ch = 0; ch < 3; ++ch)
        out.color.ch[ch].at(y, x) = acc[3] > 1e-8 ? std::clamp(acc[ch] / acc[3], 0.0, 1.0) : 0.0;
    }
  return out;
}

inline RgbaImage hflip(const RgbaImage& src) {
  src.check();
  RgbaImage out;
  out.color = RgbImage(src.h(), src.w());
  out.alpha = GrayMap(src.h(), src.w());
  for (int y = 0; y < src.h(); ++y)
    for (int x = 0; x < src.w(); ++x) {
      int mx = src.w() - 1 - x;
      out.alpha.at(y, x) = src.alpha.at(y, mx);
      for (int c = 0; c < 3; ++c) out.color.ch[c].at(y, x) = src.color.ch[c].at(y, mx);
    }
  return out;
}

// 11 angles (identity first, the rest drawn uniformly) x {no-flip, flip}
inline std::vector<std::pair<RgbaImage, TransformRecord>> augment_foreground(
    const RgbaImage& fg, const SynthConfig& cfg, Rng& rng) {
  std::vector<double> angles{0.0};
  for (int i = 1; i < cfg.rotations; ++i) angles.push_back(rng.uniform(0, 2 * M_PI));
  std::vector<std::pair<RgbaImage, TransformRecord>> out;
  out.reserve(cfg.variants_per_foreground());
  for (double a : angles) {
    RgbaImage rotated = a == 0.0 ? fg : rotate_expand(fg, a);
    out.push_back({rotated, {a, false}});
    if (cfg.flips) out.push_back({hflip(rotated), {a, true}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// weak mask and trimap

inline size_t area(const GrayMap& binary) {
  size_t n = 0;
  for (double v : binary.v)
    if (v > 0.5) ++n;
  return n;
}

// dilate-then-erode of the binarized alpha; empty result relative to the
// foreground area yields rejection (nullopt)
inline std::optional<GrayMap> make_weak_mask(const GrayMap& alpha, int k1, int k2, double reject_ratio) {
  GrayMap m0 = binarize(alpha, 0.5);
  size_t a0 = area(m0);
  if (a0 == 0) return std::nullopt;  // degenerate foreground, rejected outright
  GrayMap m = erode(dilate(m0, StructuringElement(k1)), StructuringElement(k2));
  if (double(area(m)) < reject_ratio * double(a0)) return std::nullopt;
  return m;
}

inline std::optional<GrayMap> make_weak_mask(const GrayMap& alpha, Rng& rng, const SynthConfig& cfg) {
  int k1 = rng.uniform_int(cfg.mask_kernel_min, cfg.mask_kernel_max);
  int k2 = rng.uniform_int(cfg.mask_kernel_min, cfg.mask_kernel_max);
  return make_weak_mask(alpha, k1, k2, cfg.rejection ? cfg.reject_ratio : 0.0);
}

// FG where the eroded mask survives, BG where the dilated mask is empty,
// UNKNOWN in between
inline Trimap make_trimap(const GrayMap& mask, int k, int repeats) {
  GrayMap d = mask, e = mask;
  for (int i = 0; i < repeats; ++i) {
    d = dilate(d, StructuringElement(k));
    e = erode(e, StructuringElement(k));
  }
  Trimap t(mask.h, mask.w);
  for (size_t i = 0; i < mask.v.size(); ++i)
    t.v[i] = e.v[i] > 0.5 ? TriLabel::FG : (d.v[i] > 0.5 ? TriLabel::Unknown : TriLabel::BG);
  return t;
}

// ---------------------------------------------------------------------------
// transforms

// aspect-filling resize + center crop to exactly (h, w)
inline RgbImage resize_cover(const RgbImage& img, int h, int w) {
  double scale = std::max(double(h) / img.h(), double(w) / img.w());
  int nh = std::max(h, int(std::lround(img.h() * scale)));
  int nw = std::max(w, int(std::lround(img.w() * scale)));
  return center_crop(resize_bilinear(img, nh, nw), h, w);
}

struct TripletView {
  RgbImage image;
  GrayMap alpha;
  GrayMap mask;
};

inline TripletView short_side_resize(const TripletView& t, int target) {
  int h = t.image.h(), w = t.image.w();
  double scale = double(target) / std::min(h, w);
  int nh = h <= w ? target : std::max(target, int(std::lround(h * scale)));
  int nw = w < h ? target : std::max(target, int(std::lround(w * scale)));
  return {resize_bilinear(t.image, nh, nw), resize_bilinear(t.alpha, nh, nw),
          resize_bilinear(t.mask, nh, nw)};
}

// short side -> 600, random square crop with side in [512, 600], resize to
// 512, hue jitter on the image only; the mask is re-binarized afterwards
inline TripletView train_transform(const TripletView& in, Rng& rng, const SynthConfig& cfg) {
  TripletView t = short_side_resize(in, cfg.short_side);
  int side = rng.uniform_int(cfg.crop_min, std::min(cfg.crop_max, std::min(t.image.h(), t.image.w())));
  int top = rng.uniform_int(0, t.image.h() - side);
  int left = rng.uniform_int(0, t.image.w() - side);
  TripletView c{crop(t.image, top, left, side, side), crop(t.alpha, top, left, side, side),
                crop(t.mask, top, left, side, side)};
  TripletView out{resize_bilinear(c.image, cfg.out_size, cfg.out_size),
                  resize_bilinear(c.alpha, cfg.out_size, cfg.out_size),
                  binarize(resize_bilinear(c.mask, cfg.out_size, cfg.out_size), 0.5)};
  double delta = rng.uniform(-cfg.hue_range, cfg.hue_range);
  out.image = shift_hue(out.image, delta);
  return out;
}

// short side -> 600, center 600x600 crop, resize to 512
inline TripletView test_transform(const TripletView& in, const SynthConfig& cfg) {
  TripletView t = short_side_resize(in, cfg.short_side);
  TripletView c{center_crop(t.image, cfg.short_side, cfg.short_side),
                center_crop(t.alpha, cfg.short_side, cfg.short_side),
                center_crop(t.mask, cfg.short_side, cfg.short_side)};
  return {resize_bilinear(c.image, cfg.out_size, cfg.out_size),
          resize_bilinear(c.alpha, cfg.out_size, cfg.out_size),
          binarize(resize_bilinear(c.mask, cfg.out_size, cfg.out_size), 0.5)};
}

// ---------------------------------------------------------------------------
// sample composition

inline std::optional<MattingSample> compose_sample(const RgbaImage& fg_variant, const RgbImage& bg,
                                                   Rng& rng, const SynthConfig& cfg) {
  fg_variant.check();
  uint64_t start_state = rng.state();

  RgbImage bg_fit = resize_cover(bg, fg_variant.h(), fg_variant.w());
  RgbImage image = composite(fg_variant, bg_fit);

  auto mask = make_weak_mask(fg_variant.alpha, rng, cfg);
  if (!mask) return std::nullopt;

  TripletView t{std::move(image), fg_variant.alpha, std::move(*mask)};
  TripletView out = cfg.test_mode ? test_transform(t, cfg) : train_transform(t, rng, cfg);

  if (cfg.rejection) {
    size_t fg_area = area(binarize(out.alpha, 0.5));
    if (fg_area == 0 || double(area(out.mask)) < cfg.reject_ratio * double(fg_area))
      return std::nullopt;  // the crop/resize may have re-violated the area rule
  }

  MattingSample s;
  s.image = std::move(out.image);
  s.alpha = std::move(out.alpha);
  s.mask = std::move(out.mask);
  s.trimap = make_trimap(s.mask, cfg.trimap_kernel, cfg.trimap_repeats);
  s.sample_state = start_state;
  return s;
}

// ---------------------------------------------------------------------------
// dataset writer

namespace detail {

inline std::vector<std::string> list_pngs(const std::string& dir) {
  std::vector<std::string> out;
  if (!std::filesystem::is_directory(dir))
    throw std::runtime_error("datasynth: not a directory: " + dir);
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::runtime_error("datasynth: no .png files in " + dir);
  return out;
}

}  // namespace detail

inline json synthesize_dataset(const std::string& fg_dir, const std::string& bg_dir,
                               const std::string& out_dir, const SynthConfig& cfg) {
  cfg.check();
  auto fg_paths = detail::list_pngs(fg_dir);
  auto bg_paths = detail::list_pngs(bg_dir);

  for (const char* sub : {"image", "alpha", "mask", "trimap"})
    std::filesystem::create_directories(std::filesystem::path(out_dir) / sub);

  Rng root(cfg.seed);
  json samples = json::array();
  int emitted = 0, attempted = 0;
  for (size_t fi = 0; fi < fg_paths.size(); ++fi) {
    RgbaImage fg = load_rgba_png(fg_paths[fi]);
    Rng angle_rng = root.fork(0x524F5441ULL + fi);
    std::vector<double> angles{0.0};
    for (int i = 1; i < cfg.rotations; ++i) angles.push_back(angle_rng.uniform(0, 2 * M_PI));
    int flips = cfg.flips ? 2 : 1;
    for (size_t ai = 0; ai < angles.size(); ++ai) {
      // one rotation held in memory at a time; flips derive from it
      RgbaImage rotated = angles[ai] == 0.0 ? fg : rotate_expand(fg, angles[ai]);
      for (int fl = 0; fl < flips; ++fl) {
      size_t vi = ai * flips + fl;
      TransformRecord tf{angles[ai], fl == 1};
      ++attempted;
      Rng srng = root.fork(fi * 1000 + vi);
      int bg_index = srng.uniform_int(0, int(bg_paths.size()) - 1);
      RgbImage bg = load_rgb_png(bg_paths[bg_index]);
      auto s = compose_sample(fl == 1 ? hflip(rotated) : rotated, bg, srng, cfg);
      if (!s) continue;
      char id[16];
      std::snprintf(id, sizeof(id), "%06d", emitted);
      auto out = std::filesystem::path(out_dir);
      save_png(s->image, (out / "image" / (std::string(id) + ".png")).string());
      save_png(s->alpha, (out / "alpha" / (std::string(id) + ".png")).string());
      save_png(s->mask, (out / "mask" / (std::string(id) + ".png")).string());
      save_png(s->trimap, (out / "trimap" / (std::string(id) + ".png")).string());
      samples.push_back({{"id", id},
                         {"fg", std::filesystem::path(fg_paths[fi]).filename().string()},
                         {"fg_index", fi},
                         {"bg", std::filesystem::path(bg_paths[bg_index]).filename().string()},
                         {"bg_index", bg_index},
                         {"variant", vi},
                         {"angle", tf.angle},
                         {"flip", tf.flip},
                         {"sample_state", s->sample_state}});
      ++emitted;
      }
    }
  }

  json manifest{{"schema", 1},
                {"seed", cfg.seed},
                {"config", cfg.to_json()},
                {"attempted", attempted},
                {"emitted", emitted},
                {"rejected", attempted - emitted},
                {"samples", std::move(samples)}};
  std::ofstream f(std::filesystem::path(out_dir) / "manifest.json");
  f << manifest.dump(2) << "\n";
  if (!f) throw std::runtime_error("datasynth: failed to write manifest in " + out_dir);
  return manifest;
}

// ---------------------------------------------------------------------------
// reading emitted samples back

inline json load_manifest(const std::string& dataset_dir) {
  std::ifstream f(std::filesystem::path(dataset_dir) / "manifest.json");
  if (!f) throw std::runtime_error("datasynth: missing manifest.json in " + dataset_dir);
  json m = json::parse(f);
  if (m.at("schema").get<int>() != 1) throw std::runtime_error("datasynth: unsupported manifest schema");
  return m;
}

inline MattingSample load_sample(const std::string& dataset_dir, const std::string& id) {
  auto dir = std::filesystem::path(dataset_dir);
  MattingSample s;
  s.image = load_rgb_png((dir / "image" / (id + ".png")).string());
  s.alpha = load_gray_png((dir / "alpha" / (id + ".png")).string());
  s.mask = binarize(load_gray_png((dir / "mask" / (id + ".png")).string()), 0.5);
  s.trimap = load_trimap((dir / "trimap" / (id + ".png")).string());
  return s;
}

}  // namespace mf::synth
