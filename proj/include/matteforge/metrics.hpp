#pragma once

// Matting evaluation: MSE, SAD, gradient and connectivity errors restricted
// to a trimap's unknown region, plus directory-level report generation.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "matteforge/image.hpp"
#include "matteforge/imgproc.hpp"
#include "matteforge/png_io.hpp"

namespace mf::metrics {

using nlohmann::json;

inline GrayMap unknown_region(const Trimap& t) {
  GrayMap r(t.h, t.w);
  for (size_t i = 0; i < t.v.size(); ++i) r.v[i] = t.v[i] == TriLabel::Unknown ? 1.0 : 0.0;
  return r;
}

namespace detail {

inline size_t check_region(const GrayMap& pred, const GrayMap& gt, const GrayMap& region) {
  if (!pred.same_extent(gt) || !pred.same_extent(region))
    throw std::invalid_argument("metrics: extents differ");
  size_t n = 0;
  for (double v : region.v)
    if (v > 0.5) ++n;
  if (n == 0) throw std::invalid_argument("metrics: empty evaluation region");
  return n;
}

// Non-region pixels are zeroed before any spatial computation so that the
// metrics depend exactly on the unknown-region pixels and nothing else.
inline GrayMap mask_to_region(const GrayMap& m, const GrayMap& region) {
  GrayMap out(m.h, m.w);
  for (size_t i = 0; i < m.v.size(); ++i) out.v[i] = region.v[i] > 0.5 ? m.v[i] : 0.0;
  return out;
}

}  // namespace detail

inline double mse(const GrayMap& pred, const GrayMap& gt, const GrayMap& region) {
  size_t n = detail::check_region(pred, gt, region);
  double acc = 0;
  for (size_t i = 0; i < pred.v.size(); ++i)
    if (region.v[i] > 0.5) {
      double d = pred.v[i] - gt.v[i];
      acc += d * d;
    }
  return acc / double(n);
}

// sum of absolute differences, reported in kilo-units
inline double sad(const GrayMap& pred, const GrayMap& gt, const GrayMap& region) {
  detail::check_region(pred, gt, region);
  double acc = 0;
  for (size_t i = 0; i < pred.v.size(); ++i)
    if (region.v[i] > 0.5) acc += std::abs(pred.v[i] - gt.v[i]);
  return acc / 1000.0;
}

// squared difference of Gaussian-derivative magnitudes (sigma = 1.4)
inline double gradient_error(const GrayMap& pred, const GrayMap& gt, const GrayMap& region) {
  detail::check_region(pred, gt, region);
  GrayMap gp = gaussian_derivative_magnitude(detail::mask_to_region(pred, region), 1.4);
  GrayMap gg = gaussian_derivative_magnitude(detail::mask_to_region(gt, region), 1.4);
  double acc = 0;
  for (size_t i = 0; i < gp.v.size(); ++i)
    if (region.v[i] > 0.5) {
      double d = gp.v[i] - gg.v[i];
      acc += d * d;
    }
  return acc;
}

namespace detail {

// per-pixel connectivity level l: the largest threshold theta_{t-1} below
// which the pixel stays inside the largest jointly-connected component
inline std::vector<double> connectivity_levels(const GrayMap& pred, const GrayMap& gt) {
  size_t count = pred.v.size();
  std::vector<double> l(count, 1.0);
  std::vector<bool> dropped(count, false);
  for (int t = 1; t <= 10; ++t) {
    double theta = 0.1 * t;
    GrayMap joint(pred.h, pred.w);
    for (size_t i = 0; i < count; ++i)
      joint.v[i] = (pred.v[i] >= theta && gt.v[i] >= theta) ? 1.0 : 0.0;
    ComponentLabels cl = connected_components(joint);
    int best = 0;
    if (!cl.sizes.empty())
      best = 1 + int(std::max_element(cl.sizes.begin(), cl.sizes.end()) - cl.sizes.begin());
    for (size_t i = 0; i < count; ++i)
      if (!dropped[i] && (best == 0 || cl.labels[i] != best)) {
        dropped[i] = true;
        l[i] = 0.1 * (t - 1);
      }
  }
  return l;
}

}  // namespace detail

inline double connectivity_error(const GrayMap& pred, const GrayMap& gt, const GrayMap& region) {
  detail::check_region(pred, gt, region);
  GrayMap mp = detail::mask_to_region(pred, region);
  GrayMap mg = detail::mask_to_region(gt, region);
  std::vector<double> l = detail::connectivity_levels(mp, mg);
  auto phi = [](double matte, double level) {
    double d = matte - level;
    return 1.0 - (d >= 0.15 ? d : 0.0);
  };
  double acc = 0;
  for (size_t i = 0; i < pred.v.size(); ++i)
    if (region.v[i] > 0.5) acc += std::abs(phi(mp.v[i], l[i]) - phi(mg.v[i], l[i]));
  return acc;
}

// ---------------------------------------------------------------------------
// reports

struct SampleMetrics {
  std::string id;
  double mse = 0, sad = 0, grad = 0, conn = 0;
};

struct MetricReport {
  std::vector<SampleMetrics> samples;
  SampleMetrics aggregate;  // unweighted mean, id = "mean"
};

inline SampleMetrics compute_all(const std::string& id, const GrayMap& pred, const GrayMap& gt,
                                 const Trimap& trimap) {
  GrayMap region = unknown_region(trimap);
  return {id, mse(pred, gt, region), sad(pred, gt, region), gradient_error(pred, gt, region),
          connectivity_error(pred, gt, region)};
}

inline MetricReport evaluate(const std::string& pred_dir, const std::string& gt_dir,
                             const std::string& trimap_dir) {
  namespace fs = std::filesystem;
  auto list = [](const std::string& dir) {
    std::vector<std::string> ids;
    if (!fs::is_directory(dir)) throw std::runtime_error("evaluate: not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".png") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  auto ids = list(pred_dir);
  if (ids.empty()) throw std::runtime_error("evaluate: no predictions in " + pred_dir);
  if (ids != list(gt_dir) || ids != list(trimap_dir))
    throw std::runtime_error("evaluate: filename sets differ across directories");

  MetricReport report;
  report.aggregate.id = "mean";
  for (const auto& id : ids) {
    GrayMap pred, gt;
    Trimap tri;
    try {
      pred = load_gray_png((fs::path(pred_dir) / (id + ".png")).string());
      gt = load_gray_png((fs::path(gt_dir) / (id + ".png")).string());
      tri = load_trimap((fs::path(trimap_dir) / (id + ".png")).string());
    } catch (const std::exception& e) {
      throw std::runtime_error("evaluate: failed reading sample '" + id + "': " + e.what());
    }
    SampleMetrics m = compute_all(id, pred, gt, tri);
    report.aggregate.mse += m.mse;
    report.aggregate.sad += m.sad;
    report.aggregate.grad += m.grad;
    report.aggregate.conn += m.conn;
    report.samples.push_back(std::move(m));
  }
  double n = double(report.samples.size());
  report.aggregate.mse /= n;
  report.aggregate.sad /= n;
  report.aggregate.grad /= n;
  report.aggregate.conn /= n;
  return report;
}

inline void write_report(const MetricReport& report, const std::string& csv_path,
                         const std::string& json_path, const json& config_echo = json::object()) {
  std::ofstream csv(csv_path);
  csv << "id,mse,sad,grad,conn\n";
  csv.precision(12);
  for (const auto& s : report.samples)
    csv << s.id << "," << s.mse << "," << s.sad << "," << s.grad << "," << s.conn << "\n";
  csv << report.aggregate.id << "," << report.aggregate.mse << "," << report.aggregate.sad << ","
      << report.aggregate.grad << "," << report.aggregate.conn << "\n";
  if (!csv) throw std::runtime_error("write_report: failed to write " + csv_path);

  auto to_json = [](const SampleMetrics& s) {
    return json{{"id", s.id}, {"mse", s.mse}, {"sad", s.sad}, {"grad", s.grad}, {"conn", s.conn}};
  };
  json out{{"aggregate", to_json(report.aggregate)}, {"samples", json::array()}, {"config", config_echo}};
  for (const auto& s : report.samples) out["samples"].push_back(to_json(s));
  std::ofstream jf(json_path);
  jf << out.dump(2) << "\n";
  if (!jf) throw std::runtime_error("write_report: failed to write " + json_path);
}

}  // namespace mf::metrics
