#pragma once

// Flat run configuration shared by all CLI subcommands: one JSON file with a
// default for every knob, unknown keys rejected, flags layered on top.

#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "matteforge/datasynth.hpp"
#include "matteforge/guided_filter.hpp"
#include "matteforge/trainer.hpp"

namespace mf {

using nlohmann::json;

struct RunConfig {
  synth::SynthConfig synth;
  train::TrainConfig train;
  GuidedFilterParams gf;
  uint64_t seed = 0;
  bool seed_set = false;  // true once any source supplied a seed explicitly

  json to_json() const {
    json j{{"seed", seed},
           {"gf_radius", gf.radius},
           {"gf_eps", gf.eps},
           {"gf_subsample", gf.subsample}};
    json sj = synth.to_json(), tj = train.to_json();
    for (auto& [k, v] : sj.items())
      if (k != "seed") j["synth_" + k] = v;
    for (auto& [k, v] : tj.items())
      if (k != "seed") j[k] = v;
    return j;
  }

  void apply(const json& j) {
    for (auto& [key, value] : j.items()) {
      if (key == "seed") {
        seed = value.get<uint64_t>();
        seed_set = true;
      } else if (key == "gf_radius")
        gf.radius = value.get<int>();
      else if (key == "gf_eps")
        gf.eps = value.get<double>();
      else if (key == "gf_subsample")
        gf.subsample = value.get<int>();
      else if (key == "synth_rotations")
        synth.rotations = value.get<int>();
      else if (key == "synth_flips")
        synth.flips = value.get<bool>();
      else if (key == "synth_mask_kernel_min")
        synth.mask_kernel_min = value.get<int>();
      else if (key == "synth_mask_kernel_max")
        synth.mask_kernel_max = value.get<int>();
      else if (key == "synth_reject_ratio")
        synth.reject_ratio = value.get<double>();
      else if (key == "synth_short_side")
        synth.short_side = value.get<int>();
      else if (key == "synth_crop_min")
        synth.crop_min = value.get<int>();
      else if (key == "synth_crop_max")
        synth.crop_max = value.get<int>();
      else if (key == "synth_out_size")
        synth.out_size = value.get<int>();
      else if (key == "synth_trimap_kernel")
        synth.trimap_kernel = value.get<int>();
      else if (key == "synth_trimap_repeats")
        synth.trimap_repeats = value.get<int>();
      else if (key == "synth_hue_range")
        synth.hue_range = value.get<double>();
      else if (key == "synth_rejection")
        synth.rejection = value.get<bool>();
      else if (key == "synth_test_mode")
        synth.test_mode = value.get<bool>();
      else if (key == "lr0")
        train.lr0 = value.get<double>();
      else if (key == "beta1")
        train.beta1 = value.get<double>();
      else if (key == "beta2")
        train.beta2 = value.get<double>();
      else if (key == "batch_size")
        train.batch_size = value.get<int>();
      else if (key == "total_steps")
        train.total_steps = value.get<int64_t>();
      else if (key == "checkpoint_period")
        train.checkpoint_period = value.get<int64_t>();
      else if (key == "lambda_g")
        train.weights.lambda_g = value.get<double>();
      else if (key == "lambda_l")
        train.weights.lambda_l = value.get<double>();
      else if (key == "lambda_gb")
        train.weights.lambda_gb = value.get<double>();
      else if (key == "lambda_adv")
        train.weights.lambda_adv = value.get<double>();
      else if (key == "lambda_gp")
        train.weights.lambda_gp = value.get<double>();
      else if (key == "eps_local")
        train.weights.eps_local = value.get<double>();
      else if (key == "local_dilation")
        train.weights.local_dilation = value.get<int>();
      else
        throw std::invalid_argument("RunConfig: unknown key '" + key + "'");
    }
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("RunConfig: cannot open " + path);
    json j;
    try {
      f >> j;
    } catch (const std::exception& e) {
      throw std::runtime_error("RunConfig: " + path + " is not valid JSON: " + e.what());
    }
    RunConfig cfg;
    cfg.apply(j);
    return cfg;
  }

  // precedence: explicit flag > config file > MATTEFORGE_SEED > 0
  void resolve_seed(bool flag_set, uint64_t flag_value) {
    if (flag_set) {
      seed = flag_value;
      seed_set = true;
    } else if (!seed_set) {
      if (const char* env = std::getenv("MATTEFORGE_SEED")) {
        seed = std::strtoull(env, nullptr, 10);
        seed_set = true;
      }
    }
    synth.seed = seed;
    train.seed = seed;
  }

  void echo(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream f(std::filesystem::path(dir) / "run_config.json");
    f << to_json().dump(2) << "\n";
    if (!f) throw std::runtime_error("RunConfig: cannot write config echo into " + dir);
  }
};

}  // namespace mf
