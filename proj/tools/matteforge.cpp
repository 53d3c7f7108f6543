// matteforge: dataset synthesis, training, inference, guided-filter baseline,
// evaluation, Gabor bank dump and generator throughput benchmarking.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "matteforge/config.hpp"
#include "matteforge/metrics.hpp"
#include "matteforge/procgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  uint64_t seed = 0;
  std::vector<CLI::Option*> seed_opts;  // one per subcommand, all bound to `seed`

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    seed_opts.push_back(cmd->add_option("--seed", seed, "seed overriding config and MATTEFORGE_SEED"));
  }

  mf::RunConfig load() const {
    mf::RunConfig cfg =
        config_path.empty() ? mf::RunConfig{} : mf::RunConfig::from_file(config_path);
    bool seed_given = std::any_of(seed_opts.begin(), seed_opts.end(),
                                  [](const CLI::Option* o) { return o->count() > 0; });
    cfg.resolve_seed(seed_given, seed);
    return cfg;
  }
};

void run_synth(const Common& common, const std::string& fg, const std::string& bg,
               const std::string& out) {
  mf::RunConfig cfg = common.load();
  json manifest = mf::synth::synthesize_dataset(fg, bg, out, cfg.synth);
  cfg.echo(out);
  std::cout << "emitted " << manifest.at("emitted") << " samples (" << manifest.at("rejected")
            << " rejected) into " << out << "\n";
}

void run_train(const Common& common, const std::string& data, const std::string& out,
               const std::string& resume) {
  mf::RunConfig cfg = common.load();
  cfg.echo(out);
  json summary = mf::train::fit<float>(data, out, cfg.train, {}, {}, resume);
  std::cout << "trained " << summary.at("steps") << " steps, final checkpoint "
            << summary.at("final_checkpoint") << "\n";
}

void run_infer(const Common& common, const std::string& checkpoint, const std::string& image_path,
               const std::string& mask_path, const std::string& out) {
  mf::RunConfig cfg = common.load();
  mf::train::Trainer<float> trainer(cfg.train, {}, {});
  trainer.load(checkpoint);
  mf::RgbImage image = mf::load_rgb_png(image_path);
  mf::GrayMap mask = mf::load_gray_png(mask_path);
  mf::save_png(mf::train::infer_alpha(trainer.gen, image, mask), out);
  std::cout << "wrote " << out << "\n";
}

void run_eval(const Common& common, const std::string& pred, const std::string& gt,
              const std::string& trimap, const std::string& out) {
  mf::RunConfig cfg = common.load();
  mf::metrics::MetricReport report = mf::metrics::evaluate(pred, gt, trimap);
  fs::create_directories(out);
  mf::metrics::write_report(report, (fs::path(out) / "report.csv").string(),
                            (fs::path(out) / "report.json").string(), cfg.to_json());
  cfg.echo(out);
  std::cout << "mean mse " << report.aggregate.mse << " sad " << report.aggregate.sad << " grad "
            << report.aggregate.grad << " conn " << report.aggregate.conn << " over "
            << report.samples.size() << " samples\n";
}

void run_gabor_dump(const Common& common, const std::string& out) {
  mf::RunConfig cfg = common.load();
  mf::GaborBank bank = mf::default_bank();
  fs::create_directories(out);
  json taps{{"kernels", json::array()}};
  for (size_t i = 0; i < bank.kernels.size(); ++i) {
    const mf::Kernel2D& k = bank.kernels[i];
    double lo = *std::min_element(k.v.begin(), k.v.end());
    double hi = *std::max_element(k.v.begin(), k.v.end());
    mf::GrayMap img(k.h, k.w);
    for (size_t j = 0; j < k.v.size(); ++j)
      img.v[j] = hi > lo ? (k.v[j] - lo) / (hi - lo) : 0.0;
    char name[32];
    std::snprintf(name, sizeof(name), "kernel_%02zu.png", i);
    mf::save_png(img, (fs::path(out) / name).string());
    taps["kernels"].push_back(json{{"index", i}, {"h", k.h}, {"w", k.w}, {"taps", k.v}});
  }
  std::ofstream jf(fs::path(out) / "bank.json");
  jf << taps.dump(2) << "\n";
  cfg.echo(out);
  std::cout << "wrote " << bank.kernels.size() << " kernels into " << out << "\n";
}

void run_bench(const Common& common, const std::string& checkpoint,
               const std::vector<int>& batches, int repeats, int warmup, int side,
               const std::string& out_csv) {
  mf::RunConfig cfg = common.load();
  mf::train::Trainer<float> trainer(cfg.train, {}, {});
  if (!checkpoint.empty()) trainer.load(checkpoint);

  std::ostringstream csv;
  csv << "batch,repeats,mean_fps,std_fps,status\n";
  for (int batch : batches) {
    try {
      mf::Rng rng(cfg.seed);
      mf::Tensor<float> img({batch, 3, side, side}), mask({batch, 1, side, side});
      for (auto& v : img.v) v = float(rng.uniform());
      for (auto& v : mask.v) v = rng.uniform() > 0.5 ? 1.0f : 0.0f;
      auto iv = mf::ad::Var<float>::leaf(std::move(img));
      auto mv = mf::ad::Var<float>::leaf(std::move(mask));

      mf::ad::NoGradGuard ng;
      for (int i = 0; i < warmup; ++i) trainer.gen.forward(iv, mv, false);
      std::vector<double> fps(repeats);
      for (int i = 0; i < repeats; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        trainer.gen.forward(iv, mv, false);
        std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        fps[i] = double(batch) / dt.count();
      }
      double mean = 0;
      for (double f : fps) mean += f;
      mean /= repeats;
      double var = 0;
      for (double f : fps) var += (f - mean) * (f - mean);
      double stddev = repeats > 1 ? std::sqrt(var / (repeats - 1)) : 0.0;
      csv << batch << "," << repeats << "," << mean << "," << stddev << ",ok\n";
    } catch (const std::bad_alloc&) {
      csv << batch << "," << repeats << ",,,OOM\n";
    }
  }
  if (out_csv.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(out_csv);
    f << csv.str();
    if (!f) throw std::runtime_error("bench: cannot write " + out_csv);
    std::cout << "wrote " << out_csv << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly-annotated image matting toolkit"};
  app.require_subcommand(1);
  Common common;

  auto* synth = app.add_subcommand("synth", "composite foregrounds over backgrounds into a dataset");
  std::string fg_dir, bg_dir, synth_out;
  synth->add_option("--fg", fg_dir, "foreground PNG directory")->required();
  synth->add_option("--bg", bg_dir, "background PNG directory")->required();
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  common.attach(synth);
  synth->callback([&] { run_synth(common, fg_dir, bg_dir, synth_out); });

  auto* train = app.add_subcommand("train", "train the matting generator adversarially");
  std::string data_dir, train_out, resume;
  train->add_option("--data", data_dir, "dataset directory with manifest.json")->required();
  train->add_option("--out", train_out, "output directory for logs and checkpoints")->required();
  train->add_option("--resume", resume, "checkpoint to resume from");
  common.attach(train);
  train->callback([&] { run_train(common, data_dir, train_out, resume); });

  auto* infer = app.add_subcommand("infer", "predict an alpha matte from an image and a mask");
  std::string ckpt, image_path, mask_path, out_path;
  infer->add_option("--checkpoint", ckpt, "training checkpoint")->required();
  infer->add_option("--image", image_path, "input RGB PNG")->required();
  infer->add_option("--mask", mask_path, "binary mask PNG")->required();
  infer->add_option("--out", out_path, "output matte PNG")->required();
  common.attach(infer);
  infer->callback([&] { run_infer(common, ckpt, image_path, mask_path, out_path); });

  auto* gf = app.add_subcommand("gf", "fast guided filter baseline");
  std::string gf_image, gf_mask, gf_out;
  int gf_radius = -1, gf_subsample = -1;
  double gf_eps = -1;
  gf->add_option("--image", gf_image, "guidance RGB PNG")->required();
  gf->add_option("--mask", gf_mask, "filtering input PNG")->required();
  gf->add_option("--out", gf_out, "output PNG")->required();
  auto* ro = gf->add_option("--radius", gf_radius, "window radius");
  auto* eo = gf->add_option("--eps", gf_eps, "ridge regularizer");
  auto* so = gf->add_option("--subsample", gf_subsample, "downsampling factor");
  common.attach(gf);
  gf->callback([&] {
    mf::RunConfig cfg = common.load();
    if (ro->count()) cfg.gf.radius = gf_radius;
    if (eo->count()) cfg.gf.eps = gf_eps;
    if (so->count()) cfg.gf.subsample = gf_subsample;
    cfg.gf.check();
    mf::RgbImage image = mf::load_rgb_png(gf_image);
    mf::GrayMap mask = mf::load_gray_png(gf_mask);
    mf::save_png(mf::fast_guided_filter(image, mask, cfg.gf), gf_out);
    std::cout << "wrote " << gf_out << "\n";
  });

  auto* eval = app.add_subcommand("eval", "score predicted mattes against ground truth");
  std::string pred_dir, gt_dir, trimap_dir, eval_out;
  eval->add_option("--pred", pred_dir, "predicted matte directory")->required();
  eval->add_option("--gt", gt_dir, "ground-truth matte directory")->required();
  eval->add_option("--trimap", trimap_dir, "trimap directory")->required();
  eval->add_option("--out", eval_out, "report output directory")->required();
  common.attach(eval);
  eval->callback([&] { run_eval(common, pred_dir, gt_dir, trimap_dir, eval_out); });

  auto* gabor = app.add_subcommand("gabor-dump", "write the 16-filter bank as PNGs and JSON");
  std::string gabor_out;
  gabor->add_option("--out", gabor_out, "output directory")->required();
  common.attach(gabor);
  gabor->callback([&] { run_gabor_dump(common, gabor_out); });

  auto* bench = app.add_subcommand("bench", "time generator-only forward passes");
  std::string bench_ckpt, bench_out;
  std::vector<int> batches{1, 2, 4};
  int repeats = 5, warmup = 1, side = 512;
  bench->add_option("--checkpoint", bench_ckpt, "optional checkpoint (random init otherwise)");
  bench->add_option("--batches", batches, "batch sizes to time");
  bench->add_option("--repeats", repeats, "timed passes per batch size")
      ->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup, "untimed passes per batch size")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--side", side, "square input extent")->check(CLI::PositiveNumber);
  bench->add_option("--out", bench_out, "CSV output path (stdout if omitted)");
  common.attach(bench);
  bench->callback([&] { run_bench(common, bench_ckpt, batches, repeats, warmup, side, bench_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
