#pragma once

// Adversarial training driver: warmup + cosine learning-rate schedule, Adam,
// 1:1 discriminator/generator alternation, JSON-lines logging, checkpointing
// with exact resume, and single-image inference.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "matteforge/datasynth.hpp"
#include "matteforge/losses.hpp"
#include "matteforge/network.hpp"
#include "matteforge/rng.hpp"

namespace mf::train {

using nlohmann::json;

struct TrainConfig {
  double lr0 = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 4;
  int64_t total_steps = 1000;
  int64_t checkpoint_period = 500;
  uint64_t seed = 0;
  obj::LossWeights weights;

  int64_t warmup_steps() const { return int64_t(std::ceil(0.05 * double(total_steps))); }

  void check() const {
    if (lr0 <= 0) throw std::invalid_argument("TrainConfig: lr0 must be > 0");
    if (total_steps < 1 || batch_size < 1 || checkpoint_period < 1)
      throw std::invalid_argument("TrainConfig: steps, batch and period must be >= 1");
    if (warmup_steps() >= total_steps)
      throw std::invalid_argument("TrainConfig: warmup must end before the final step");
    weights.check();
  }

  json to_json() const {
    return json{{"lr0", lr0},
                {"beta1", beta1},
                {"beta2", beta2},
                {"batch_size", batch_size},
                {"total_steps", total_steps},
                {"checkpoint_period", checkpoint_period},
                {"seed", seed},
                {"lambda_g", weights.lambda_g},
                {"lambda_l", weights.lambda_l},
                {"lambda_gb", weights.lambda_gb},
                {"lambda_adv", weights.lambda_adv},
                {"lambda_gp", weights.lambda_gp},
                {"eps_local", weights.eps_local},
                {"local_dilation", weights.local_dilation}};
  }
};

// linear warmup to lr0, then cosine decay to zero
inline double lr_schedule(int64_t step, const TrainConfig& cfg) {
  cfg.check();
  if (step < 0 || step > cfg.total_steps)
    throw std::invalid_argument("lr_schedule: step outside [0, total_steps]");
  int64_t w = cfg.warmup_steps();
  if (step < w) return cfg.lr0 * double(step) / double(w);
  return cfg.lr0 * 0.5 * (1.0 + std::cos(M_PI * double(step - w) / double(cfg.total_steps - w)));
}

// ---------------------------------------------------------------------------
// optimizer

template <class T>
struct Adam {
  double beta1 = 0.5, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::vector<Tensor<T>> m, v;

  void init(const nn::StateDict<T>& sd) {
    m.clear();
    v.clear();
    for (const auto& [name, p] : sd.params) {
      m.emplace_back(p->shape());
      v.emplace_back(p->shape());
    }
    t = 0;
  }

  void step(nn::StateDict<T>& sd, const std::vector<ad::Var<T>>& grads, double lr) {
    if (grads.size() != sd.params.size() || m.size() != sd.params.size())
      throw std::invalid_argument("Adam: gradient/parameter count mismatch");
    ++t;
    double bc1 = 1.0 - std::pow(beta1, double(t));
    double bc2 = 1.0 - std::pow(beta2, double(t));
    for (size_t i = 0; i < sd.params.size(); ++i) {
      Tensor<T>& theta = sd.params[i].second->mutable_val();
      const Tensor<T>& g = grads[i].val();
      for (size_t j = 0; j < theta.v.size(); ++j) {
        double gj = double(g.v[j]);
        double mj = beta1 * double(m[i].v[j]) + (1 - beta1) * gj;
        double vj = beta2 * double(v[i].v[j]) + (1 - beta2) * gj * gj;
        m[i].v[j] = T(mj);
        v[i].v[j] = T(vj);
        theta.v[j] -= T(lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
      }
    }
  }

  // optimizer state rides along in checkpoints as named buffers
  void collect(const std::string& prefix, nn::StateDict<T>& sd, Tensor<T>& t_holder) {
    t_holder = Tensor<T>({1, 1, 1, 1});
    t_holder.v[0] = T(t);
    for (size_t i = 0; i < m.size(); ++i) {
      sd.add_buffer(prefix + "." + std::to_string(i) + ".m", &m[i]);
      sd.add_buffer(prefix + "." + std::to_string(i) + ".v", &v[i]);
    }
    sd.add_buffer(prefix + ".t", &t_holder);
  }
  void restore_t(const Tensor<T>& t_holder) { t = int64_t(std::llround(double(t_holder.v[0]))); }
};

// ---------------------------------------------------------------------------
// batches

template <class T>
struct Batch {
  ad::Var<T> image, alpha, mask;  // (N,3,H,W) and (N,1,H,W)
};

template <class T>
Batch<T> make_batch(const std::vector<synth::MattingSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("make_batch: empty batch");
  int n = int(samples.size());
  int h = samples[0].image.h(), w = samples[0].image.w();
  Tensor<T> img({n, 3, h, w}), alpha({n, 1, h, w}), mask({n, 1, h, w});
  for (int i = 0; i < n; ++i) {
    const auto& s = samples[i];
    if (s.image.h() != h || s.image.w() != w || !s.alpha.same_extent(s.mask) || s.alpha.h != h)
      throw std::invalid_argument("make_batch: sample extents differ");
    size_t hw = size_t(h) * w;
    for (int c = 0; c < 3; ++c)
      for (size_t j = 0; j < hw; ++j) img.v[(size_t(i) * 3 + c) * hw + j] = T(s.image.ch[c].v[j]);
    for (size_t j = 0; j < hw; ++j) {
      alpha.v[size_t(i) * hw + j] = T(s.alpha.v[j]);
      mask.v[size_t(i) * hw + j] = T(s.mask.v[j]);
    }
  }
  return {ad::Var<T>::leaf(std::move(img)), ad::Var<T>::leaf(std::move(alpha)),
          ad::Var<T>::leaf(std::move(mask))};
}

// ---------------------------------------------------------------------------
// trainer

struct StepRecord {
  int64_t step = 0;
  double l_g = 0, l_l = 0, l_gb = 0, l_adv = 0, l_d = 0, gp = 0, lr = 0;

  json to_json() const {
    return json{{"step", step}, {"L_g", l_g},  {"L_l", l_l}, {"L_gb", l_gb},
                {"L_G", l_adv}, {"L_D", l_d},  {"GP", gp},   {"lr", lr}};
  }
};

template <class T = float>
class Trainer {
 public:
  TrainConfig cfg;
  nn::Generator<T> gen;
  nn::Discriminator<T> disc;
  Adam<T> opt_g, opt_d;
  int64_t step = 0;

  Trainer(const TrainConfig& c, const nn::GeneratorConfig& gcfg, const nn::DiscriminatorConfig& dcfg)
      : Trainer(c, gcfg, dcfg, Rng(c.seed)) {}

 private:
  Trainer(const TrainConfig& c, const nn::GeneratorConfig& gcfg, const nn::DiscriminatorConfig& dcfg,
          Rng init_rng)
      : cfg(c),
        gen(gcfg, init_rng),
        disc(dcfg, init_rng),
        bank_w_(obj::bank_weight<T>(default_bank())) {
    cfg.check();
    auto gsd = gen.state();
    auto dsd = disc.state();
    opt_g.beta1 = opt_d.beta1 = cfg.beta1;
    opt_g.beta2 = opt_d.beta2 = cfg.beta2;
    opt_g.init(gsd);
    opt_d.init(dsd);
  }

 public:
  // one discriminator update on L_D + GP with the predicted matte detached
  StepRecord d_update(const Batch<T>& batch, const ad::Var<T>& alpha_pred, double lr, Rng& rng) {
    auto D = [&](const ad::Var<T>& a, const ad::Var<T>& i, const ad::Var<T>& m) {
      return disc.forward(a, i, m, /*training=*/true);
    };
    ad::Var<T> ld = obj::d_loss<T>(D, batch.alpha, alpha_pred, batch.image, batch.mask);
    ad::Var<T> gp = obj::gradient_penalty<T>(D, batch.alpha, alpha_pred, batch.image, batch.mask,
                                             cfg.weights.lambda_gp, rng);
    ad::Var<T> total = ad::add(ld, gp);
    require_finite(double(total.val().v[0]), "discriminator loss");

    auto dsd = disc.state();
    std::vector<ad::Var<T>> wrt;
    for (auto& [name, p] : dsd.params) wrt.push_back(*p);
    auto grads = ad::backward(total, wrt);
    opt_d.step(dsd, grads, lr);

    StepRecord r;
    r.l_d = double(ld.val().v[0]);
    r.gp = double(gp.val().v[0]);
    return r;
  }

  // one generator update on the full weighted loss with fresh D outputs
  StepRecord g_update(const Batch<T>& batch, const ad::Var<T>& alpha_pred, double lr) {
    ad::Var<T> fake_logits = disc.forward(alpha_pred, batch.image, batch.mask, /*training=*/true);
    auto terms = obj::full_generator_loss<T>(batch.alpha, alpha_pred, batch.mask, fake_logits,
                                             bank_w_, cfg.weights);
    require_finite(double(terms.total.val().v[0]), "generator loss");

    auto gsd = gen.state();
    std::vector<ad::Var<T>> wrt;
    for (auto& [name, p] : gsd.params) wrt.push_back(*p);
    auto grads = ad::backward(terms.total, wrt);
    opt_g.step(gsd, grads, lr);

    StepRecord r;
    r.l_g = double(terms.global);
    r.l_l = double(terms.local);
    r.l_gb = double(terms.gabor);
    r.l_adv = double(terms.adv);
    return r;
  }

  StepRecord train_step(const Batch<T>& batch) {
    double lr = lr_schedule(step, cfg);
    Rng step_rng = Rng(cfg.seed).fork(0x53544550ULL + uint64_t(step));

    auto out = gen.forward(batch.image, batch.mask, /*training=*/true);
    StepRecord rd = d_update(batch, out.alpha, lr, step_rng);
    StepRecord rg = g_update(batch, out.alpha, lr);

    StepRecord r = rg;
    r.l_d = rd.l_d;
    r.gp = rd.gp;
    r.lr = lr;
    r.step = step;
    ++step;
    return r;
  }

  nn::StateDict<T> full_state() {
    nn::StateDict<T> sd = gen.state();
    nn::StateDict<T> dsd = disc.state();
    for (auto& e : dsd.params) sd.params.push_back(e);
    for (auto& e : dsd.buffers) sd.buffers.push_back(e);
    opt_g.collect("adam_g", sd, opt_g_t_);
    opt_d.collect("adam_d", sd, opt_d_t_);
    return sd;
  }

  void save(const std::string& path) {
    auto sd = full_state();
    nn::save_checkpoint(path, sd,
                        json{{"step", step},
                             {"train_config", cfg.to_json()},
                             {"generator_config", gen.cfg.to_json()},
                             {"discriminator_config", disc.cfg.to_json()},
                             {"param_count", nn::count_parameters(sd)}});
  }

  json load(const std::string& path) {
    auto sd = full_state();
    json manifest = nn::load_checkpoint(path, sd);
    opt_g.restore_t(opt_g_t_);
    opt_d.restore_t(opt_d_t_);
    step = manifest.at("step").get<int64_t>();
    return manifest;
  }

 private:
  ad::Var<T> bank_w_;
  Tensor<T> opt_g_t_, opt_d_t_;

  static void require_finite(double x, const char* what) {
    if (!std::isfinite(x))
      throw std::runtime_error(std::string("train_step: non-finite ") + what + " at value " +
                               std::to_string(x));
  }
};

// ---------------------------------------------------------------------------
// dataset-level fit with exact resume

namespace detail {

inline std::vector<std::string> manifest_ids(const json& manifest) {
  std::vector<std::string> ids;
  for (const auto& s : manifest.at("samples")) ids.push_back(s.at("id").get<std::string>());
  return ids;
}

// epoch order derived only from (seed, epoch) so any step is reproducible
inline std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng(seed).fork(0x45504F43ULL + uint64_t(epoch));
  for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[size_t(rng.uniform_int(0, int(i) - 1))]);
  return order;
}

}  // namespace detail

template <class T = float>
json fit(const std::string& dataset_dir, const std::string& out_dir, const TrainConfig& cfg,
         const nn::GeneratorConfig& gcfg = {}, const nn::DiscriminatorConfig& dcfg = {},
         const std::string& resume_from = "") {
  cfg.check();
  json manifest = synth::load_manifest(dataset_dir);
  auto ids = detail::manifest_ids(manifest);
  if (ids.empty()) throw std::runtime_error("fit: dataset manifest lists no samples");
  size_t steps_per_epoch = ids.size() / size_t(cfg.batch_size);
  if (steps_per_epoch == 0)
    throw std::runtime_error("fit: dataset smaller than one batch");

  std::filesystem::create_directories(out_dir);
  Trainer<T> trainer(cfg, gcfg, dcfg);
  if (!resume_from.empty()) trainer.load(resume_from);

  {
    std::ofstream cf(std::filesystem::path(out_dir) / "config.json");
    cf << json{{"train_config", cfg.to_json()},
               {"generator_config", gcfg.to_json()},
               {"discriminator_config", dcfg.to_json()},
               {"dataset", dataset_dir}}
              .dump(2)
       << "\n";
  }

  std::ofstream log(std::filesystem::path(out_dir) / "train_log.jsonl", std::ios::app);
  if (!log) throw std::runtime_error("fit: cannot open training log in " + out_dir);

  size_t skipped = 0, loaded = 0;
  while (trainer.step < cfg.total_steps) {
    int64_t epoch = trainer.step / int64_t(steps_per_epoch);
    size_t pos_in_epoch = size_t(trainer.step % int64_t(steps_per_epoch)) * size_t(cfg.batch_size);
    auto order = detail::epoch_order(ids.size(), cfg.seed, epoch);

    std::vector<synth::MattingSample> samples;
    size_t cursor = pos_in_epoch;
    while (samples.size() < size_t(cfg.batch_size) && cursor < ids.size()) {
      const std::string& id = ids[order[cursor++]];
      ++loaded;
      try {
        samples.push_back(synth::load_sample(dataset_dir, id));
      } catch (const std::exception& e) {
        ++skipped;
        log << json{{"warning", "skipped corrupt sample"}, {"id", id}, {"what", e.what()}}.dump()
            << "\n";
        if (double(skipped) > 0.01 * double(std::max<size_t>(loaded, 100)))
          throw std::runtime_error("fit: more than 1% of sample loads failed (" +
                                   std::to_string(skipped) + " skipped)");
      }
    }
    if (samples.size() < size_t(cfg.batch_size))
      throw std::runtime_error("fit: could not assemble a full batch from readable samples");

    StepRecord rec = trainer.train_step(make_batch<T>(samples));
    log << rec.to_json().dump() << "\n";
    log.flush();

    if (trainer.step % cfg.checkpoint_period == 0 || trainer.step == cfg.total_steps) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_%06lld.bin", (long long)trainer.step);
      trainer.save((std::filesystem::path(out_dir) / name).string());
    }
  }
  std::string final_path = (std::filesystem::path(out_dir) / "ckpt_final.bin").string();
  trainer.save(final_path);
  return json{{"steps", trainer.step}, {"skipped", skipped}, {"final_checkpoint", final_path}};
}

// ---------------------------------------------------------------------------
// inference

// Runs the generator on one image/mask pair of arbitrary extents by resizing
// to the nearest multiple of 32 and resizing the matte back.
template <class T>
GrayMap infer_alpha(nn::Generator<T>& gen, const RgbImage& image, const GrayMap& mask) {
  if (image.h() != mask.h || image.w() != mask.w)
    throw std::invalid_argument("infer_alpha: image and mask extents differ");
  auto round32 = [](int x) { return std::max(32, ((x + 15) / 32) * 32); };
  int h = round32(image.h()), w = round32(image.w());
  RgbImage img = (h == image.h() && w == image.w()) ? image : resize_bilinear(image, h, w);
  GrayMap m = (h == mask.h && w == mask.w) ? mask : resize_bilinear(mask, h, w);

  Tensor<T> it({1, 3, h, w}), mt({1, 1, h, w});
  size_t hw = size_t(h) * w;
  for (int c = 0; c < 3; ++c)
    for (size_t j = 0; j < hw; ++j) it.v[size_t(c) * hw + j] = T(img.ch[c].v[j]);
  for (size_t j = 0; j < hw; ++j) mt.v[j] = T(m.v[j]);

  ad::NoGradGuard ng;
  auto out = gen.forward(ad::Var<T>::leaf(std::move(it)), ad::Var<T>::leaf(std::move(mt)),
                         /*training=*/false);
  GrayMap alpha(h, w);
  for (size_t j = 0; j < hw; ++j) alpha.v[j] = double(out.alpha.val().v[j]);
  if (h != image.h() || w != image.w()) {
    alpha = resize_bilinear(alpha, image.h(), image.w());
    for (auto& v : alpha.v) v = std::clamp(v, 0.0, 1.0);
  }
  return alpha;
}

}  // namespace mf::train
