#pragma once

// Generator (hourglass + coefficient heads) and PatchGAN triplet
// discriminator, plus parameter bookkeeping and checkpoint I/O.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "matteforge/autodiff.hpp"
#include "matteforge/rng.hpp"
#include "matteforge/tensor.hpp"

namespace mf::nn {

using nlohmann::json;

// Named views into a network's tensors: trainable parameters and
// persistent buffers (batch-norm running stats, spectral-norm vectors).
template <class T>
struct StateDict {
  std::vector<std::pair<std::string, ad::Var<T>*>> params;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers;

  void add_param(std::string name, ad::Var<T>* v) { params.emplace_back(std::move(name), v); }
  void add_buffer(std::string name, Tensor<T>* t) { buffers.emplace_back(std::move(name), t); }
};

template <class T>
size_t count_parameters(const StateDict<T>& sd) {
  size_t n = 0;
  for (const auto& [name, v] : sd.params) n += v->shape().count();
  return n;
}

namespace detail {

template <class T>
Tensor<T> normal_init(Shape s, Rng& rng, T stddev) {
  Tensor<T> t(s);
  for (auto& x : t.v) x = T(rng.normal()) * stddev;
  return t;
}

template <class T>
Tensor<T> filled(Shape s, T v) {
  Tensor<T> t(s);
  std::fill(t.v.begin(), t.v.end(), v);
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// layers

template <class T>
struct Conv2dLayer {
  ad::Var<T> weight;  // (Cout, Cin/groups, k, k)
  ad::Var<T> bias;    // (1, Cout, 1, 1); unused when !has_bias
  ad::ConvSpec spec{1, 1, 1};
  bool has_bias = true;

  Conv2dLayer() = default;
  Conv2dLayer(int cin, int cout, int k, int stride, int pad, int groups, bool with_bias, Rng& rng)
      : weight(ad::Var<T>::leaf(detail::normal_init<T>({cout, cin / groups, k, k}, rng, T(0.02)), true)),
        bias(ad::Var<T>::leaf(Tensor<T>({1, cout, 1, 1}), with_bias)),
        spec{stride, pad, groups},
        has_bias(with_bias) {
    if (cin % groups != 0 || cout % groups != 0)
      throw std::invalid_argument("Conv2dLayer: channels not divisible by groups");
  }

  ad::Var<T> forward(const ad::Var<T>& x) const {
    ad::Var<T> y = ad::conv2d(x, weight, spec);
    if (has_bias) y = ad::add(y, ad::broadcast_chan(bias, y.shape()));
    return y;
  }

  void collect(const std::string& prefix, StateDict<T>& sd) {
    sd.add_param(prefix + ".weight", &weight);
    if (has_bias) sd.add_param(prefix + ".bias", &bias);
  }
};

template <class T>
struct BatchNorm2d {
  ad::Var<T> gamma, beta;          // (1, C, 1, 1)
  Tensor<T> running_mean, running_var;
  T eps = T(1e-5);
  T momentum = T(0.1);

  BatchNorm2d() = default;
  explicit BatchNorm2d(int c)
      : gamma(ad::Var<T>::leaf(detail::filled<T>({1, c, 1, 1}, T(1)), true)),
        beta(ad::Var<T>::leaf(Tensor<T>({1, c, 1, 1}), true)),
        running_mean({1, c, 1, 1}),
        running_var(detail::filled<T>({1, c, 1, 1}, T(1))) {}

  ad::Var<T> forward(const ad::Var<T>& x, bool training) {
    Shape s = x.shape();
    ad::Var<T> mu, var;
    if (training) {
      mu = ad::channel_mean(x);
      ad::Var<T> d = ad::sub(x, ad::broadcast_chan(mu, s));
      var = ad::channel_mean(ad::mul(d, d));
      {
        ad::NoGradGuard ng;
        for (size_t i = 0; i < running_mean.v.size(); ++i) {
          running_mean.v[i] = (T(1) - momentum) * running_mean.v[i] + momentum * mu.val().v[i];
          running_var.v[i] = (T(1) - momentum) * running_var.v[i] + momentum * var.val().v[i];
        }
      }
    } else {
      mu = ad::Var<T>::leaf(running_mean);
      var = ad::Var<T>::leaf(running_var);
    }
    ad::Var<T> xhat = ad::div(ad::sub(x, ad::broadcast_chan(mu, s)),
                              ad::broadcast_chan(ad::sqrt_v(ad::add_const(var, eps)), s));
    return ad::add(ad::mul(ad::broadcast_chan(gamma, s), xhat), ad::broadcast_chan(beta, s));
  }

  void collect(const std::string& prefix, StateDict<T>& sd) {
    sd.add_param(prefix + ".gamma", &gamma);
    sd.add_param(prefix + ".beta", &beta);
    sd.add_buffer(prefix + ".running_mean", &running_mean);
    sd.add_buffer(prefix + ".running_var", &running_var);
  }
};

// Spectral normalization state for one conv weight. The weight is viewed as
// an (out, in*k*k) matrix; u and v are the persistent power-iteration
// vectors. In training mode one iteration updates them (outside the graph)
// before sigma is estimated; in eval mode the stored vectors are reused.
template <class T>
struct SpectralNorm {
  Tensor<T> u, v;  // (1,1,1,rows) and (1,1,1,cols)

  SpectralNorm() = default;
  SpectralNorm(const Tensor<T>& weight, Rng& rng) {
    int rows = weight.s.n;
    int cols = int(weight.s.count()) / rows;
    u = detail::normal_init<T>({1, 1, 1, rows}, rng, T(1));
    normalize(u.v);
    v = Tensor<T>({1, 1, 1, cols});
    power_iteration(weight);  // make the stored estimate usable before any training step
  }

  static void normalize(std::vector<T>& x) {
    T n = 0;
    for (T a : x) n += a * a;
    n = std::sqrt(n);
    if (n < T(1e-12)) n = T(1e-12);
    for (T& a : x) a /= n;
  }

  void power_iteration(const Tensor<T>& w) {
    int rows = w.s.n;
    int cols = int(w.s.count()) / rows;
    // v <- normalize(W^T u), u <- normalize(W v)
    for (int j = 0; j < cols; ++j) {
      T acc = 0;
      for (int i = 0; i < rows; ++i) acc += w.v[size_t(i) * cols + j] * u.v[i];
      v.v[j] = acc;
    }
    normalize(v.v);
    for (int i = 0; i < rows; ++i) {
      T acc = 0;
      for (int j = 0; j < cols; ++j) acc += w.v[size_t(i) * cols + j] * v.v[j];
      u.v[i] = acc;
    }
    normalize(u.v);
  }

  T sigma_estimate(const Tensor<T>& w) const {
    int rows = w.s.n;
    int cols = int(w.s.count()) / rows;
    T s = 0;
    for (int i = 0; i < rows; ++i) {
      T acc = 0;
      for (int j = 0; j < cols; ++j) acc += w.v[size_t(i) * cols + j] * v.v[j];
      s += u.v[i] * acc;
    }
    return s;
  }

  // W / sigma_hat as a graph op; u and v are treated as constants.
  ad::Var<T> apply(const ad::Var<T>& weight, bool training) {
    if (training) {
      ad::NoGradGuard ng;
      power_iteration(weight.val());
    }
    int rows = weight.shape().n;
    int cols = int(weight.shape().count()) / rows;
    Tensor<T> uv(weight.shape());
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) uv.v[size_t(i) * cols + j] = u.v[i] * v.v[j];
    ad::Var<T> sigma = ad::sum_all(ad::mul(weight, ad::Var<T>::leaf(std::move(uv))));
    if (sigma.val().v[0] < T(1e-12))
      return ad::scale(weight, T(1) / T(1e-12));
    ad::Var<T> inv = ad::div(ad::Var<T>::leaf(Tensor<T>::scalar(T(1))), sigma);
    return ad::mul(weight, ad::broadcast_full(inv, weight.shape()));
  }

  void collect(const std::string& prefix, StateDict<T>& sd) {
    sd.add_buffer(prefix + ".u", &u);
    sd.add_buffer(prefix + ".v", &v);
  }
};

template <class T>
struct SNConv2d {
  Conv2dLayer<T> conv;
  SpectralNorm<T> sn;
  bool use_sn = true;

  SNConv2d() = default;
  SNConv2d(int cin, int cout, int k, int stride, int pad, bool with_bias, bool spectral, Rng& rng)
      : conv(cin, cout, k, stride, pad, 1, with_bias, rng), use_sn(spectral) {
    if (spectral) sn = SpectralNorm<T>(conv.weight.val(), rng);
  }

  ad::Var<T> forward(const ad::Var<T>& x, bool training) {
    ad::Var<T> w = use_sn ? sn.apply(conv.weight, training) : conv.weight;
    ad::Var<T> y = ad::conv2d(x, w, conv.spec);
    if (conv.has_bias) y = ad::add(y, ad::broadcast_chan(conv.bias, y.shape()));
    return y;
  }

  void collect(const std::string& prefix, StateDict<T>& sd) {
    conv.collect(prefix, sd);
    if (use_sn) sn.collect(prefix + ".sn", sd);
  }
};

template <class T>
struct ResidualBlock {
  Conv2dLayer<T> conv1, conv2;
  BatchNorm2d<T> bn1, bn2;

  ResidualBlock() = default;
  ResidualBlock(int c, Rng& rng)
      : conv1(c, c, 3, 1, 1, 1, false, rng), conv2(c, c, 3, 1, 1, 1, false, rng), bn1(c), bn2(c) {}

  ad::Var<T> forward(const ad::Var<T>& x, bool training) {
    ad::Var<T> h = ad::relu(bn1.forward(conv1.forward(x), training));
    h = bn2.forward(conv2.forward(h), training);
    return ad::relu(ad::add(h, x));
  }

  void collect(const std::string& prefix, StateDict<T>& sd) {
    conv1.collect(prefix + ".conv1", sd);
    bn1.collect(prefix + ".bn1", sd);
    conv2.collect(prefix + ".conv2", sd);
    bn2.collect(prefix + ".bn2", sd);
  }
};

// ---------------------------------------------------------------------------
// generator

struct GeneratorConfig {
  std::array<int, 5> encoder_channels{4, 4, 8, 16, 32};
  int bottleneck_blocks = 2;
  std::array<int, 3> decoder_channels{16, 8, 8};
  int head_upsample = 4;

  void check() const {
    if (encoder_channels[0] != 4 || encoder_channels[1] != encoder_channels[0])
      throw std::invalid_argument("GeneratorConfig: first two stages must be depthwise 4->4");
    if (bottleneck_blocks != 2)
      throw std::invalid_argument("GeneratorConfig: bottleneck must have exactly 2 residual blocks");
    for (int c : encoder_channels)
      if (c <= 0) throw std::invalid_argument("GeneratorConfig: non-positive channel count");
    if (head_upsample != 4) throw std::invalid_argument("GeneratorConfig: head upsample must be 4");
  }

  json to_json() const {
    return json{{"encoder_channels", encoder_channels},
                {"bottleneck_blocks", bottleneck_blocks},
                {"decoder_channels", decoder_channels},
                {"head_upsample", head_upsample}};
  }
};

template <class T>
struct GeneratorOutput {
  ad::Var<T> A;      // (N, 3, H, W)
  ad::Var<T> B;      // (N, 1, H, W)
  ad::Var<T> alpha;  // (N, 1, H, W), clamped to [0,1]
};

template <class T>
struct Generator {
  GeneratorConfig cfg;
  Conv2dLayer<T> enc1, enc2, enc3, enc4, enc5;
  BatchNorm2d<T> bn3, bn4, bn5;
  ResidualBlock<T> res1, res2;
  Conv2dLayer<T> skip4, skip3, skip2;  // depthwise shortcut convs
  Conv2dLayer<T> dec1, dec2, dec3;
  BatchNorm2d<T> bnd1, bnd2, bnd3;
  Conv2dLayer<T> att;
  Conv2dLayer<T> head_a, head_b;

  Generator(const GeneratorConfig& c, Rng& rng) : cfg(c) {
    cfg.check();
    const auto& e = cfg.encoder_channels;
    const auto& d = cfg.decoder_channels;
    enc1 = Conv2dLayer<T>(e[0], e[0], 3, 2, 1, e[0], true, rng);
    enc2 = Conv2dLayer<T>(e[1], e[1], 3, 2, 1, e[1], true, rng);
    enc3 = Conv2dLayer<T>(e[1], e[2], 3, 2, 1, 1, false, rng);
    enc4 = Conv2dLayer<T>(e[2], e[3], 3, 2, 1, 1, false, rng);
    enc5 = Conv2dLayer<T>(e[3], e[4], 3, 2, 1, 1, false, rng);
    bn3 = BatchNorm2d<T>(e[2]);
    bn4 = BatchNorm2d<T>(e[3]);
    bn5 = BatchNorm2d<T>(e[4]);
    res1 = ResidualBlock<T>(e[4], rng);
    res2 = ResidualBlock<T>(e[4], rng);
    skip4 = Conv2dLayer<T>(e[3], e[3], 3, 1, 1, e[3], true, rng);
    skip3 = Conv2dLayer<T>(e[2], e[2], 3, 1, 1, e[2], true, rng);
    skip2 = Conv2dLayer<T>(e[1], e[1], 3, 1, 1, e[1], true, rng);
    dec1 = Conv2dLayer<T>(e[4] + e[3], d[0], 3, 1, 1, 1, false, rng);
    dec2 = Conv2dLayer<T>(d[0] + e[2], d[1], 3, 1, 1, 1, false, rng);
    dec3 = Conv2dLayer<T>(d[1] + e[1], d[2], 3, 1, 1, 1, false, rng);
    bnd1 = BatchNorm2d<T>(d[0]);
    bnd2 = BatchNorm2d<T>(d[1]);
    bnd3 = BatchNorm2d<T>(d[2]);
    att = Conv2dLayer<T>(e[1] + e[4], 1, 3, 1, 1, 1, true, rng);
    head_a = Conv2dLayer<T>(d[2], 3, 3, 1, 1, 1, true, rng);
    head_b = Conv2dLayer<T>(d[2], 1, 3, 1, 1, 1, true, rng);
  }

  // image (N,3,H,W) + mask (N,1,H,W) -> coefficient maps and matte
  GeneratorOutput<T> forward(const ad::Var<T>& image, const ad::Var<T>& mask, bool training) {
    Shape is = image.shape(), ms = mask.shape();
    if (is.c != 3 || ms.c != 1 || is.n != ms.n || is.h != ms.h || is.w != ms.w)
      throw std::invalid_argument("Generator: expected 3-channel image and matching 1-channel mask");
    if (is.h % 32 != 0 || is.w % 32 != 0)
      throw std::invalid_argument("Generator: input extents must be divisible by 32");

    ad::Var<T> x = ad::concat_c<T>({image, mask});
    ad::Var<T> e1 = enc1.forward(x);
    ad::Var<T> e2 = enc2.forward(e1);
    ad::Var<T> e3 = ad::relu(bn3.forward(enc3.forward(e2), training));
    ad::Var<T> e4 = ad::relu(bn4.forward(enc4.forward(e3), training));
    ad::Var<T> e5 = ad::relu(bn5.forward(enc5.forward(e4), training));
    ad::Var<T> b = res2.forward(res1.forward(e5, training), training);

    auto up2 = [](const ad::Var<T>& v) {
      return ad::resize_bilinear_v(v, v.shape().h * 2, v.shape().w * 2);
    };
    ad::Var<T> d1 = ad::relu(bnd1.forward(
        dec1.forward(ad::concat_c<T>({up2(b), skip4.forward(e4)})), training));
    ad::Var<T> d2 = ad::relu(bnd2.forward(
        dec2.forward(ad::concat_c<T>({up2(d1), skip3.forward(e3)})), training));
    ad::Var<T> d3 = ad::relu(bnd3.forward(
        dec3.forward(ad::concat_c<T>({up2(d2), skip2.forward(e2)})), training));

    ad::Var<T> b_up = ad::resize_bilinear_v(b, e2.shape().h, e2.shape().w);
    ad::Var<T> att_map = ad::sigmoid(att.forward(ad::concat_c<T>({e2, b_up})));
    ad::Var<T> f = ad::mul(d3, ad::spread_c(att_map, d3.shape().c));

    ad::Var<T> a_low = head_a.forward(f);
    ad::Var<T> b_low = head_b.forward(f);
    ad::Var<T> A = ad::resize_bilinear_v(a_low, is.h, is.w);
    ad::Var<T> B = ad::resize_bilinear_v(b_low, is.h, is.w);
    ad::Var<T> alpha = ad::clamp(ad::add(ad::collapse_c(ad::mul(A, image)), B), T(0), T(1));
    return {A, B, alpha};
  }

  StateDict<T> state() {
    StateDict<T> sd;
    enc1.collect("g.enc1", sd);
    enc2.collect("g.enc2", sd);
    enc3.collect("g.enc3", sd);
    bn3.collect("g.bn3", sd);
    enc4.collect("g.enc4", sd);
    bn4.collect("g.bn4", sd);
    enc5.collect("g.enc5", sd);
    bn5.collect("g.bn5", sd);
    res1.collect("g.res1", sd);
    res2.collect("g.res2", sd);
    skip4.collect("g.skip4", sd);
    skip3.collect("g.skip3", sd);
    skip2.collect("g.skip2", sd);
    dec1.collect("g.dec1", sd);
    bnd1.collect("g.bnd1", sd);
    dec2.collect("g.dec2", sd);
    bnd2.collect("g.bnd2", sd);
    dec3.collect("g.dec3", sd);
    bnd3.collect("g.bnd3", sd);
    att.collect("g.att", sd);
    head_a.collect("g.head_a", sd);
    head_b.collect("g.head_b", sd);
    return sd;
  }

  size_t param_count() {
    auto sd = state();
    return count_parameters(sd);
  }
};

// ---------------------------------------------------------------------------
// discriminator

struct DiscriminatorConfig {
  int in_channels = 5;
  std::vector<int> channels{32, 64, 128, 128};
  int kernel = 4;
  bool spectral_norm = true;
  double leaky_slope = 0.2;

  void check() const {
    if (in_channels <= 0 || channels.empty() || kernel < 2)
      throw std::invalid_argument("DiscriminatorConfig: invalid configuration");
  }

  json to_json() const {
    return json{{"in_channels", in_channels},
                {"channels", channels},
                {"kernel", kernel},
                {"spectral_norm", spectral_norm},
                {"leaky_slope", leaky_slope}};
  }
};

template <class T>
struct Discriminator {
  DiscriminatorConfig cfg;
  std::vector<SNConv2d<T>> stages;
  std::vector<BatchNorm2d<T>> bns;  // bns[i] for stage i >= 1
  SNConv2d<T> final_conv;

  Discriminator(const DiscriminatorConfig& c, Rng& rng) : cfg(c) {
    cfg.check();
    int cin = cfg.in_channels;
    for (size_t i = 0; i < cfg.channels.size(); ++i) {
      int cout = cfg.channels[i];
      bool with_bias = (i == 0);  // later stages feed batch norm
      stages.emplace_back(cin, cout, cfg.kernel, 2, 1, with_bias, cfg.spectral_norm, rng);
      if (i >= 1) bns.emplace_back(cout);
      cin = cout;
    }
    final_conv = SNConv2d<T>(cin, 1, cfg.kernel, 1, 1, true, cfg.spectral_norm, rng);
  }

  // (alpha, image, mask) -> patch logit grid (N, 1, h, w)
  ad::Var<T> forward(const ad::Var<T>& alpha, const ad::Var<T>& image, const ad::Var<T>& mask,
                     bool training) {
    Shape as = alpha.shape(), is = image.shape(), ms = mask.shape();
    if (is.c + ms.c + as.c != cfg.in_channels)
      throw std::invalid_argument("Discriminator: triplet channels do not match configuration");
    if (as.h != is.h || as.w != is.w || ms.h != is.h || ms.w != is.w || as.n != is.n || ms.n != is.n)
      throw std::invalid_argument("Discriminator: triplet extents do not match");
    ad::Var<T> x = ad::concat_c<T>({image, mask, alpha});
    for (size_t i = 0; i < stages.size(); ++i) {
      x = stages[i].forward(x, training);
      if (i >= 1) x = bns[i - 1].forward(x, training);
      x = ad::leaky_relu(x, T(cfg.leaky_slope));
    }
    return final_conv.forward(x, training);
  }

  StateDict<T> state() {
    StateDict<T> sd;
    for (size_t i = 0; i < stages.size(); ++i) {
      stages[i].collect("d.stage" + std::to_string(i + 1), sd);
      if (i >= 1) bns[i - 1].collect("d.bn" + std::to_string(i + 1), sd);
    }
    final_conv.collect("d.final", sd);
    return sd;
  }

  size_t param_count() {
    auto sd = state();
    return count_parameters(sd);
  }
};

// ---------------------------------------------------------------------------
// checkpoint container: magic, u64 manifest length, JSON manifest, raw data

inline constexpr char kCheckpointMagic[8] = {'M', 'F', 'C', 'K', 'P', 'T', '1', '\n'};

template <class T>
const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else return "f64";
}

template <class T>
void save_checkpoint(const std::string& path, const StateDict<T>& sd, const json& extra) {
  json manifest = extra;
  manifest["schema"] = 1;
  manifest["dtype"] = dtype_name<T>();
  json tensors = json::array();
  auto describe = [&](const std::string& name, const Shape& s, const char* kind) {
    tensors.push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}, {"kind", kind}});
  };
  for (const auto& [name, v] : sd.params) describe(name, v->shape(), "param");
  for (const auto& [name, t] : sd.buffers) describe(name, t->s, "buffer");
  manifest["tensors"] = std::move(tensors);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(kCheckpointMagic, 8);
  std::string m = manifest.dump();
  uint64_t len = m.size();
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(m.data(), std::streamsize(m.size()));
  auto dump = [&](const Tensor<T>& t) {
    f.write(reinterpret_cast<const char*>(t.v.data()), std::streamsize(t.v.size() * sizeof(T)));
  };
  for (const auto& [name, v] : sd.params) dump(v->val());
  for (const auto& [name, t] : sd.buffers) dump(*t);
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

// Loads tensors into an existing state dict; returns the manifest. Any
// name, order, shape, or dtype mismatch throws with a description.
template <class T>
json load_checkpoint(const std::string& path, StateDict<T>& sd) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || !std::equal(magic, magic + 8, kCheckpointMagic))
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 8);
  std::string m(len, '\0');
  f.read(m.data(), std::streamsize(len));
  if (!f) throw std::runtime_error("load_checkpoint: truncated manifest in " + path);
  json manifest = json::parse(m);
  if (manifest.at("schema").get<int>() != 1)
    throw std::runtime_error("load_checkpoint: unsupported schema");
  if (manifest.at("dtype").get<std::string>() != dtype_name<T>())
    throw std::runtime_error("load_checkpoint: dtype mismatch, file has " +
                             manifest.at("dtype").get<std::string>());

  const json& tensors = manifest.at("tensors");
  size_t expected = sd.params.size() + sd.buffers.size();
  if (tensors.size() != expected) {
    std::ostringstream os;
    os << "load_checkpoint: tensor count mismatch (file " << tensors.size() << ", model "
       << expected << ")";
    throw std::runtime_error(os.str());
  }
  size_t idx = 0;
  auto read_into = [&](const std::string& name, Tensor<T>& t) {
    const json& e = tensors.at(idx++);
    std::string fname = e.at("name").get<std::string>();
    auto fs = e.at("shape").get<std::array<int, 4>>();
    Shape want = t.s;
    if (fname != name || Shape{fs[0], fs[1], fs[2], fs[3]} != want) {
      std::ostringstream os;
      os << "load_checkpoint: mismatch at entry " << idx - 1 << ": file has '" << fname << "' ["
         << fs[0] << "," << fs[1] << "," << fs[2] << "," << fs[3] << "], model expects '" << name
         << "' " << want.str();
      throw std::runtime_error(os.str());
    }
    f.read(reinterpret_cast<char*>(t.v.data()), std::streamsize(t.v.size() * sizeof(T)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated data at '" + name + "'");
  };
  for (auto& [name, v] : sd.params) read_into(name, v->mutable_val());
  for (auto& [name, t] : sd.buffers) read_into(name, *t);
  return manifest;
}

}  // namespace mf::nn
