#pragma once

// Training objectives: global L1, boundary-weighted local loss, least-squares
// adversarial losses with gradient penalty, the differentiable Gabor loss,
// and the weighted full generator loss.

#include <cmath>
#include <stdexcept>
#include <type_traits>

#include "matteforge/autodiff.hpp"
#include "matteforge/gabor.hpp"
#include "matteforge/image.hpp"
#include "matteforge/imgproc.hpp"
#include "matteforge/rng.hpp"

namespace mf::obj {

struct LossWeights {
  double lambda_g = 10.0;
  double lambda_l = 1.0;
  double lambda_gb = 200.0;
  double lambda_adv = 1.0;
  double lambda_gp = 10.0;
  double eps_local = 0.01;
  int local_dilation = 7;

  void check() const {
    if (lambda_g < 0 || lambda_l < 0 || lambda_gb < 0 || lambda_adv < 0 || lambda_gp < 0)
      throw std::invalid_argument("LossWeights: weights must be non-negative");
    if (eps_local < 0 || local_dilation < 1)
      throw std::invalid_argument("LossWeights: invalid local-loss parameters");
  }
};

// ---------------------------------------------------------------------------
// pixel losses

// mean over batch and pixels of |alpha - alpha_pred|
template <class T>
ad::Var<T> global_loss(const ad::Var<T>& alpha, const ad::Var<T>& alpha_pred) {
  return ad::mean_all(ad::abs_v(ad::sub(alpha, alpha_pred)));
}

// 1 where |alpha - mask| > eps, then dilated; weighting mask for the local loss
inline GrayMap boundary_map(const GrayMap& alpha, const GrayMap& mask, double eps, int dilation_k) {
  if (!alpha.same_extent(mask)) throw std::invalid_argument("boundary_map: extents differ");
  GrayMap d(alpha.h, alpha.w);
  for (size_t i = 0; i < d.v.size(); ++i) d.v[i] = std::abs(alpha.v[i] - mask.v[i]) > eps ? 1.0 : 0.0;
  return dilate(d, StructuringElement(dilation_k));
}

// batch variant on (N,1,H,W) tensors
template <class T>
Tensor<T> boundary_map(const Tensor<T>& alpha, const Tensor<T>& mask, double eps, int dilation_k) {
  if (alpha.s != mask.s || alpha.s.c != 1)
    throw std::invalid_argument("boundary_map: expected matching (N,1,H,W) tensors");
  Tensor<T> out(alpha.s);
  GrayMap plane(alpha.s.h, alpha.s.w);
  size_t hw = plane.v.size();
  for (int n = 0; n < alpha.s.n; ++n) {
    for (size_t i = 0; i < hw; ++i) {
      double diff = std::abs(double(alpha.v[size_t(n) * hw + i]) - double(mask.v[size_t(n) * hw + i]));
      plane.v[i] = diff > eps ? 1.0 : 0.0;
    }
    GrayMap dil = dilate(plane, StructuringElement(dilation_k));
    for (size_t i = 0; i < hw; ++i) out.v[size_t(n) * hw + i] = T(dil.v[i]);
  }
  return out;
}

// mean over pixels of boundary-weighted |alpha - alpha_pred|; the boundary
// map is computed from (alpha, mask) values and treated as a constant
template <class T>
ad::Var<T> local_loss(const ad::Var<T>& alpha, const ad::Var<T>& alpha_pred, const ad::Var<T>& mask,
                      const LossWeights& w) {
  Tensor<T> delta = boundary_map(alpha.val(), mask.val(), w.eps_local, w.local_dilation);
  return ad::mean_all(ad::mul(ad::Var<T>::leaf(std::move(delta)), ad::abs_v(ad::sub(alpha, alpha_pred))));
}

// ---------------------------------------------------------------------------
// differentiable Gabor loss

// fixed (16,1,7,7) conv weight built from the kernel bank
template <class T>
ad::Var<T> bank_weight(const GaborBank& bank) {
  if (bank.kernels.empty()) throw std::invalid_argument("bank_weight: empty bank");
  int kh = bank.kernels[0].h, kw = bank.kernels[0].w;
  Tensor<T> w({int(bank.kernels.size()), 1, kh, kw});
  for (size_t f = 0; f < bank.kernels.size(); ++f) {
    if (bank.kernels[f].h != kh || bank.kernels[f].w != kw)
      throw std::invalid_argument("bank_weight: inconsistent kernel extents");
    for (size_t i = 0; i < bank.kernels[f].v.size(); ++i)
      w.v[f * bank.kernels[f].v.size() + i] = T(bank.kernels[f].v[i]);
  }
  return ad::Var<T>::leaf(std::move(w));
}

// sum over filters of the per-pixel mean squared response difference
template <class T>
ad::Var<T> gabor_loss_v(const ad::Var<T>& alpha, const ad::Var<T>& alpha_pred,
                        const ad::Var<T>& bank_w) {
  int pad = bank_w.shape().h / 2;
  ad::ConvSpec cs{1, pad, 1};
  ad::Var<T> d = ad::sub(ad::conv2d(alpha, bank_w, cs), ad::conv2d(alpha_pred, bank_w, cs));
  return ad::sum_all(ad::channel_mean(ad::mul(d, d)));
}

// ---------------------------------------------------------------------------
// adversarial losses; D is a callable (alpha, image, mask) -> patch logits

template <class T, class DFn>
ad::Var<T> d_loss(DFn&& D, const ad::Var<T>& alpha, const ad::Var<T>& alpha_pred,
                  const ad::Var<T>& image, const ad::Var<T>& mask) {
  ad::Var<T> real = D(alpha, image, mask);
  ad::Var<T> fake = D(alpha_pred.detach(), image, mask);
  ad::Var<T> r1 = ad::add_const(real, T(-1));
  return ad::add(ad::mean_all(ad::mul(r1, r1)), ad::mean_all(ad::mul(fake, fake)));
}

template <class T, class DFn>
ad::Var<T> g_adv_loss(DFn&& D, const ad::Var<T>& alpha_pred, const ad::Var<T>& image,
                      const ad::Var<T>& mask) {
  ad::Var<T> f1 = ad::add_const(D(alpha_pred, image, mask), T(-1));
  return ad::mean_all(ad::mul(f1, f1));
}

// mean over patch grid of the fake logits shifted to the real label;
// convenience overload when the logits are already computed
template <class T>
ad::Var<T> g_adv_loss(const ad::Var<T>& fake_logits) {
  ad::Var<T> f1 = ad::add_const(fake_logits, T(-1));
  return ad::mean_all(ad::mul(f1, f1));
}

// lambda_gp * mean_n (||grad_{alpha_hat} D||_2 - 1)^2 with alpha_hat a
// per-sample convex combination of real and predicted mattes. The patch
// grid is reduced to a per-sample mean logit before differentiation.
template <class T, class DFn>
ad::Var<T> gradient_penalty(DFn&& D, const ad::Var<T>& alpha, const ad::Var<T>& alpha_pred,
                            const ad::Var<T>& image, const ad::Var<T>& mask, double lambda_gp,
                            Rng& rng) {
  Shape s = alpha.shape();
  if (s != alpha_pred.shape()) throw std::invalid_argument("gradient_penalty: extents differ");
  Tensor<T> hat(s);
  size_t per = s.count() / size_t(s.n);
  for (int n = 0; n < s.n; ++n) {
    T t = T(rng.uniform());
    for (size_t i = 0; i < per; ++i) {
      size_t idx = size_t(n) * per + i;
      hat.v[idx] = t * alpha.val().v[idx] + (T(1) - t) * alpha_pred.val().v[idx];
    }
  }
  ad::Var<T> alpha_hat = ad::Var<T>::leaf(std::move(hat), true);

  ad::Var<T> logits = D(alpha_hat, image, mask);
  Shape ls = logits.shape();
  ad::Var<T> per_sample_mean = ad::scale(ad::sum_per_sample(logits), T(1) / T(ls.count() / size_t(ls.n)));
  ad::Var<T> score = ad::sum_all(per_sample_mean);

  ad::Var<T> g = ad::backward(score, {alpha_hat}, /*create_graph=*/true)[0];
  constexpr T kSqrtEps = std::is_same_v<T, float> ? T(1e-12) : T(1e-20);
  ad::Var<T> norm = ad::sqrt_v(ad::add_const(ad::sum_per_sample(ad::mul(g, g)), kSqrtEps));
  ad::Var<T> dev = ad::add_const(norm, T(-1));
  return ad::scale(ad::mean_all(ad::mul(dev, dev)), T(lambda_gp));
}

// ---------------------------------------------------------------------------
// full generator loss

template <class T>
struct GeneratorLossTerms {
  ad::Var<T> total;
  T global = 0, local = 0, gabor = 0, adv = 0;  // unweighted values, for logging
};

template <class T>
GeneratorLossTerms<T> full_generator_loss(const ad::Var<T>& alpha, const ad::Var<T>& alpha_pred,
                                          const ad::Var<T>& mask, const ad::Var<T>& fake_logits,
                                          const ad::Var<T>& bank_w, const LossWeights& w) {
  w.check();
  ad::Var<T> lg = global_loss(alpha, alpha_pred);
  ad::Var<T> ll = local_loss(alpha, alpha_pred, mask, w);
  ad::Var<T> lgb = gabor_loss_v(alpha, alpha_pred, bank_w);
  ad::Var<T> ladv = g_adv_loss(fake_logits);
  GeneratorLossTerms<T> out;
  out.global = lg.val().v[0];
  out.local = ll.val().v[0];
  out.gabor = lgb.val().v[0];
  out.adv = ladv.val().v[0];
  out.total = ad::add(ad::add(ad::scale(lg, T(w.lambda_g)), ad::scale(ll, T(w.lambda_l))),
                      ad::add(ad::scale(lgb, T(w.lambda_gb)), ad::scale(ladv, T(w.lambda_adv))));
  return out;
}

}  // namespace mf::obj
