#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "matteforge/tensor.hpp"

// Reverse-mode autodiff on a dynamic tape. Each vjp is itself expressed in
// tape primitives, so calling backward() with create_graph builds a
// differentiable gradient graph (required for the gradient penalty, which
// backpropagates through a backward pass).

namespace mf::ad {

template <class T>
class Var;

template <class T>
struct Node {
  Tensor<T> val;
  bool requires_grad = false;
  std::vector<Var<T>> parents;
  std::function<std::vector<Var<T>>(const Var<T>&)> vjp;
};

inline thread_local bool g_grad_enabled = true;

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
  ~NoGradGuard() { g_grad_enabled = prev; }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Var leaf(Tensor<T> t, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(t);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& val() const { return node_->val; }
  Tensor<T>& mutable_val() { return node_->val; }
  Shape shape() const { return node_->val.s; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Node<T>* raw() const { return node_.get(); }

  // Same value, cut from the graph.
  Var detach() const { return leaf(node_->val, false); }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> make_op(Tensor<T> result, std::vector<Var<T>> parents,
               std::function<std::vector<Var<T>>(const Var<T>&)> vjp) {
  bool track = false;
  if (g_grad_enabled)
    for (const auto& p : parents)
      if (p.requires_grad()) track = true;
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(result);
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->vjp = std::move(vjp);
  }
  return Var<T>(std::move(n));
}

// ---------------------------------------------------------------------------
// elementwise and scalar ops

namespace detail {

template <class T>
void check_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

}  // namespace detail

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check_same(a, b, "add");
  Tensor<T> r = a.val();
  for (size_t i = 0; i < r.v.size(); ++i) r.v[i] += b.val().v[i];
  return make_op<T>(std::move(r), {a, b}, [](const Var<T>& g) { return std::vector<Var<T>>{g, g}; });
}

template <class T>
Var<T> neg(const Var<T>& a) {
  Tensor<T> r = a.val();
  for (auto& x : r.v) x = -x;
  return make_op<T>(std::move(r), {a}, [](const Var<T>& g) { return std::vector<Var<T>>{neg(g)}; });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::check_same(a, b, "sub");
  Tensor<T> r = a.val();
  for (size_t i = 0; i < r.v.size(); ++i) r.v[i] -= b.val().v[i];
  return make_op<T>(std::move(r), {a, b}, [](const Var<T>& g) { return std::vector<Var<T>>{g, neg(g)}; });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::check_same(a, b, "mul");
  Tensor<T> r = a.val();
  for (size_t i = 0; i < r.v.size(); ++i) r.v[i] *= b.val().v[i];
  return make_op<T>(std::move(r), {a, b},
                    [a, b](const Var<T>& g) { return std::vector<Var<T>>{mul(g, b), mul(g, a)}; });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  detail::check_same(a, b, "div");
  Tensor<T> r = a.val();
  for (size_t i = 0; i < r.v.size(); ++i) r.v[i] /= b.val().v[i];
  return make_op<T>(std::move(r), {a, b}, [a, b](const Var<T>& g) {
    return std::vector<Var<T>>{div(g, b), neg(div(mul(g, a), mul(b, b)))};
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T k) {
  Tensor<T> r = a.val();
  for (auto& x : r.v) x *= k;
  return make_op<T>(std::move(r), {a}, [k](const Var<T>& g) { return std::vector<Var<T>>{scale(g, k)}; });
}

template <class T>
Var<T> add_const(const Var<T>& a, T k) {
  Tensor<T> r = a.val();
  for (auto& x : r.v) x += k;
  return make_op<T>(std::move(r), {a}, [](const Var<T>& g) { return std::vector<Var<T>>{g}; });
}

template <class T>
Var<T> sqrt_v(const Var<T>& a) {
  Tensor<T> r = a.val();
  for (auto& x : r.v) x = std::sqrt(x);
  return make_op<T>(std::move(r), {a}, [a](const Var<T>& g) {
    return std::vector<Var<T>>{scale(div(g, sqrt_v(a)), T(0.5))};
  });
}

template <class T>
Var<T> abs_v(const Var<T>& a) {
  Tensor<T> r = a.val();
  Tensor<T> sign(a.shape());
  for (size_t i = 0; i < r.v.size(); ++i) {
    sign.v[i] = r.v[i] > 0 ? T(1) : (r.v[i] < 0 ? T(-1) : T(0));
    r.v[i] = std::abs(r.v[i]);
  }
  auto sign_var = Var<T>::leaf(std::move(sign));
  return make_op<T>(std::move(r), {a},
                    [sign_var](const Var<T>& g) { return std::vector<Var<T>>{mul(g, sign_var)}; });
}

// Piecewise-linear activations keep their masks as constants; the masks are
// locally constant so grad-of-grad stays exact.
template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tensor<T> r = a.val();
  Tensor<T> mask(a.shape());
  for (size_t i = 0; i < r.v.size(); ++i) {
    mask.v[i] = r.v[i] > 0 ? T(1) : slope;
    r.v[i] *= mask.v[i];
  }
  auto mask_var = Var<T>::leaf(std::move(mask));
  return make_op<T>(std::move(r), {a},
                    [mask_var](const Var<T>& g) { return std::vector<Var<T>>{mul(g, mask_var)}; });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  return leaky_relu(a, T(0));
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> r = a.val();
  Tensor<T> deriv(a.shape());
  for (size_t i = 0; i < r.v.size(); ++i) {
    T y = T(1) / (T(1) + std::exp(-r.v[i]));
    r.v[i] = y;
    deriv.v[i] = y * (T(1) - y);
  }
  auto deriv_var = Var<T>::leaf(std::move(deriv));
  return make_op<T>(std::move(r), {a},
                    [deriv_var](const Var<T>& g) { return std::vector<Var<T>>{mul(g, deriv_var)}; });
}

template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  Tensor<T> r = a.val();
  Tensor<T> mask(a.shape());
  for (size_t i = 0; i < r.v.size(); ++i) {
    mask.v[i] = (r.v[i] > lo && r.v[i] < hi) ? T(1) : T(0);
    r.v[i] = std::min(hi, std::max(lo, r.v[i]));
  }
  auto mask_var = Var<T>::leaf(std::move(mask));
  return make_op<T>(std::move(r), {a},
                    [mask_var](const Var<T>& g) { return std::vector<Var<T>>{mul(g, mask_var)}; });
}

// ---------------------------------------------------------------------------
// reductions and broadcasts (linear adjoint pairs)

template <class T>
Var<T> broadcast_full(const Var<T>& s, Shape shape);

template <class T>
Var<T> sum_all(const Var<T>& a) {
  T acc = T(0);
  for (auto x : a.val().v) acc += x;
  Shape in_shape = a.shape();
  return make_op<T>(Tensor<T>::scalar(acc), {a}, [in_shape](const Var<T>& g) {
    return std::vector<Var<T>>{broadcast_full(g, in_shape)};
  });
}

template <class T>
Var<T> broadcast_full(const Var<T>& s, Shape shape) {
  if (s.shape().count() != 1) throw std::invalid_argument("broadcast_full: source must be scalar");
  Tensor<T> r(shape, s.val().v[0]);
  return make_op<T>(std::move(r), {s}, [](const Var<T>& g) { return std::vector<Var<T>>{sum_all(g)}; });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T(1) / T(a.shape().count()));
}

template <class T>
Var<T> broadcast_n(const Var<T>& s, Shape shape);

template <class T>
Var<T> sum_per_sample(const Var<T>& a) {
  Shape in_shape = a.shape();
  Tensor<T> r(Shape{in_shape.n, 1, 1, 1});
  size_t per = in_shape.count() / in_shape.n;
  for (int n = 0; n < in_shape.n; ++n) {
    T acc = T(0);
    for (size_t i = 0; i < per; ++i) acc += a.val().v[size_t(n) * per + i];
    r.v[n] = acc;
  }
  return make_op<T>(std::move(r), {a}, [in_shape](const Var<T>& g) {
    return std::vector<Var<T>>{broadcast_n(g, in_shape)};
  });
}

template <class T>
Var<T> broadcast_n(const Var<T>& s, Shape shape) {
  if (s.shape().n != shape.n || s.shape().count() != size_t(shape.n))
    throw std::invalid_argument("broadcast_n: source must be (n,1,1,1)");
  Tensor<T> r(shape);
  size_t per = shape.count() / shape.n;
  for (int n = 0; n < shape.n; ++n)
    for (size_t i = 0; i < per; ++i) r.v[size_t(n) * per + i] = s.val().v[n];
  return make_op<T>(std::move(r), {s}, [](const Var<T>& g) { return std::vector<Var<T>>{sum_per_sample(g)}; });
}

template <class T>
Var<T> broadcast_chan(const Var<T>& s, Shape shape);

template <class T>
Var<T> channel_sum(const Var<T>& a) {
  Shape in_shape = a.shape();
  Tensor<T> r(Shape{1, in_shape.c, 1, 1});
  size_t hw = size_t(in_shape.h) * in_shape.w;
  for (int n = 0; n < in_shape.n; ++n)
    for (int c = 0; c < in_shape.c; ++c) {
      T acc = T(0);
      const T* src = a.val().v.data() + (size_t(n) * in_shape.c + c) * hw;
      for (size_t i = 0; i < hw; ++i) acc += src[i];
      r.v[c] += acc;
    }
  return make_op<T>(std::move(r), {a}, [in_shape](const Var<T>& g) {
    return std::vector<Var<T>>{broadcast_chan(g, in_shape)};
  });
}

template <class T>
Var<T> broadcast_chan(const Var<T>& s, Shape shape) {
  if (s.shape().c != shape.c || s.shape().count() != size_t(shape.c))
    throw std::invalid_argument("broadcast_chan: source must be (1,c,1,1)");
  Tensor<T> r(shape);
  size_t hw = size_t(shape.h) * shape.w;
  for (int n = 0; n < shape.n; ++n)
    for (int c = 0; c < shape.c; ++c) {
      T val = s.val().v[c];
      T* dst = r.v.data() + (size_t(n) * shape.c + c) * hw;
      for (size_t i = 0; i < hw; ++i) dst[i] = val;
    }
  return make_op<T>(std::move(r), {s}, [](const Var<T>& g) { return std::vector<Var<T>>{channel_sum(g)}; });
}

template <class T>
Var<T> channel_mean(const Var<T>& a) {
  Shape s = a.shape();
  return scale(channel_sum(a), T(1) / T(size_t(s.n) * s.h * s.w));
}

template <class T>
Var<T> view(const Var<T>& a, Shape shape) {
  if (shape.count() != a.shape().count()) throw std::invalid_argument("view: element count mismatch");
  Tensor<T> r = a.val();
  r.s = shape;
  Shape orig = a.shape();
  return make_op<T>(std::move(r), {a}, [orig](const Var<T>& g) { return std::vector<Var<T>>{view(g, orig)}; });
}

template <class T>
Var<T> collapse_c(const Var<T>& a);

// Repeats a single-channel map across C channels; adjoint of collapse_c.
template <class T>
Var<T> spread_c(const Var<T>& a, int C) {
  Shape in = a.shape();
  if (in.c != 1) throw std::invalid_argument("spread_c: source must have one channel");
  Shape out_shape{in.n, C, in.h, in.w};
  Tensor<T> r(out_shape);
  size_t hw = size_t(in.h) * in.w;
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < C; ++c)
      std::copy_n(a.val().v.data() + size_t(n) * hw, hw, r.v.data() + (size_t(n) * C + c) * hw);
  return make_op<T>(std::move(r), {a}, [](const Var<T>& g) { return std::vector<Var<T>>{collapse_c(g)}; });
}

// Sums all channels down to one.
template <class T>
Var<T> collapse_c(const Var<T>& a) {
  Shape in = a.shape();
  Shape out_shape{in.n, 1, in.h, in.w};
  Tensor<T> r(out_shape);
  size_t hw = size_t(in.h) * in.w;
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c) {
      const T* src = a.val().v.data() + (size_t(n) * in.c + c) * hw;
      T* dst = r.v.data() + size_t(n) * hw;
      for (size_t i = 0; i < hw; ++i) dst[i] += src[i];
    }
  int C = in.c;
  return make_op<T>(std::move(r), {a}, [C](const Var<T>& g) { return std::vector<Var<T>>{spread_c(g, C)}; });
}

// ---------------------------------------------------------------------------
// channel concat / slice

template <class T>
Var<T> slice_c(const Var<T>& a, int c0, int len);

template <class T>
Var<T> embed_c(const Var<T>& a, int c0, int c_total) {
  Shape in = a.shape();
  Shape out_shape{in.n, c_total, in.h, in.w};
  Tensor<T> r(out_shape);
  size_t hw = size_t(in.h) * in.w;
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c)
      std::copy_n(a.val().v.data() + (size_t(n) * in.c + c) * hw, hw,
                  r.v.data() + (size_t(n) * c_total + c0 + c) * hw);
  int len = in.c;
  return make_op<T>(std::move(r), {a},
                    [c0, len](const Var<T>& g) { return std::vector<Var<T>>{slice_c(g, c0, len)}; });
}

template <class T>
Var<T> slice_c(const Var<T>& a, int c0, int len) {
  Shape in = a.shape();
  if (c0 < 0 || c0 + len > in.c) throw std::invalid_argument("slice_c: channel range out of bounds");
  Shape out_shape{in.n, len, in.h, in.w};
  Tensor<T> r(out_shape);
  size_t hw = size_t(in.h) * in.w;
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < len; ++c)
      std::copy_n(a.val().v.data() + (size_t(n) * in.c + c0 + c) * hw, hw, r.v.data() + (size_t(n) * len + c) * hw);
  int c_total = in.c;
  return make_op<T>(std::move(r), {a},
                    [c0, c_total](const Var<T>& g) { return std::vector<Var<T>>{embed_c(g, c0, c_total)}; });
}

template <class T>
Var<T> concat_c(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_c: no inputs");
  Shape base = parts[0].shape();
  int c_total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.n != base.n || s.h != base.h || s.w != base.w) throw std::invalid_argument("concat_c: extent mismatch");
    c_total += s.c;
  }
  Shape out_shape{base.n, c_total, base.h, base.w};
  Tensor<T> r(out_shape);
  size_t hw = size_t(base.h) * base.w;
  std::vector<int> offsets;
  int off = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    offsets.push_back(off);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        std::copy_n(p.val().v.data() + (size_t(n) * s.c + c) * hw, hw,
                    r.v.data() + (size_t(n) * c_total + off + c) * hw);
    off += s.c;
  }
  std::vector<int> lens;
  for (const auto& p : parts) lens.push_back(p.shape().c);
  return make_op<T>(std::move(r), parts, [offsets, lens](const Var<T>& g) {
    std::vector<Var<T>> grads;
    for (size_t i = 0; i < lens.size(); ++i) grads.push_back(slice_c(g, offsets[i], lens[i]));
    return grads;
  });
}

// ---------------------------------------------------------------------------
// convolution family (im2col + GEMM); zero padding only

struct ConvSpec {
  int stride = 1;
  int pad = 0;
  int groups = 1;
};

namespace detail {

inline int conv_out_extent(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// col is (Cg*kh*kw) x (OH*OW), row-major.
template <class T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad, int OH, int OW, T* col) {
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        T* dst = col + ((size_t(c) * kh + ky) * kw + kx) * (size_t(OH) * OW);
        for (int oy = 0; oy < OH; ++oy) {
          int sy = oy * stride + ky - pad;
          if (sy < 0 || sy >= H) {
            std::fill_n(dst + size_t(oy) * OW, OW, T(0));
            continue;
          }
          const T* src_row = x + (size_t(c) * H + sy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int sx = ox * stride + kx - pad;
            dst[size_t(oy) * OW + ox] = (sx < 0 || sx >= W) ? T(0) : src_row[sx];
          }
        }
      }
}

template <class T>
void col2im_acc(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad, int OH, int OW, T* x) {
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const T* src = col + ((size_t(c) * kh + ky) * kw + kx) * (size_t(OH) * OW);
        for (int oy = 0; oy < OH; ++oy) {
          int sy = oy * stride + ky - pad;
          if (sy < 0 || sy >= H) continue;
          T* dst_row = x + (size_t(c) * H + sy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int sx = ox * stride + kx - pad;
            if (sx >= 0 && sx < W) dst_row[sx] += src[size_t(oy) * OW + ox];
          }
        }
      }
}

template <class T>
Tensor<T> conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, const ConvSpec& cs) {
  int N = x.s.n, C = x.s.c, H = x.s.h, W = x.s.w;
  int Cout = w.s.n, Cg = w.s.c, kh = w.s.h, kw = w.s.w;
  int g = cs.groups;
  if (C % g != 0 || Cout % g != 0 || C / g != Cg)
    throw std::invalid_argument("conv2d: channel/group mismatch");
  int OH = conv_out_extent(H, kh, cs.stride, cs.pad);
  int OW = conv_out_extent(W, kw, cs.stride, cs.pad);
  if (OH < 1 || OW < 1) throw std::invalid_argument("conv2d: output extent would be empty");
  Tensor<T> y(Shape{N, Cout, OH, OW});
  int K = Cg * kh * kw, M = OH * OW, Coutg = Cout / g;
  std::vector<T> col(size_t(K) * M);
  for (int n = 0; n < N; ++n)
    for (int gi = 0; gi < g; ++gi) {
      const T* xg = x.v.data() + (size_t(n) * C + size_t(gi) * Cg) * H * W;
      im2col(xg, Cg, H, W, kh, kw, cs.stride, cs.pad, OH, OW, col.data());
      const T* wg = w.v.data() + size_t(gi) * Coutg * K;
      T* yg = y.v.data() + (size_t(n) * Cout + size_t(gi) * Coutg) * M;
      gemm(false, false, Coutg, M, K, T(1), wg, K, col.data(), M, T(0), yg, M);
    }
  return y;
}

template <class T>
Tensor<T> conv2d_input_fwd(const Tensor<T>& gy, const Tensor<T>& w, const ConvSpec& cs, Shape x_shape) {
  int N = x_shape.n, C = x_shape.c, H = x_shape.h, W = x_shape.w;
  int Cout = w.s.n, Cg = w.s.c, kh = w.s.h, kw = w.s.w;
  int g = cs.groups, Coutg = Cout / g;
  int OH = gy.s.h, OW = gy.s.w;
  Tensor<T> dx(x_shape);
  int K = Cg * kh * kw, M = OH * OW;
  std::vector<T> col(size_t(K) * M);
  for (int n = 0; n < N; ++n)
    for (int gi = 0; gi < g; ++gi) {
      const T* wg = w.v.data() + size_t(gi) * Coutg * K;
      const T* gyg = gy.v.data() + (size_t(n) * Cout + size_t(gi) * Coutg) * M;
      gemm(true, false, K, M, Coutg, T(1), wg, K, gyg, M, T(0), col.data(), M);
      T* xg = dx.v.data() + (size_t(n) * C + size_t(gi) * Cg) * H * W;
      col2im_acc(col.data(), Cg, H, W, kh, kw, cs.stride, cs.pad, OH, OW, xg);
    }
  return dx;
}

template <class T>
Tensor<T> conv2d_weight_fwd(const Tensor<T>& x, const Tensor<T>& gy, const ConvSpec& cs, Shape w_shape) {
  int N = x.s.n, C = x.s.c, H = x.s.h, W = x.s.w;
  int Cout = w_shape.n, Cg = w_shape.c, kh = w_shape.h, kw = w_shape.w;
  int g = cs.groups, Coutg = Cout / g;
  int OH = gy.s.h, OW = gy.s.w;
  Tensor<T> dw(w_shape);
  int K = Cg * kh * kw, M = OH * OW;
  std::vector<T> col(size_t(K) * M);
  for (int n = 0; n < N; ++n)  // serial sample accumulation keeps results deterministic
    for (int gi = 0; gi < g; ++gi) {
      const T* xg = x.v.data() + (size_t(n) * C + size_t(gi) * Cg) * H * W;
      im2col(xg, Cg, H, W, kh, kw, cs.stride, cs.pad, OH, OW, col.data());
      const T* gyg = gy.v.data() + (size_t(n) * Cout + size_t(gi) * Coutg) * M;
      T* dwg = dw.v.data() + size_t(gi) * Coutg * K;
      gemm(false, true, Coutg, K, M, T(1), gyg, M, col.data(), M, T(1), dwg, K);
    }
  return dw;
}

}  // namespace detail

template <class T>
Var<T> conv2d_input(const Var<T>& gy, const Var<T>& w, ConvSpec cs, Shape x_shape);
template <class T>
Var<T> conv2d_weight(const Var<T>& x, const Var<T>& gy, ConvSpec cs, Shape w_shape);

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, ConvSpec cs) {
  Tensor<T> y = detail::conv2d_fwd(x.val(), w.val(), cs);
  Shape x_shape = x.shape(), w_shape = w.shape();
  return make_op<T>(std::move(y), {x, w}, [x, w, cs, x_shape, w_shape](const Var<T>& g) {
    return std::vector<Var<T>>{conv2d_input(g, w, cs, x_shape), conv2d_weight(x, g, cs, w_shape)};
  });
}

template <class T>
Var<T> conv2d_input(const Var<T>& gy, const Var<T>& w, ConvSpec cs, Shape x_shape) {
  Tensor<T> dx = detail::conv2d_input_fwd(gy.val(), w.val(), cs, x_shape);
  Shape w_shape = w.shape();
  return make_op<T>(std::move(dx), {gy, w}, [gy, w, cs, w_shape](const Var<T>& u) {
    return std::vector<Var<T>>{conv2d(u, w, cs), conv2d_weight(u, gy, cs, w_shape)};
  });
}

template <class T>
Var<T> conv2d_weight(const Var<T>& x, const Var<T>& gy, ConvSpec cs, Shape w_shape) {
  Tensor<T> dw = detail::conv2d_weight_fwd(x.val(), gy.val(), cs, w_shape);
  Shape x_shape = x.shape();
  return make_op<T>(std::move(dw), {x, gy}, [x, gy, cs, x_shape](const Var<T>& v) {
    return std::vector<Var<T>>{conv2d_input(gy, v, cs, x_shape), conv2d(x, v, cs)};
  });
}

// ---------------------------------------------------------------------------
// bilinear resize (half-pixel centers, clamped edges) and its adjoint

namespace detail {

struct LinTap {
  int i0, i1;
  double f;  // weight on i1
};

inline std::vector<LinTap> resize_taps(int in, int out) {
  std::vector<LinTap> taps(out);
  double s = double(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * s - 0.5;
    int i0 = int(std::floor(src));
    double f = src - i0;
    taps[o] = {std::clamp(i0, 0, in - 1), std::clamp(i0 + 1, 0, in - 1), f};
  }
  return taps;
}

template <class T>
Tensor<T> resize_fwd(const Tensor<T>& x, int oh, int ow) {
  Shape s = x.s;
  auto ty = resize_taps(s.h, oh);
  auto tx = resize_taps(s.w, ow);
  Tensor<T> y(Shape{s.n, s.c, oh, ow});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.v.data() + (size_t(n) * s.c + c) * s.h * s.w;
      T* dst = y.v.data() + (size_t(n) * s.c + c) * size_t(oh) * ow;
      for (int y0 = 0; y0 < oh; ++y0)
        for (int x0 = 0; x0 < ow; ++x0) {
          const auto& a = ty[y0];
          const auto& b = tx[x0];
          T v00 = src[size_t(a.i0) * s.w + b.i0], v01 = src[size_t(a.i0) * s.w + b.i1];
          T v10 = src[size_t(a.i1) * s.w + b.i0], v11 = src[size_t(a.i1) * s.w + b.i1];
          dst[size_t(y0) * ow + x0] = T((1 - a.f) * ((1 - b.f) * v00 + b.f * v01) + a.f * ((1 - b.f) * v10 + b.f * v11));
        }
    }
  return y;
}

template <class T>
Tensor<T> resize_adj_fwd(const Tensor<T>& gy, int ih, int iw) {
  Shape s = gy.s;
  auto ty = resize_taps(ih, s.h);
  auto tx = resize_taps(iw, s.w);
  Tensor<T> dx(Shape{s.n, s.c, ih, iw});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = gy.v.data() + (size_t(n) * s.c + c) * s.h * s.w;
      T* dst = dx.v.data() + (size_t(n) * s.c + c) * size_t(ih) * iw;
      for (int y0 = 0; y0 < s.h; ++y0)
        for (int x0 = 0; x0 < s.w; ++x0) {
          const auto& a = ty[y0];
          const auto& b = tx[x0];
          T g = src[size_t(y0) * s.w + x0];
          dst[size_t(a.i0) * iw + b.i0] += T((1 - a.f) * (1 - b.f)) * g;
          dst[size_t(a.i0) * iw + b.i1] += T((1 - a.f) * b.f) * g;
          dst[size_t(a.i1) * iw + b.i0] += T(a.f * (1 - b.f)) * g;
          dst[size_t(a.i1) * iw + b.i1] += T(a.f * b.f) * g;
        }
    }
  return dx;
}

}  // namespace detail

template <class T>
Var<T> resize_bilinear_adjoint(const Var<T>& gy, int ih, int iw);

template <class T>
Var<T> resize_bilinear_v(const Var<T>& x, int oh, int ow) {
  Tensor<T> y = detail::resize_fwd(x.val(), oh, ow);
  int ih = x.shape().h, iw = x.shape().w;
  return make_op<T>(std::move(y), {x}, [ih, iw](const Var<T>& g) {
    return std::vector<Var<T>>{resize_bilinear_adjoint(g, ih, iw)};
  });
}

template <class T>
Var<T> resize_bilinear_adjoint(const Var<T>& gy, int ih, int iw) {
  Tensor<T> dx = detail::resize_adj_fwd(gy.val(), ih, iw);
  int oh = gy.shape().h, ow = gy.shape().w;
  return make_op<T>(std::move(dx), {gy}, [oh, ow](const Var<T>& u) {
    return std::vector<Var<T>>{resize_bilinear_v(u, oh, ow)};
  });
}

// ---------------------------------------------------------------------------
// backward

template <class T>
std::vector<Var<T>> backward(const Var<T>& root, const std::vector<Var<T>>& wrt, bool create_graph = false,
                             Var<T> seed = {}) {
  // deterministic topological order by iterative DFS
  std::vector<Node<T>*> topo;
  std::unordered_set<Node<T>*> visited;
  std::unordered_map<Node<T>*, Var<T>> keep_alive;
  {
    struct Frame {
      Var<T> var;
      size_t next_parent = 0;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    visited.insert(root.raw());
    keep_alive.emplace(root.raw(), root);
    while (!stack.empty()) {
      Frame& f = stack.back();
      Node<T>* n = f.var.raw();
      if (f.next_parent < n->parents.size()) {
        Var<T> p = n->parents[f.next_parent++];
        if (!visited.count(p.raw())) {
          visited.insert(p.raw());
          keep_alive.emplace(p.raw(), p);
          stack.push_back({p, 0});
        }
      } else {
        topo.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::unordered_map<Node<T>*, Var<T>> grads;
  if (!seed.defined()) seed = Var<T>::leaf(Tensor<T>(root.shape(), T(1)));
  grads[root.raw()] = seed;

  std::unique_ptr<NoGradGuard> guard;
  if (!create_graph) guard = std::make_unique<NoGradGuard>();

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<T>* n = *it;
    auto git = grads.find(n);
    if (git == grads.end() || !n->vjp) continue;
    auto parent_grads = n->vjp(git->second);
    for (size_t i = 0; i < n->parents.size(); ++i) {
      Node<T>* p = n->parents[i].raw();
      if (!p->requires_grad) continue;
      auto pit = grads.find(p);
      if (pit == grads.end())
        grads[p] = parent_grads[i];
      else
        pit->second = add(pit->second, parent_grads[i]);
    }
  }

  std::vector<Var<T>> out;
  out.reserve(wrt.size());
  for (const auto& v : wrt) {
    auto it = grads.find(v.raw());
    if (it != grads.end())
      out.push_back(it->second);
    else
      out.push_back(Var<T>::leaf(Tensor<T>(v.shape(), T(0))));
  }
  return out;
}

}  // namespace mf::ad
