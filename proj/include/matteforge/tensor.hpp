#pragma once

#include <cblas.h>

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mf {

// NCHW shape; scalars are (1,1,1,1).
struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  Shape() = default;
  Shape(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {}

  size_t count() const { return size_t(n) * c * h * w; }
  bool operator==(const Shape& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

template <class T>
struct Tensor {
  Shape s;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : s(shape), v(shape.count(), fill) {}

  T& at(int n, int c, int h, int w) { return v[((size_t(n) * s.c + c) * s.h + h) * s.w + w]; }
  T at(int n, int c, int h, int w) const { return v[((size_t(n) * s.c + c) * s.h + h) * s.w + w]; }

  static Tensor scalar(T x) {
    Tensor t(Shape{1, 1, 1, 1});
    t.v[0] = x;
    return t;
  }
};

// OpenBLAS may default to more threads than the machine has cores, which
// serializes badly; clamp it once to the available hardware.
inline void clamp_blas_threads() {
  static const bool done = [] {
    unsigned hw = std::thread::hardware_concurrency();
    openblas_set_num_threads(int(std::max(1u, hw)));
    return true;
  }();
  (void)done;
}

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* A, int lda, const float* B, int ldb,
                 float beta, float* C, int ldc) {
  clamp_blas_threads();
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, A, lda, B,
              ldb, beta, C, ldc);
}

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* A, int lda, const double* B,
                 int ldb, double beta, double* C, int ldc) {
  clamp_blas_threads();
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, A, lda, B,
              ldb, beta, C, ldc);
}

}  // namespace mf
