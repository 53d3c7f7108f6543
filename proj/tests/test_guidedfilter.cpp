#include <catch2/catch_amalgamated.hpp>

#include "matteforge/guided_filter.hpp"
#include "matteforge/rng.hpp"

using namespace mf;

namespace {

GrayMap random_map(int h, int w, Rng& rng) {
  GrayMap m(h, w);
  for (auto& x : m.v) x = rng.uniform();
  return m;
}

// per-window regression + averaging, straight from the definition, without
// clipping (callers compare pre-clip values in (0,1) regions or clip too)
GrayMap gf_gray_oracle(const GrayMap& I, const GrayMap& p, int r, double eps) {
  int H = I.h, W = I.w;
  GrayMap a(H, W), b(H, W);
  for (int ky = 0; ky < H; ++ky)
    for (int kx = 0; kx < W; ++kx) {
      double sI = 0, sp = 0, sIp = 0, sII = 0;
      int n = 0;
      for (int y = std::max(0, ky - r); y <= std::min(H - 1, ky + r); ++y)
        for (int x = std::max(0, kx - r); x <= std::min(W - 1, kx + r); ++x) {
          sI += I.at(y, x);
          sp += p.at(y, x);
          sIp += I.at(y, x) * p.at(y, x);
          sII += I.at(y, x) * I.at(y, x);
          ++n;
        }
      double mI = sI / n, mp = sp / n;
      double var = sII / n - mI * mI, cov = sIp / n - mI * mp;
      a.at(ky, kx) = cov / (var + eps);
      b.at(ky, kx) = mp - a.at(ky, kx) * mI;
    }
  GrayMap out(H, W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double sa = 0, sb = 0;
      int n = 0;
      for (int y = std::max(0, i - r); y <= std::min(H - 1, i + r); ++y)
        for (int x = std::max(0, j - r); x <= std::min(W - 1, j + r); ++x) {
          sa += a.at(y, x);
          sb += b.at(y, x);
          ++n;
        }
      double v = (sa / n) * I.at(i, j) + sb / n;
      out.at(i, j) = std::min(1.0, std::max(0.0, v));
    }
  return out;
}

GrayMap gf_color_oracle(const RgbImage& I, const GrayMap& p, int r, double eps) {
  int H = p.h, W = p.w;
  std::array<GrayMap, 3> a{GrayMap(H, W), GrayMap(H, W), GrayMap(H, W)};
  GrayMap b(H, W);
  for (int ky = 0; ky < H; ++ky)
    for (int kx = 0; kx < W; ++kx) {
      double mI[3] = {0, 0, 0}, mp = 0, cIp[3] = {0, 0, 0};
      double S[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
      int n = 0;
      for (int y = std::max(0, ky - r); y <= std::min(H - 1, ky + r); ++y)
        for (int x = std::max(0, kx - r); x <= std::min(W - 1, kx + r); ++x) {
          for (int c = 0; c < 3; ++c) mI[c] += I.ch[c].at(y, x);
          mp += p.at(y, x);
          ++n;
        }
      for (int c = 0; c < 3; ++c) mI[c] /= n;
      mp /= n;
      for (int y = std::max(0, ky - r); y <= std::min(H - 1, ky + r); ++y)
        for (int x = std::max(0, kx - r); x <= std::min(W - 1, kx + r); ++x) {
          for (int c = 0; c < 3; ++c) cIp[c] += (I.ch[c].at(y, x) - mI[c]) * (p.at(y, x) - mp);
          for (int c0 = 0; c0 < 3; ++c0)
            for (int c1 = 0; c1 < 3; ++c1) S[c0][c1] += (I.ch[c0].at(y, x) - mI[c0]) * (I.ch[c1].at(y, x) - mI[c1]);
        }
      for (int c = 0; c < 3; ++c) cIp[c] /= n;
      for (int c0 = 0; c0 < 3; ++c0)
        for (int c1 = 0; c1 < 3; ++c1) S[c0][c1] /= n;
      for (int c = 0; c < 3; ++c) S[c][c] += eps;
      // Gaussian elimination on the 3x3 system
      double A[3][4];
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) A[i][j] = S[i][j];
        A[i][3] = cIp[i];
      }
      for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int rr = col + 1; rr < 3; ++rr)
          if (std::abs(A[rr][col]) > std::abs(A[piv][col])) piv = rr;
        std::swap(A[col], A[piv]);
        for (int rr = 0; rr < 3; ++rr) {
          if (rr == col) continue;
          double f = A[rr][col] / A[col][col];
          for (int j = col; j < 4; ++j) A[rr][j] -= f * A[col][j];
        }
      }
      double sol[3];
      for (int i = 0; i < 3; ++i) sol[i] = A[i][3] / A[i][i];
      for (int c = 0; c < 3; ++c) a[c].at(ky, kx) = sol[c];
      b.at(ky, kx) = mp - sol[0] * mI[0] - sol[1] * mI[1] - sol[2] * mI[2];
    }
  GrayMap out(H, W);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      double sa[3] = {0, 0, 0}, sb = 0;
      int n = 0;
      for (int y = std::max(0, i - r); y <= std::min(H - 1, i + r); ++y)
        for (int x = std::max(0, j - r); x <= std::min(W - 1, j + r); ++x) {
          for (int c = 0; c < 3; ++c) sa[c] += a[c].at(y, x);
          sb += b.at(y, x);
          ++n;
        }
      double v = sb / n;
      for (int c = 0; c < 3; ++c) v += (sa[c] / n) * I.ch[c].at(i, j);
      out.at(i, j) = std::min(1.0, std::max(0.0, v));
    }
  return out;
}

}  // namespace

TEST_CASE("gray filter with constant guidance is a box mean") {
  Rng rng(1);
  GrayMap I(10, 10, 0.5);
  auto p = random_map(10, 10, rng);
  GuidedFilterParams params{2, 1e-4, 1};
  auto out = guided_filter_gray(I, p, params);
  auto mp = box_filter(p, 2);
  auto mmp = box_filter(mp, 2);  // a == 0, so output = box(b) = box(box(p))
  for (size_t i = 0; i < out.size(); ++i) CHECK(out.v[i] == Catch::Approx(mmp.v[i]).margin(1e-9));
}

TEST_CASE("gray filter is edge-preserving identity as eps -> 0") {
  Rng rng(2);
  auto I = random_map(12, 12, rng);
  GuidedFilterParams params{2, 1e-12, 1};
  auto out = guided_filter_gray(I, I, params);
  for (size_t i = 0; i < I.size(); ++i) CHECK(out.v[i] == Catch::Approx(I.v[i]).margin(1e-5));
}

TEST_CASE("gray filter matches per-window regression oracle") {
  Rng rng(3);
  auto I = random_map(10, 10, rng);
  auto p = random_map(10, 10, rng);
  GuidedFilterParams params{2, 1e-4, 1};
  auto out = guided_filter_gray(I, p, params);
  auto ref = gf_gray_oracle(I, p, 2, 1e-4);
  for (size_t i = 0; i < out.size(); ++i) CHECK(out.v[i] == Catch::Approx(ref.v[i]).margin(1e-6));
}

TEST_CASE("color filter with constant p returns that constant") {
  Rng rng(4);
  RgbImage I(8, 8);
  for (int c = 0; c < 3; ++c)
    for (auto& x : I.ch[c].v) x = rng.uniform();
  GrayMap p(8, 8, 0.3);
  GuidedFilterParams params{2, 1e-4, 1};
  auto out = guided_filter_color(I, p, params);
  for (auto x : out.v) CHECK(x == Catch::Approx(0.3).margin(1e-9));
}

TEST_CASE("color filter matches brute-force 3x3 solve oracle") {
  Rng rng(5);
  RgbImage I(8, 8);
  for (int c = 0; c < 3; ++c)
    for (auto& x : I.ch[c].v) x = rng.uniform();
  auto p = random_map(8, 8, rng);
  GuidedFilterParams params{2, 1e-4, 1};
  auto out = guided_filter_color(I, p, params);
  auto ref = gf_color_oracle(I, p, 2, 1e-4);
  for (size_t i = 0; i < out.size(); ++i) CHECK(out.v[i] == Catch::Approx(ref.v[i]).margin(1e-6));
}

TEST_CASE("color filter on gray-equal channels approximates gray path") {
  Rng rng(6);
  auto G = random_map(10, 10, rng);
  RgbImage I;
  I.ch = {G, G, G};
  auto p = random_map(10, 10, rng);
  // rank-deficient Sigma: the per-channel eps makes the solve well-posed; the
  // color slope triples act like a single gray slope with adjusted eps
  GuidedFilterParams color_params{2, 3e-4, 1};
  GuidedFilterParams gray_params{2, 1e-4, 1};
  auto out_color = guided_filter_color(I, p, color_params);
  auto out_gray = guided_filter_gray(G, p, gray_params);
  for (size_t i = 0; i < p.size(); ++i) CHECK(out_color.v[i] == Catch::Approx(out_gray.v[i]).margin(1e-4));
}

TEST_CASE("fast path with s=1 equals the exact path bit-for-bit") {
  Rng rng(7);
  auto I = random_map(16, 16, rng);
  auto p = random_map(16, 16, rng);
  GuidedFilterParams exact{4, 1e-4, 1};
  auto a = guided_filter_gray(I, p, exact);
  auto b = fast_guided_filter(I, p, exact);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a.v[i] == b.v[i]);
}

TEST_CASE("fast path on constants at any subsample") {
  GrayMap I(32, 32, 0.8), p(32, 32, 0.35);
  for (int s : {1, 2, 4}) {
    GuidedFilterParams params{4, 1e-4, s};
    auto out = fast_guided_filter(I, p, params);
    for (auto x : out.v) CHECK(x == Catch::Approx(0.35).margin(1e-9));
  }
}

TEST_CASE("fast path stays close to exact on smooth guidance") {
  int H = 64, W = 64;
  GrayMap I(H, W), p(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      I.at(y, x) = (x + y) / double(H + W);
      p.at(y, x) = x / double(W);
    }
  GuidedFilterParams fast{8, 1e-4, 4};
  GuidedFilterParams exact{8, 1e-4, 1};
  auto a = fast_guided_filter(I, p, fast);
  auto b = fast_guided_filter(I, p, exact);
  double max_dev = 0;
  for (size_t i = 0; i < a.size(); ++i) max_dev = std::max(max_dev, std::abs(a.v[i] - b.v[i]));
  CHECK(max_dev < 0.05);
}

TEST_CASE("affine equivariance in p before clipping") {
  Rng rng(8);
  auto I = random_map(12, 12, rng);
  GrayMap p(12, 12);
  for (auto& x : p.v) x = rng.uniform(0.0, 0.4);
  GrayMap p_shift = p;
  for (auto& x : p_shift.v) x += 0.3;  // keeps both runs inside [0,1]
  GuidedFilterParams params{2, 1e-4, 1};
  auto a = guided_filter_gray(I, p, params);
  auto b = guided_filter_gray(I, p_shift, params);
  for (size_t i = 0; i < a.size(); ++i) CHECK(b.v[i] - a.v[i] == Catch::Approx(0.3).margin(1e-9));
}

TEST_CASE("eps to infinity drives output to box mean of p") {
  Rng rng(9);
  auto I = random_map(10, 10, rng);
  auto p = random_map(10, 10, rng);
  GuidedFilterParams params{2, 1e9, 1};
  auto out = guided_filter_gray(I, p, params);
  auto ref = box_filter(box_filter(p, 2), 2);
  for (size_t i = 0; i < out.size(); ++i) CHECK(out.v[i] == Catch::Approx(ref.v[i]).margin(1e-6));
}

TEST_CASE("extent mismatches and tiny images are rejected") {
  GrayMap I(8, 8), p(9, 8);
  GuidedFilterParams params{2, 1e-4, 1};
  CHECK_THROWS_AS(guided_filter_gray(I, p, params), std::invalid_argument);
  GuidedFilterParams big_s{2, 1e-4, 16};
  GrayMap tiny(8, 8);
  CHECK_THROWS_AS(fast_guided_filter(tiny, tiny, big_s), std::invalid_argument);
}
