#pragma once

// 2D Daubechies-2 wavelet transform with half-sample symmetric extension (the same
// conventions as PyWavelets' "symmetric" mode), and universal-threshold denoising.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/grid.hpp"

namespace ocfr::wavelet {

inline constexpr std::array<double, 4> kDecLo{-0.12940952255092145, 0.22414386804185735, 0.836516303737469, 0.48296291314469025};
inline constexpr std::array<double, 4> kDecHi{-0.48296291314469025, 0.836516303737469, -0.22414386804185735, -0.12940952255092145};
inline constexpr std::array<double, 4> kRecLo{0.48296291314469025, 0.836516303737469, 0.22414386804185735, -0.12940952255092145};
inline constexpr std::array<double, 4> kRecHi{-0.12940952255092145, -0.22414386804185735, 0.836516303737469, -0.48296291314469025};
inline constexpr int kFilterLength = 4;

inline int coeff_length(int n) { return (n + kFilterLength - 1) / 2; }

/// One level along a strided 1D signal: `lo`/`hi` receive coeff_length(n) values each.
inline void dwt1(const double* x, int n, std::ptrdiff_t stride, double* lo, double* hi, std::ptrdiff_t out_stride) {
  auto ext = [&](int i) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return x[i * stride];
  };
  const int m = coeff_length(n);
  for (int o = 0; o < m; ++o) {
    double a = 0, d = 0;
    for (int j = 0; j < kFilterLength; ++j) {
      const double v = ext(1 + 2 * o - j);
      a += kDecLo[j] * v;
      d += kDecHi[j] * v;
    }
    lo[o * out_stride] = a;
    hi[o * out_stride] = d;
  }
}

/// Inverse of dwt1 for `m` coefficient pairs; writes 2m - 2 samples.
inline void idwt1(const double* lo, const double* hi, int m, std::ptrdiff_t stride, double* y, std::ptrdiff_t out_stride) {
  const int n = 2 * m - kFilterLength + 2;
  for (int o = 0; o < n; ++o) {
    double s = 0;
    // y[o] = sum_k lo[k] g[o + F - 2 - 2k] + hi[k] h[...]
    const int base = o + kFilterLength - 2;
    for (int k = std::max(0, (base - kFilterLength + 2) / 2); k < m && 2 * k <= base; ++k) {
      const int t = base - 2 * k;
      if (t >= kFilterLength) continue;
      s += lo[k * stride] * kRecLo[t] + hi[k * stride] * kRecHi[t];
    }
    y[o * out_stride] = s;
  }
}

struct Level {
  Grid<double> lh, hl, hh;  ///< details: lh vertical (cols high-pass), hl horizontal (rows high-pass), hh diagonal
};

struct Decomposition {
  Grid<double> approx;
  std::vector<Level> levels;  ///< levels[0] is the finest
  std::vector<std::pair<int, int>> sizes;  ///< input size of each level
};

inline void dwt2(const Grid<double>& x, Grid<double>& ll, Level& det) {
  const int r = x.rows(), c = x.cols(), mr = coeff_length(r), mc = coeff_length(c);
  Grid<double> lo(r, mc), hi(r, mc);
  for (int y = 0; y < r; ++y) dwt1(x.data() + static_cast<std::size_t>(y) * c, c, 1, &lo(y, 0), &hi(y, 0), 1);
  ll = Grid<double>(mr, mc);
  det.lh = Grid<double>(mr, mc);
  det.hl = Grid<double>(mr, mc);
  det.hh = Grid<double>(mr, mc);
  for (int col = 0; col < mc; ++col) {
    dwt1(&lo(0, col), r, mc, &ll(0, col), &det.hl(0, col), mc);
    dwt1(&hi(0, col), r, mc, &det.lh(0, col), &det.hh(0, col), mc);
  }
}

/// Inverse of dwt2, cropped to `rows` x `cols`.
inline Grid<double> idwt2(const Grid<double>& ll, const Level& det, int rows, int cols) {
  const int mr = ll.rows(), mc = ll.cols();
  const int nr = 2 * mr - 2, nc = 2 * mc - 2;
  if (nr < rows || nc < cols) throw ShapeError("idwt2: coefficients too small for the requested size");
  Grid<double> lo(nr, mc), hi(nr, mc);
  for (int col = 0; col < mc; ++col) {
    idwt1(&ll(0, col), &det.hl(0, col), mr, mc, &lo(0, col), mc);
    idwt1(&det.lh(0, col), &det.hh(0, col), mr, mc, &hi(0, col), mc);
  }
  Grid<double> full(nr, nc);
  for (int y = 0; y < nr; ++y) idwt1(&lo(y, 0), &hi(y, 0), mc, 1, &full(y, 0), 1);
  if (nr == rows && nc == cols) return full;
  Grid<double> out(rows, cols);
  for (int y = 0; y < rows; ++y) std::copy_n(&full(y, 0), cols, &out(y, 0));
  return out;
}

inline Decomposition wavedec2(const Grid<double>& x, int levels) {
  Decomposition d;
  Grid<double> cur = x;
  for (int l = 0; l < levels; ++l) {
    if (cur.rows() < kFilterLength + 1 || cur.cols() < kFilterLength + 1)
      throw InvalidArgument("wavelet: " + ocfr::detail::dims_str(x.rows(), x.cols()) + " image is too small for " +
                            std::to_string(levels) + " db2 levels");
    d.sizes.emplace_back(cur.rows(), cur.cols());
    Level lv;
    Grid<double> ll;
    dwt2(cur, ll, lv);
    d.levels.push_back(std::move(lv));
    cur = std::move(ll);
  }
  d.approx = std::move(cur);
  return d;
}

inline Grid<double> waverec2(const Decomposition& d) {
  Grid<double> cur = d.approx;
  for (int l = static_cast<int>(d.levels.size()) - 1; l >= 0; --l)
    cur = idwt2(cur, d.levels[l], d.sizes[l].first, d.sizes[l].second);
  return cur;
}

inline double soft(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

inline double median_abs(const Grid<double>& g) {
  std::vector<double> a(g.values().begin(), g.values().end());
  for (auto& v : a) v = std::abs(v);
  const std::size_t mid = a.size() / 2;
  std::nth_element(a.begin(), a.begin() + mid, a.end());
  if (a.size() % 2) return a[mid];
  const double hi = a[mid];
  return 0.5 * (hi + *std::max_element(a.begin(), a.begin() + mid));
}

struct DenoiseInfo {
  double sigma = 0;
  double threshold = 0;
};

/// Soft-thresholds every detail subband with sigma * sqrt(2 ln N), sigma = median(|HH1|) / 0.6745.
/// `threshold_scale` multiplies the threshold (0 gives perfect reconstruction).
inline Grid<double> denoise(const Grid<double>& x, int levels = 2, double threshold_scale = 1.0, DenoiseInfo* info = nullptr) {
  for (double v : x.values())
    if (!std::isfinite(v)) throw InvalidArgument("denoise: non-finite input");
  Decomposition d = wavedec2(x, levels);
  const double sigma = median_abs(d.levels.front().hh) / 0.6745;
  const double t = threshold_scale * sigma * std::sqrt(2.0 * std::log(static_cast<double>(x.size())));
  if (info) *info = {sigma, t};
  if (t > 0)
    for (auto& lv : d.levels)
      for (Grid<double>* g : {&lv.lh, &lv.hl, &lv.hh})
        for (auto& v : g->values()) v = soft(v, t);
  return waverec2(d);
}

}  // namespace ocfr::wavelet
