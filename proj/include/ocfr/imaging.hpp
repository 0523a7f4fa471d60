#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/grid.hpp"
#include "ocfr/tensor.hpp"
#include "ocfr/types.hpp"

namespace ocfr {

/// Source taps for one axis of a half-pixel-centred bilinear resize (edges clamped).
struct AxisTaps {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<double> frac;  ///< weight of `hi`; `lo` gets 1 - frac
};

inline AxisTaps bilinear_taps(int in, int out) {
  AxisTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    t.lo[i] = i0;
    t.hi[i] = std::min(i0 + 1, in - 1);
    t.frac[i] = src - i0;
  }
  return t;
}

inline int nearest_tap(int i, int in, int out) {
  const int src = static_cast<int>(std::floor((i + 0.5) * static_cast<double>(in) / out));
  return std::min(src, in - 1);
}

template <typename T>
Grid<T> resize_bilinear(const Grid<T>& src, int rows, int cols) {
  if (src.empty()) throw ShapeError("resize_bilinear: empty input");
  const auto ty = bilinear_taps(src.rows(), rows);
  const auto tx = bilinear_taps(src.cols(), cols);
  Grid<T> out(rows, cols);
  for (int y = 0; y < rows; ++y) {
    const auto r0 = src.row(ty.lo[y]);
    const auto r1 = src.row(ty.hi[y]);
    const double fy = ty.frac[y];
    for (int x = 0; x < cols; ++x) {
      const double fx = tx.frac[x];
      const double top = (1 - fx) * r0[tx.lo[x]] + fx * r0[tx.hi[x]];
      const double bot = (1 - fx) * r1[tx.lo[x]] + fx * r1[tx.hi[x]];
      out(y, x) = static_cast<T>((1 - fy) * top + fy * bot);
    }
  }
  return out;
}

template <typename T>
Grid<T> resize_nearest(const Grid<T>& src, int rows, int cols) {
  if (src.empty()) throw ShapeError("resize_nearest: empty input");
  Grid<T> out(rows, cols);
  std::vector<int> sx(cols);
  for (int x = 0; x < cols; ++x) sx[x] = nearest_tap(x, src.cols(), cols);
  for (int y = 0; y < rows; ++y) {
    const auto r = src.row(nearest_tap(y, src.rows(), rows));
    for (int x = 0; x < cols; ++x) out(y, x) = r[sx[x]];
  }
  return out;
}

/// Per-slice min-max normalisation into [0,1]; a constant slice becomes all zeros.
inline BScan normalize_bscan(const BScan& raw) {
  const auto& v = raw.pixels.values();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i]))
      throw InvalidArgument("normalize_bscan: non-finite pixel at row " + std::to_string(i / raw.cols()) + ", col " +
                            std::to_string(i % raw.cols()) + " of slice " + std::to_string(raw.slice_index));
  BScan out{Grid<float>(raw.rows(), raw.cols()), raw.slice_index};
  if (v.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, span = static_cast<double>(*hi_it) - lo;
  if (span <= 0) return out;
  auto& o = out.pixels.values();
  for (std::size_t i = 0; i < v.size(); ++i) o[i] = static_cast<float>((v[i] - lo) / span);
  return out;
}

/// Bilinear resampling of intensities, nearest-neighbour for the optional mask.
inline std::pair<BScan, std::optional<AnnotationMask>> resize_to_network(const BScan& raw,
                                                                          const std::optional<AnnotationMask>& mask,
                                                                          int rows = kNetHeight, int cols = kNetWidth) {
  if (mask && !raw.pixels.same_shape(mask->labels))
    throw ShapeError("resize_to_network: image " + detail::dims_str(raw.rows(), raw.cols()) + " vs mask " +
                     detail::dims_str(mask->rows(), mask->cols()));
  BScan img{resize_bilinear(raw.pixels, rows, cols), raw.slice_index};
  std::optional<AnnotationMask> m;
  if (mask) m = AnnotationMask{resize_nearest(mask->labels, rows, cols)};
  return {std::move(img), std::move(m)};
}

/// Stacks gray slices into an N x 3 x H x W network input (gray replicated into all three channels).
template <typename T>
Tensor<T> to_network_input(std::span<const BScan* const> slices) {
  if (slices.empty()) throw InvalidArgument("to_network_input: no slices");
  const int h = slices.front()->rows(), w = slices.front()->cols();
  Tensor<T> out(static_cast<int>(slices.size()), 3, h, w);
  for (std::size_t n = 0; n < slices.size(); ++n) {
    if (slices[n]->rows() != h || slices[n]->cols() != w) throw ShapeError("to_network_input: mixed slice sizes");
    const auto& px = slices[n]->pixels.values();
    for (int c = 0; c < 3; ++c) std::transform(px.begin(), px.end(), out.plane_ptr(static_cast<int>(n), c), [](float v) { return static_cast<T>(v); });
  }
  return out;
}

template <typename T>
Tensor<T> to_network_input(const BScan& slice) {
  const BScan* p = &slice;
  return to_network_input<T>(std::span<const BScan* const>(&p, 1));
}

}  // namespace ocfr
