#pragma once

// Subsurface fingerprint reconstruction: denoise -> straighten -> per-layer projection.
//
//   R_h(j, n) = sum_m x^p_j(m, n) * [y^p_j(m, n) == h]
//
// Sums are accumulated in 64-bit fixed point with 24 fractional bits, so they do not
// depend on summation order and R_s + R_v + R_d equals the foreground projection exactly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/types.hpp"
#include "ocfr/wavelet.hpp"

namespace ocfr::recon {

inline constexpr int kFixedBits = 24;

/// Wavelet denoise of a normalised B-scan; output clipped to [0,1].
inline BScan denoise(const BScan& b, double threshold_scale = 1.0, wavelet::DenoiseInfo* info = nullptr) {
  Grid<double> x(b.rows(), b.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float v = b.pixels.values()[i];
    if (!std::isfinite(v)) throw InvalidArgument("denoise: non-finite pixel in slice " + std::to_string(b.slice_index));
    x.values()[i] = v;
  }
  const Grid<double> y = wavelet::denoise(x, 2, threshold_scale, info);
  BScan out{Grid<float>(b.rows(), b.cols()), b.slice_index};
  for (std::size_t i = 0; i < y.size(); ++i) out.pixels.values()[i] = static_cast<float>(std::clamp(y.values()[i], 0.0, 1.0));
  return out;
}

enum class SurfaceSource { mask, intensity };

struct StraightenConfig {
  int window = 15;    ///< moving-average width (columns)
  int anchor_row = 8; ///< row the smoothed surface is moved to
  SurfaceSource source = SurfaceSource::mask;
  double intensity_fraction = 0.5;  ///< intensity source: first row >= fraction * column max
};

/// Per-column surface row, or -1 where none is found.
inline std::vector<int> detect_surface(const BScan& b, const AnnotationMask& mask, const StraightenConfig& cfg) {
  std::vector<int> s(static_cast<std::size_t>(b.cols()), -1);
  for (int c = 0; c < b.cols(); ++c) {
    if (cfg.source == SurfaceSource::mask) {
      for (int y = 0; y < b.rows(); ++y)
        if (mask.labels(y, c) != 0) {
          s[c] = y;
          break;
        }
    } else {
      float mx = 0;
      for (int y = 0; y < b.rows(); ++y) mx = std::max(mx, b.pixels(y, c));
      if (mx <= 0) continue;
      for (int y = 0; y < b.rows(); ++y)
        if (b.pixels(y, c) >= cfg.intensity_fraction * mx) {
          s[c] = y;
          break;
        }
    }
  }
  return s;
}

/// Fills -1 entries by linear interpolation between the nearest found neighbours
/// (constant beyond the first/last found column).
inline std::vector<double> fill_gaps(const std::vector<int>& s, int slice_index) {
  std::vector<int> known;
  for (int c = 0; c < static_cast<int>(s.size()); ++c)
    if (s[c] >= 0) known.push_back(c);
  if (known.empty()) throw InvalidArgument("straighten: slice " + std::to_string(slice_index) + " has no foreground");
  std::vector<double> out(s.size());
  std::size_t k = 0;
  for (int c = 0; c < static_cast<int>(s.size()); ++c) {
    while (k + 1 < known.size() && known[k + 1] <= c) ++k;
    if (c <= known.front()) out[c] = s[known.front()];
    else if (c >= known.back()) out[c] = s[known.back()];
    else if (s[c] >= 0) out[c] = s[c];
    else {
      const int a = known[k], b = known[k + 1];
      out[c] = s[a] + (s[b] - s[a]) * static_cast<double>(c - a) / (b - a);
    }
  }
  return out;
}

/// Centred moving average, window truncated at the edges.
inline std::vector<double> moving_average(const std::vector<double>& v, int window) {
  if (window < 1) throw InvalidArgument("moving_average: window must be >= 1");
  const int n = static_cast<int>(v.size()), half = window / 2;
  std::vector<double> prefix(n + 1, 0.0), out(n);
  for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + v[i];
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half), hi = std::min(n, i - half + window);
    out[i] = (prefix[hi] - prefix[lo]) / (hi - lo);
  }
  return out;
}

/// Shifts every column so its smoothed surface lands on the anchor row. Image and mask
/// move together; rows shifted out are dropped, vacated rows become 0 / background.
inline StraightenedBScan straighten(const BScan& b, const AnnotationMask& mask, const StraightenConfig& cfg = {}) {
  if (!b.pixels.same_shape(mask.labels))
    throw ShapeError("straighten: image " + ocfr::detail::dims_str(b.rows(), b.cols()) + " vs mask " +
                     ocfr::detail::dims_str(mask.rows(), mask.cols()));
  const auto smooth = moving_average(fill_gaps(detect_surface(b, mask, cfg), b.slice_index), cfg.window);
  StraightenedBScan out{Grid<float>(b.rows(), b.cols(), 0.0f), AnnotationMask{Grid<std::uint8_t>(b.rows(), b.cols(), 0)},
                        std::vector<int>(static_cast<std::size_t>(b.cols()), cfg.anchor_row),
                        std::vector<int>(static_cast<std::size_t>(b.cols()))};
  for (int c = 0; c < b.cols(); ++c) {
    const int shift = static_cast<int>(std::lround(smooth[c])) - cfg.anchor_row;
    out.shifts[c] = shift;
    for (int y = 0; y < b.rows(); ++y) {
      const int src = y + shift;
      if (src < 0 || src >= b.rows()) continue;
      out.pixels(y, c) = b.pixels(src, c);
      out.mask.labels(y, c) = mask.labels(src, c);
    }
  }
  return out;
}

/// y^p[h]: 1 where the pixel belongs to layer h.
inline Grid<std::uint8_t> mask_indicator(const AnnotationMask& mask, Layer h) {
  const auto k = class_of(h);
  Grid<std::uint8_t> out(mask.rows(), mask.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = mask.labels.values()[i] == k ? 1 : 0;
  return out;
}

inline std::int64_t to_fixed(float v) { return std::llround(std::ldexp(static_cast<double>(v), kFixedBits)); }
inline double from_fixed(std::int64_t v) { return std::ldexp(static_cast<double>(v), -kFixedBits); }

/// Accumulates projections slice by slice; `select(k)` chooses which mask classes count.
class Projector {
 public:
  Projector(int cols, std::function<bool(std::uint8_t)> select) : cols_(cols), select_(std::move(select)) {}

  void add(const Grid<float>& pixels, const AnnotationMask& mask) {
    if (pixels.cols() != cols_ || !pixels.same_shape(mask.labels))
      throw ShapeError("project: slice " + std::to_string(rows_.size() + 1) + " is " + ocfr::detail::dims_str(pixels.rows(), pixels.cols()) +
                       ", expected " + std::to_string(cols_) + " columns with a matching mask");
    std::vector<std::int64_t> row(static_cast<std::size_t>(cols_), 0);
    for (int m = 0; m < pixels.rows(); ++m)
      for (int n = 0; n < cols_; ++n)
        if (select_(mask.labels(m, n))) row[n] += to_fixed(pixels(m, n));
    rows_.push_back(std::move(row));
  }

  Grid<double> result() const {
    Grid<double> g(static_cast<int>(rows_.size()), cols_);
    for (std::size_t j = 0; j < rows_.size(); ++j)
      for (int n = 0; n < cols_; ++n) g(static_cast<int>(j), n) = from_fixed(rows_[j][n]);
    return g;
  }

  std::size_t slices() const noexcept { return rows_.size(); }

 private:
  int cols_;
  std::function<bool(std::uint8_t)> select_;
  std::vector<std::vector<std::int64_t>> rows_;
};

/// R_h over straightened slices (one output row per slice).
inline LayerImage project_layer(const std::vector<StraightenedBScan>& slices, Layer h, std::optional<int> expected_slices = std::nullopt) {
  if (slices.empty()) throw InvalidArgument("project_layer: no slices");
  if (expected_slices && static_cast<int>(slices.size()) != *expected_slices)
    throw InvalidArgument("project_layer: " + std::to_string(slices.size()) + " slices, instance has " + std::to_string(*expected_slices));
  const auto k = class_of(h);
  Projector p(slices.front().pixels.cols(), [k](std::uint8_t v) { return v == k; });
  for (const auto& s : slices) p.add(s.pixels, s.mask);
  return {p.result(), h};
}

/// Projection of every non-background pixel.
inline Grid<double> project_foreground(const std::vector<StraightenedBScan>& slices) {
  if (slices.empty()) throw InvalidArgument("project_foreground: no slices");
  Projector p(slices.front().pixels.cols(), [](std::uint8_t v) { return v != 0; });
  for (const auto& s : slices) p.add(s.pixels, s.mask);
  return p.result();
}

struct ReconstructConfig {
  bool denoise = true;
  StraightenConfig straighten;
};

struct Reconstruction {
  std::array<LayerImage, 3> layers;  ///< s, v, d
  Grid<double> foreground;

  const LayerImage& operator[](Layer h) const { return layers[static_cast<std::size_t>(h)]; }
};

/// Streams (network-size B-scan, mask) pairs through denoise -> straighten -> projection.
class InstanceReconstructor {
 public:
  explicit InstanceReconstructor(ReconstructConfig cfg = {}) : cfg_(cfg) {}

  void add(const BScan& b, const AnnotationMask& mask) {
    if (!b.pixels.same_shape(mask.labels)) throw ShapeError("reconstruct: slice " + std::to_string(b.slice_index) + " image/mask size mismatch");
    if (!proj_) {
      const int cols = b.cols();
      proj_.emplace();
      for (int h = 0; h < 3; ++h) {
        const auto k = static_cast<std::uint8_t>(h + 1);
        proj_->emplace_back(cols, [k](std::uint8_t v) { return v == k; });
      }
      proj_->emplace_back(cols, [](std::uint8_t v) { return v != 0; });
    }
    const BScan clean = cfg_.denoise ? denoise(b) : b;
    const auto s = straighten(clean, mask, cfg_.straighten);
    for (auto& p : *proj_) p.add(s.pixels, s.mask);
  }

  Reconstruction finish() const {
    if (!proj_) throw InvalidArgument("reconstruct: no slices");
    Reconstruction r;
    for (int h = 0; h < 3; ++h) r.layers[h] = {(*proj_)[h].result(), static_cast<Layer>(h)};
    r.foreground = (*proj_)[3].result();
    return r;
  }

 private:
  ReconstructConfig cfg_;
  std::optional<std::vector<Projector>> proj_;
};

inline Reconstruction reconstruct_instance(const std::vector<BScan>& slices, const std::vector<AnnotationMask>& masks,
                                           const ReconstructConfig& cfg = {}) {
  if (slices.size() != masks.size())
    throw InvalidArgument("reconstruct_instance: " + std::to_string(slices.size()) + " slices but " + std::to_string(masks.size()) + " masks");
  InstanceReconstructor r(cfg);
  for (std::size_t j = 0; j < slices.size(); ++j) r.add(slices[j], masks[j]);
  return r.finish();
}

}  // namespace ocfr::recon
