#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/grid.hpp"
#include "ocfr/tensor.hpp"

namespace ocfr {

inline constexpr int kRawHeight = 500;
inline constexpr int kRawWidth = 1500;
inline constexpr int kNetHeight = 256;
inline constexpr int kNetWidth = 768;
inline constexpr int kFullSliceCount = 400;
inline constexpr int kNumClasses = 4;

/// Per-pixel tissue class. Values are the on-disk mask encoding.
enum class TissueClass : std::uint8_t { background = 0, stratum_corneum = 1, viable_epidermis = 2, dermis = 3 };

/// The three reconstructed layers (s = stratum corneum, v = viable epidermis, d = dermis).
enum class Layer { s, v, d };

inline constexpr std::uint8_t class_of(Layer h) noexcept {
  switch (h) {
    case Layer::s: return 1;
    case Layer::v: return 2;
    case Layer::d: return 3;
  }
  return 0;
}

inline std::string_view layer_name(Layer h) noexcept {
  switch (h) {
    case Layer::s: return "s";
    case Layer::v: return "v";
    case Layer::d: return "d";
  }
  return "?";
}

inline Layer parse_layer(std::string_view s) {
  if (s == "s") return Layer::s;
  if (s == "v") return Layer::v;
  if (s == "d") return Layer::d;
  throw InvalidArgument("unknown layer '" + std::string(s) + "' (expected s, v or d)");
}

enum class Label { bonafide, presentation_attack };

inline std::string_view to_string(Label l) noexcept { return l == Label::bonafide ? "bonafide" : "presentation_attack"; }

inline Label parse_label(std::string_view s) {
  if (s == "bonafide") return Label::bonafide;
  if (s == "presentation_attack" || s == "pa") return Label::presentation_attack;
  throw InvalidArgument("unknown label '" + std::string(s) + "'");
}

/// One cross-sectional slice. Raw slices are 500x1500, network slices 256x768.
struct BScan {
  Grid<float> pixels;
  int slice_index = 1;  ///< 1-based position in its instance

  int rows() const noexcept { return pixels.rows(); }
  int cols() const noexcept { return pixels.cols(); }
  bool is_raw_size() const noexcept { return rows() == kRawHeight && cols() == kRawWidth; }
  bool is_network_size() const noexcept { return rows() == kNetHeight && cols() == kNetWidth; }

  bool is_normalized() const {
    return std::all_of(pixels.values().begin(), pixels.values().end(),
                       [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
  }
};

/// Hard per-pixel labels in {0,1,2,3}.
struct AnnotationMask {
  Grid<std::uint8_t> labels;

  int rows() const noexcept { return labels.rows(); }
  int cols() const noexcept { return labels.cols(); }

  void validate() const {
    for (auto v : labels.values())
      if (v >= kNumClasses) throw InvalidArgument("mask label " + std::to_string(v) + " outside {0,1,2,3}");
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(kNumClasses, 0);
    for (auto v : labels.values()) ++counts.at(v);
    return counts;
  }
};

/// One fingertip scan: an ordered stack of B-scans.
struct OctInstance {
  std::vector<BScan> bscans;
  std::string subject_id;
  std::string finger_id;
  int session = 1;
  Label label = Label::bonafide;

  std::size_t size() const noexcept { return bscans.size(); }

  /// Shape checks. The 400-slice count is only required for full-fidelity data.
  void validate(bool full_fidelity) const {
    if (bscans.empty()) throw InvalidArgument("instance has no B-scans");
    if (full_fidelity && bscans.size() != kFullSliceCount)
      throw ShapeError("instance must have 400 B-scans, has " + std::to_string(bscans.size()));
    for (const auto& b : bscans)
      if (!b.pixels.same_shape(bscans.front().pixels))
        throw ShapeError("B-scan " + std::to_string(b.slice_index) + " differs in size from the first slice");
  }
};

/// Encoder bottleneck (1 x C x H x W; 512 x 8 x 24 at full size) and its channel-wise mean.
struct LatentCode {
  Tensor<float> tensor;
  std::optional<std::vector<double>> pooled;
};

struct ReferenceCode {
  std::vector<double> pooled;
  std::size_t source_count = 0;

  void validate() const {
    if (pooled.empty() || source_count == 0) throw InvalidArgument("reference code is empty");
  }
};

/// Per-pixel class probabilities, 1 x 4 x H x W.
struct SegmentationOutput {
  Tensor<float> probabilities;

  /// Hard labels by per-pixel argmax (lowest class wins ties).
  AnnotationMask argmax() const {
    const auto& p = probabilities;
    AnnotationMask m{Grid<std::uint8_t>(p.h(), p.w())};
    for (int y = 0; y < p.h(); ++y)
      for (int x = 0; x < p.w(); ++x) {
        int best = 0;
        for (int c = 1; c < p.c(); ++c)
          if (p.at(0, c, y, x) > p.at(0, best, y, x)) best = c;
        m.labels(y, x) = static_cast<std::uint8_t>(best);
      }
    return m;
  }
};

/// A flattened slice: surface moved to a fixed row, image and mask shifted identically.
struct StraightenedBScan {
  Grid<float> pixels;
  AnnotationMask mask;
  std::vector<int> surface_profile;  ///< per column, row of the surface after shifting
  std::vector<int> shifts;           ///< per column, rows moved upward (negative = downward)
};

/// A reconstructed subsurface print: one row per B-scan, one column per A-line.
struct LayerImage {
  Grid<double> raw;  ///< unnormalised masked intensity sums
  Layer layer = Layer::s;

  /// Per-image min-max stretch to 8 bit. Constant images map to zero.
  Grid<std::uint8_t> to_u8() const {
    Grid<std::uint8_t> out(raw.rows(), raw.cols());
    if (raw.empty()) return out;
    const auto [lo, hi] = std::minmax_element(raw.values().begin(), raw.values().end());
    const double span = *hi - *lo;
    for (std::size_t i = 0; i < raw.size(); ++i)
      out.values()[i] = span > 0 ? static_cast<std::uint8_t>(std::lround(255.0 * (raw.values()[i] - *lo) / span)) : 0;
    return out;
  }
};

struct SpoofScore {
  double value = 0.0;
  std::vector<double> per_slice;
};

}  // namespace ocfr
