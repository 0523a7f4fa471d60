#pragma once

// Synthetic OCT fingertip phantoms.
//
// Bonafide slices, top to bottom: background, stratum corneum, viable epidermis, dermis,
// a short dermis fade (labelled background), background. The surface follows a smooth
// curvature plus a saturated 2D ridge field; ridges raise the surface more than the
// internal boundaries, so stratum-corneum thickness (and hence its depth projection)
// carries the ridge pattern. Bright 1-px ducts cross the stratum corneum on ridge
// crests and each band starts with a thin bright interface line. Speckle is
// multiplicative, mean-preserving log-normal.
//
// Attack slices have no internal layering: `homogeneous_3d` is one uniform band under a
// ridged (moulded) surface, `layered_2d` a thin bright line on a flat surface.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/grid.hpp"
#include "ocfr/rng.hpp"
#include "ocfr/types.hpp"

namespace ocfr::phantom {

enum class PaType { layered_2d, homogeneous_3d };

inline std::string_view to_string(PaType t) noexcept { return t == PaType::layered_2d ? "layered_2d" : "homogeneous_3d"; }
inline PaType parse_pa_type(std::string_view s) {
  if (s == "layered_2d") return PaType::layered_2d;
  if (s == "homogeneous_3d") return PaType::homogeneous_3d;
  throw InvalidArgument("unknown pa_type '" + std::string(s) + "'");
}

struct PhantomConfig {
  std::uint64_t seed = 1;
  int n_bscans = kFullSliceCount;
  int height = kRawHeight;
  int width = kRawWidth;
  std::array<double, 3> layer_depths{60, 90, 150};          ///< stratum corneum, viable epidermis, dermis (rows)
  std::array<double, 3> layer_intensities{0.75, 0.35, 0.55};
  double ridge_period = 80;      ///< columns per ridge cycle
  double ridge_amplitude = 12;   ///< surface rise on ridges (rows)
  double duct_density = 0.5;     ///< ducts per 100 columns
  double noise_sigma = 0.25;     ///< log-normal speckle sigma; 0 disables noise
  double surface_tilt = 30;      ///< max large-scale surface undulation (rows)
  double ridge_sharpness = 6;    ///< gain of the saturating ridge indicator 0.5 (1 + tanh(g f))
  PaType pa_type = PaType::homogeneous_3d;

  int top_margin = 70;               ///< surface row where the undulation is zero
  int interface_thickness = 2;       ///< bright line at the top of each band; 0 disables
  double interface_intensity = 0.95;
  double duct_intensity = 1.0;
  int fade_rows = 6;                 ///< dermis fade tail below the last band
  double fade_ratio = 0.4;
  double pa_intensity = 0.5;
  int pa_line_thickness = 8;
  double pa_line_intensity = 0.9;
  double slice_pitch = static_cast<double>(kRawWidth) / kFullSliceCount;  ///< column-units between slices
  bool full_fidelity = false;        ///< enforce the 400-slice contract

  void validate() const {
    if (n_bscans < 1) throw InvalidArgument("phantom: n_bscans must be >= 1");
    if (full_fidelity && n_bscans != kFullSliceCount) throw InvalidArgument("phantom: full-fidelity runs need 400 B-scans");
    if (height < 8 || width < 8) throw InvalidArgument("phantom: image too small");
    double sum = 0;
    for (double d : layer_depths) {
      if (!(d > 0)) throw InvalidArgument("phantom: layer depths must be > 0");
      sum += d;
    }
    if (surface_tilt < 0 || ridge_amplitude < 0) throw InvalidArgument("phantom: undulation must be >= 0");
    if (top_margin < 0 || top_margin + sum + surface_tilt + ridge_amplitude >= height)
      throw InvalidArgument("phantom: layers plus undulation do not fit in " + std::to_string(height) + " rows");
    for (int i = 0; i < 3; ++i) {
      if (!(layer_intensities[i] >= 0 && layer_intensities[i] <= 1)) throw InvalidArgument("phantom: intensities must lie in [0,1]");
      for (int j = i + 1; j < 3; ++j)
        if (std::abs(layer_intensities[i] - layer_intensities[j]) < 0.1 - 1e-12)
          throw InvalidArgument("phantom: layer intensities must be pairwise >= 0.1 apart");
    }
    if (!(ridge_period > 0)) throw InvalidArgument("phantom: ridge_period must be > 0");
    if (noise_sigma < 0 || duct_density < 0) throw InvalidArgument("phantom: noise_sigma and duct_density must be >= 0");
    if (interface_thickness < 0 || fade_rows < 0) throw InvalidArgument("phantom: negative thickness");
  }
};

/// Binary ridge (1) / valley (0) map, n_bscans x width.
struct GroundTruthRidgeMap {
  Grid<std::uint8_t> ridges;
};

struct DuctPosition {
  int slice;   ///< 0-based
  int column;  ///< raw column
};

/// Everything the generator knows about one slice.
struct PhantomSlice {
  Grid<float> clean;   ///< before speckle
  BScan bscan;         ///< after speckle, clipped to [0,1]
  std::optional<AnnotationMask> mask;             ///< bonafide only
  std::array<std::vector<int>, 4> boundaries;     ///< integer rows: surface, SC/VE, VE/D, D bottom
  std::vector<int> duct_columns;
};

struct BonafideVolume {
  OctInstance instance;
  std::vector<AnnotationMask> masks;
  GroundTruthRidgeMap ridge_map;
  std::vector<DuctPosition> ducts;
};

/// Per-instance geometry plus per-slice rendering. Slices are independent given the
/// instance seed, so they may be rendered in any order or in parallel.
class PhantomGenerator {
 public:
  explicit PhantomGenerator(PhantomConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(derive_seed(cfg_.seed, 0x6E0));
    const double deg = std::numbers::pi / 180.0;
    theta0_ = rng.uniform(-15.0, 15.0) * deg;
    theta1_ = rng.uniform(40.0, 140.0) * deg;
    phi0_ = rng.uniform(0.0, 2 * std::numbers::pi);
    phi1_ = rng.uniform(0.0, 2 * std::numbers::pi);
    centre_ = rng.uniform(0.4, 0.6) * cfg_.width;
    centre_drift_ = rng.uniform(-0.1, 0.1) * cfg_.width;
  }

  const PhantomConfig& config() const noexcept { return cfg_; }

  /// Continuous ridge field; positive on ridges.
  double ridge_field(int slice, double column) const {
    const double y = slice * cfg_.slice_pitch;
    const double p = cfg_.ridge_period;
    return std::cos(2 * std::numbers::pi * (column * std::cos(theta0_) + y * std::sin(theta0_)) / p + phi0_) +
           0.35 * std::cos(2 * std::numbers::pi * (column * std::cos(theta1_) + y * std::sin(theta1_)) / (1.3 * p) + phi1_);
  }

  /// Saturated ridge indicator in [0,1].
  double ridge_weight(int slice, int column) const { return 0.5 * (1.0 + std::tanh(cfg_.ridge_sharpness * ridge_field(slice, column))); }

  /// Large-scale surface row (no ridges).
  double base_surface(int slice, int column) const {
    const double frac = cfg_.n_bscans > 1 ? static_cast<double>(slice) / (cfg_.n_bscans - 1) - 0.5 : 0.0;
    const double c0 = centre_ + frac * centre_drift_;
    const double u = (column - c0) / (0.6 * cfg_.width);
    return cfg_.top_margin + cfg_.surface_tilt * std::min(1.0, u * u);
  }

  GroundTruthRidgeMap ridge_map() const {
    GroundTruthRidgeMap m{Grid<std::uint8_t>(cfg_.n_bscans, cfg_.width)};
    for (int j = 0; j < cfg_.n_bscans; ++j)
      for (int c = 0; c < cfg_.width; ++c) m.ridges(j, c) = ridge_field(j, c) > 0 ? 1 : 0;
    return m;
  }

  /// Integer band boundaries of a bonafide slice (rows; band k spans [b[k], b[k+1])).
  std::array<std::vector<int>, 4> bonafide_boundaries(int slice) const {
    std::array<std::vector<int>, 4> b;
    for (auto& v : b) v.resize(cfg_.width);
    const auto& d = cfg_.layer_depths;
    const double a = cfg_.ridge_amplitude;
    for (int c = 0; c < cfg_.width; ++c) {
      const double base = base_surface(slice, c), r = ridge_weight(slice, c);
      b[0][c] = static_cast<int>(std::lround(base - a * r));
      b[1][c] = static_cast<int>(std::lround(base + d[0] - 0.25 * a * r));
      b[2][c] = static_cast<int>(std::lround(base + d[0] + d[1] - 0.5 * a * r));
      b[3][c] = static_cast<int>(std::lround(base + d[0] + d[1] + d[2]));
    }
    return b;
  }

  /// Ridge-crest columns of `slice` that carry a duct.
  std::vector<int> duct_columns(int slice) const {
    std::vector<int> out;
    if (cfg_.duct_density <= 0) return out;
    Rng rng(derive_seed(derive_seed(cfg_.seed, 0xD0C7), static_cast<std::uint64_t>(slice)));
    const double keep = std::min(1.0, cfg_.duct_density * cfg_.ridge_period / 100.0);
    for (int c = 1; c + 1 < cfg_.width; ++c) {
      const double f = ridge_field(slice, c);
      if (f > 0.5 && f > ridge_field(slice, c - 1) && f >= ridge_field(slice, c + 1) && rng.uniform() < keep) out.push_back(c);
    }
    return out;
  }

  PhantomSlice bonafide_slice(int slice) const {
    check_slice(slice);
    PhantomSlice s;
    s.boundaries = bonafide_boundaries(slice);
    s.duct_columns = duct_columns(slice);
    s.clean = Grid<float>(cfg_.height, cfg_.width, 0.0f);
    AnnotationMask mask{Grid<std::uint8_t>(cfg_.height, cfg_.width, 0)};
    const auto& b = s.boundaries;
    for (int c = 0; c < cfg_.width; ++c) {
      for (int k = 0; k < 3; ++k)
        for (int y = std::max(0, b[k][c]); y < std::min(cfg_.height, b[k + 1][c]); ++y) {
          s.clean(y, c) = static_cast<float>(cfg_.layer_intensities[k]);
          mask.labels(y, c) = static_cast<std::uint8_t>(k + 1);
        }
      double fade = cfg_.layer_intensities[2];
      for (int y = b[3][c]; y < std::min(cfg_.height, b[3][c] + cfg_.fade_rows); ++y) {
        fade *= cfg_.fade_ratio;
        s.clean(y, c) = static_cast<float>(fade);
      }
      for (int k = 0; k < 3; ++k)
        for (int y = b[k][c]; y < std::min(b[k][c] + cfg_.interface_thickness, b[k + 1][c]); ++y)
          s.clean(y, c) = static_cast<float>(cfg_.interface_intensity);
    }
    for (int c : s.duct_columns)
      for (int y = b[0][c]; y < b[1][c]; ++y) s.clean(y, c) = static_cast<float>(cfg_.duct_intensity);
    s.mask = std::move(mask);
    s.bscan = speckle(s.clean, slice);
    return s;
  }

  PhantomSlice attack_slice(int slice) const {
    check_slice(slice);
    PhantomSlice s;
    s.clean = Grid<float>(cfg_.height, cfg_.width, 0.0f);
    for (auto& v : s.boundaries) v.resize(cfg_.width);
    const double total = cfg_.layer_depths[0] + cfg_.layer_depths[1] + cfg_.layer_depths[2];
    for (int c = 0; c < cfg_.width; ++c) {
      const double base = base_surface(slice, c);
      int top, bottom;
      double level;
      if (cfg_.pa_type == PaType::homogeneous_3d) {
        top = static_cast<int>(std::lround(base - cfg_.ridge_amplitude * ridge_weight(slice, c)));
        bottom = static_cast<int>(std::lround(base + total));
        level = cfg_.pa_intensity;
      } else {
        top = static_cast<int>(std::lround(base));
        bottom = top + cfg_.pa_line_thickness;
        level = cfg_.pa_line_intensity;
      }
      s.boundaries[0][c] = top;
      for (int k = 1; k < 4; ++k) s.boundaries[k][c] = bottom;
      for (int y = std::max(0, top); y < std::min(cfg_.height, bottom); ++y) s.clean(y, c) = static_cast<float>(level);
    }
    s.bscan = speckle(s.clean, slice);
    return s;
  }

 private:
  void check_slice(int slice) const {
    if (slice < 0 || slice >= cfg_.n_bscans)
      throw InvalidArgument("phantom: slice " + std::to_string(slice) + " outside [0, " + std::to_string(cfg_.n_bscans) + ")");
  }

  BScan speckle(const Grid<float>& clean, int slice) const {
    BScan out{clean, slice + 1};
    if (cfg_.noise_sigma <= 0) return out;
    Rng rng(derive_seed(derive_seed(cfg_.seed, 0x5BEC), static_cast<std::uint64_t>(slice)));
    const double s = cfg_.noise_sigma, bias = -0.5 * s * s;
    for (auto& v : out.pixels.values()) {
      const double n = rng.normal();
      v = static_cast<float>(std::clamp(v * std::exp(s * n + bias), 0.0, 1.0));
    }
    return out;
  }

  PhantomConfig cfg_;
  double theta0_ = 0, theta1_ = 0, phi0_ = 0, phi1_ = 0, centre_ = 0, centre_drift_ = 0;
};

inline BonafideVolume generate_bonafide(const PhantomConfig& cfg) {
  PhantomGenerator gen(cfg);
  BonafideVolume v;
  v.instance.label = Label::bonafide;
  v.instance.bscans.reserve(cfg.n_bscans);
  v.masks.reserve(cfg.n_bscans);
  for (int j = 0; j < cfg.n_bscans; ++j) {
    auto s = gen.bonafide_slice(j);
    for (int c : s.duct_columns) v.ducts.push_back({j, c});
    v.instance.bscans.push_back(std::move(s.bscan));
    v.masks.push_back(std::move(*s.mask));
  }
  v.ridge_map = gen.ridge_map();
  return v;
}

inline OctInstance generate_pa(const PhantomConfig& cfg) {
  PhantomGenerator gen(cfg);
  OctInstance inst;
  inst.label = Label::presentation_attack;
  inst.bscans.reserve(cfg.n_bscans);
  for (int j = 0; j < cfg.n_bscans; ++j) inst.bscans.push_back(std::move(gen.attack_slice(j).bscan));
  return inst;
}

}  // namespace ocfr::phantom
