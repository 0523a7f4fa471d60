#pragma once

// One-class presentation attack detection from pooled latent codes.
//
//   z_r'    = mean over reference B-scans of GAP(F_DS(x_j))
//   Score_I = mean over the instance's B-scans of || GAP(F_DS(x_j)) - z_r' ||_2
//
// A score above the decision threshold means attack.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/imaging.hpp"
#include "ocfr/nn/network.hpp"
#include "ocfr/train/trainer.hpp"
#include "ocfr/types.hpp"

namespace ocfr::pad {

using Code = std::vector<double>;

/// Channel means of sample `n` of an N x C x H x W latent tensor.
template <typename T>
Code pool_latent(const Tensor<T>& z, int n = 0) {
  if (n < 0 || n >= z.n()) throw InvalidArgument("pool_latent: sample " + std::to_string(n) + " outside batch");
  if (z.plane() == 0) throw ShapeError("pool_latent: empty spatial grid");
  Code out(static_cast<std::size_t>(z.c()));
  for (int c = 0; c < z.c(); ++c) {
    const T* p = z.plane_ptr(n, c);
    double s = 0;
    for (std::size_t i = 0; i < z.plane(); ++i) s += p[i];
    out[static_cast<std::size_t>(c)] = s / static_cast<double>(z.plane());
  }
  return out;
}

/// Pools a single-sample latent code after checking it has the network's latent shape.
inline Code pool_latent(const LatentCode& z, const nn::NetworkConfig& cfg = {}) {
  const Shape4 want{1, cfg.latent_channels(), cfg.latent_height(), cfg.latent_width()};
  require_shape(z.tensor.shape(), want, "pool_latent");
  return pool_latent(z.tensor, 0);
}

/// Mean of pooled codes (pooling and averaging commute, so this equals pooling the mean latent).
inline ReferenceCode build_reference(std::span<const Code> codes) {
  if (codes.empty()) throw InvalidArgument("build_reference: empty reference set");
  ReferenceCode r;
  r.pooled.assign(codes.front().size(), 0.0);
  for (const auto& c : codes) {
    if (c.size() != r.pooled.size()) throw ShapeError("build_reference: codes of different length");
    for (std::size_t i = 0; i < c.size(); ++i) r.pooled[i] += c[i];
  }
  for (auto& v : r.pooled) v /= static_cast<double>(codes.size());
  r.source_count = codes.size();
  return r;
}

inline double distance(const Code& a, const Code& b) {
  if (a.size() != b.size()) throw ShapeError("distance: code lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline SpoofScore spoof_score(std::span<const Code> slice_codes, const ReferenceCode& ref) {
  if (ref.pooled.empty() || ref.source_count == 0) throw InvalidArgument("spoof_score: missing reference code");
  if (slice_codes.empty()) throw InvalidArgument("spoof_score: instance has no B-scans");
  SpoofScore s;
  s.per_slice.reserve(slice_codes.size());
  for (const auto& c : slice_codes) s.per_slice.push_back(distance(c, ref.pooled));
  double sum = 0;
  for (double d : s.per_slice) sum += d;
  s.value = sum / static_cast<double>(s.per_slice.size());
  return s;
}

/// Raw slices of one instance, 1-based.
struct SliceSource {
  int count = 0;
  std::function<BScan(int)> get;

  static SliceSource of(const OctInstance& inst) {
    return {static_cast<int>(inst.bscans.size()), [&inst](int j) { return inst.bscans.at(static_cast<std::size_t>(j - 1)); }};
  }
};

/// Pooled latent code of every slice (encoder only, inference mode).
template <typename T>
std::vector<Code> encode_slices(const nn::SegmentationNet<T>& net, const SliceSource& src, int batch = 8) {
  std::vector<Code> codes;
  codes.reserve(static_cast<std::size_t>(src.count));
  for (int start = 1; start <= src.count; start += batch) {
    const int end = std::min(src.count, start + batch - 1);
    std::vector<BScan> prepared;
    for (int j = start; j <= end; ++j) prepared.push_back(train::prepare_input(src.get(j), net.config()));
    std::vector<const BScan*> ptrs;
    for (const auto& b : prepared) ptrs.push_back(&b);
    const auto enc = net.encoder_forward(to_network_input<T>(ptrs));
    for (int n = 0; n < enc.latent.n(); ++n) codes.push_back(pool_latent(enc.latent, n));
  }
  return codes;
}

// ---------------------------------------------------------------------------------------
// Metrics. All rates are percentages; `threshold` classifies score > threshold as attack.

struct DetPoint {
  double threshold;
  double apcer;  ///< % attacks classified bonafide (score <= threshold)
  double bpcer;  ///< % bonafides classified attack (score > threshold)
};

struct PadMetrics {
  double acc = 0;       ///< % correct at acc_threshold
  double acc_threshold = 0;
  double bpcer10 = 0;   ///< BPCER at the largest threshold with APCER <= 10%
  double bpcer20 = 0;   ///< ... APCER <= 5%
  double d_eer = 0;     ///< (APCER + BPCER) / 2 where |APCER - BPCER| is smallest
  double d_eer_threshold = 0;
  std::vector<DetPoint> det;  ///< ascending threshold, -inf first
};

/// Operating points at -inf (everything attack) and at every distinct score.
inline std::vector<DetPoint> det_curve(std::span<const double> bonafide, std::span<const double> attack) {
  if (bonafide.empty()) throw InvalidArgument("PAD metrics need at least one bonafide score");
  if (attack.empty()) throw InvalidArgument("PAD metrics need at least one attack score (APCER is undefined otherwise)");
  for (double s : bonafide)
    if (!std::isfinite(s)) throw InvalidArgument("PAD metrics: non-finite bonafide score");
  for (double s : attack)
    if (!std::isfinite(s)) throw InvalidArgument("PAD metrics: non-finite attack score");
  std::vector<double> b(bonafide.begin(), bonafide.end()), a(attack.begin(), attack.end());
  std::sort(b.begin(), b.end());
  std::sort(a.begin(), a.end());
  std::vector<double> thr{-std::numeric_limits<double>::infinity()};
  thr.insert(thr.end(), b.begin(), b.end());
  thr.insert(thr.end(), a.begin(), a.end());
  std::sort(thr.begin() + 1, thr.end());
  thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
  std::vector<DetPoint> det;
  det.reserve(thr.size());
  for (double t : thr) {
    const auto a_le = std::upper_bound(a.begin(), a.end(), t) - a.begin();
    const auto b_le = std::upper_bound(b.begin(), b.end(), t) - b.begin();
    det.push_back({t, 100.0 * static_cast<double>(a_le) / a.size(), 100.0 * static_cast<double>(b.size() - b_le) / b.size()});
  }
  return det;
}

/// BPCER at the largest threshold whose APCER does not exceed 100/n %.
inline double bpcer_at(const std::vector<DetPoint>& det, double apcer_limit) {
  double best = 100.0;
  for (const auto& p : det)
    if (p.apcer <= apcer_limit + 1e-12) best = p.bpcer;  // det is ascending; APCER non-decreasing
  return best;
}

/// % correct when classifying with `threshold`.
inline double accuracy_at(std::span<const double> bonafide, std::span<const double> attack, double threshold) {
  std::size_t ok = 0;
  for (double s : bonafide) ok += s <= threshold;
  for (double s : attack) ok += s > threshold;
  return 100.0 * static_cast<double>(ok) / static_cast<double>(bonafide.size() + attack.size());
}

inline PadMetrics pad_metrics(std::span<const double> bonafide, std::span<const double> attack) {
  PadMetrics m;
  m.det = det_curve(bonafide, attack);
  const double nb = static_cast<double>(bonafide.size()), na = static_cast<double>(attack.size());
  m.acc = -1;
  double best_gap = std::numeric_limits<double>::infinity(), best_avg = 0;
  for (const auto& p : m.det) {
    const double correct = (100.0 - p.bpcer) / 100.0 * nb + (100.0 - p.apcer) / 100.0 * na;
    const double acc = 100.0 * correct / (nb + na);
    if (acc > m.acc + 1e-12) {
      m.acc = acc;
      m.acc_threshold = p.threshold;
    }
    const double gap = std::abs(p.apcer - p.bpcer), avg = 0.5 * (p.apcer + p.bpcer);
    if (gap < best_gap - 1e-12 || (std::abs(gap - best_gap) <= 1e-12 && avg < best_avg)) {
      best_gap = gap;
      best_avg = avg;
      m.d_eer_threshold = p.threshold;
    }
  }
  m.d_eer = best_avg;
  m.bpcer10 = bpcer_at(m.det, 10.0);
  m.bpcer20 = bpcer_at(m.det, 5.0);
  return m;
}

/// Threshold fixed on reference data: the largest reference-instance score, so every
/// reference instance would be accepted.
inline double reference_threshold(std::span<const double> reference_scores) {
  if (reference_scores.empty()) throw InvalidArgument("reference_threshold: no reference scores");
  return *std::max_element(reference_scores.begin(), reference_scores.end());
}

}  // namespace ocfr::pad
