#pragma once

// Segmentation metrics (confusion matrix, mIOU, pixel accuracy) and verification-score
// metrics (EER, FMR100, GMR at a fixed FMR). Rates are percentages in [0, 100];
// mIOU and pixel accuracy are fractions in [0, 1].

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/grid.hpp"
#include "ocfr/types.hpp"

namespace ocfr::metrics {

/// Rows: true class, columns: predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int n_classes = kNumClasses) : n_(n_classes), counts_(static_cast<std::size_t>(n_classes) * n_classes, 0) {}
  ConfusionMatrix(int n_classes, std::vector<std::uint64_t> counts) : n_(n_classes), counts_(std::move(counts)) {
    if (counts_.size() != static_cast<std::size_t>(n_) * n_) throw ShapeError("confusion matrix: wrong entry count");
  }

  int classes() const noexcept { return n_; }
  std::uint64_t& operator()(int truth, int pred) { return counts_[static_cast<std::size_t>(truth) * n_ + pred]; }
  std::uint64_t operator()(int truth, int pred) const { return counts_[static_cast<std::size_t>(truth) * n_ + pred]; }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto v : counts_) s += v;
    return s;
  }
  bool is_diagonal() const {
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        if (i != j && (*this)(i, j)) return false;
    return true;
  }

  /// Adds one prediction/truth pair of equal-shape label grids.
  void accumulate(const Grid<std::uint8_t>& pred, const Grid<std::uint8_t>& truth) {
    if (!pred.same_shape(truth))
      throw ShapeError("confusion_matrix: prediction " + detail::dims_str(pred.rows(), pred.cols()) + " vs truth " +
                       detail::dims_str(truth.rows(), truth.cols()));
    const auto& p = pred.values();
    const auto& t = truth.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] >= n_ || t[i] >= n_)
        throw InvalidArgument("confusion_matrix: label " + std::to_string(std::max(p[i], t[i])) + " >= " + std::to_string(n_));
      ++counts_[static_cast<std::size_t>(t[i]) * n_ + p[i]];
    }
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    if (o.n_ != n_) throw ShapeError("confusion matrix class count mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    return *this;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int n_;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion_matrix(const Grid<std::uint8_t>& pred, const Grid<std::uint8_t>& truth, int n_classes = kNumClasses) {
  ConfusionMatrix cm(n_classes);
  cm.accumulate(pred, truth);
  return cm;
}

/// Mean IoU over classes present in prediction or truth.
inline double miou(const ConfusionMatrix& cm) {
  double sum = 0;
  int used = 0;
  for (int k = 0; k < cm.classes(); ++k) {
    std::uint64_t row = 0, col = 0;
    for (int j = 0; j < cm.classes(); ++j) {
      row += cm(k, j);
      col += cm(j, k);
    }
    const std::uint64_t tp = cm(k, k);
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    sum += static_cast<double>(tp) / static_cast<double>(uni);
    ++used;
  }
  if (used == 0) throw InvalidArgument("miou: confusion matrix is empty");
  return sum / used;
}

inline double pixel_accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw InvalidArgument("pixel_accuracy: confusion matrix is empty");
  std::uint64_t diag = 0;
  for (int k = 0; k < cm.classes(); ++k) diag += cm(k, k);
  return static_cast<double>(diag) / static_cast<double>(total);
}

/// One operating point of a verification sweep: accept when score >= threshold.
struct VerificationPoint {
  double threshold;
  double fmr;   ///< % impostor scores accepted
  double fnmr;  ///< % genuine scores rejected
};

/// Operating points for every distinct score plus +inf (reject all), ascending threshold.
inline std::vector<VerificationPoint> verification_sweep(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) throw InvalidArgument("verification metrics need non-empty genuine and impostor lists");
  std::vector<double> g(genuine.begin(), genuine.end()), im(impostor.begin(), impostor.end());
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::vector<double> thr(g);
  thr.insert(thr.end(), im.begin(), im.end());
  std::sort(thr.begin(), thr.end());
  thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
  thr.push_back(std::numeric_limits<double>::infinity());
  std::vector<VerificationPoint> pts;
  pts.reserve(thr.size());
  for (double t : thr) {
    const auto g_below = std::lower_bound(g.begin(), g.end(), t) - g.begin();
    const auto i_below = std::lower_bound(im.begin(), im.end(), t) - im.begin();
    pts.push_back({t, 100.0 * static_cast<double>(im.size() - i_below) / im.size(), 100.0 * static_cast<double>(g_below) / g.size()});
  }
  return pts;
}

/// Equal error rate: the FMR/FNMR crossing, linearly interpolated between the two
/// adjacent operating points that bracket it (index-space interpolation, so the value is
/// invariant under monotone score transforms).
inline double eer(std::span<const double> genuine, std::span<const double> impostor) {
  const auto pts = verification_sweep(genuine, impostor);
  double prev_d = pts.front().fmr - pts.front().fnmr;
  if (prev_d <= 0) return pts.front().fmr;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double d = pts[i].fmr - pts[i].fnmr;
    if (d <= 0) {
      const double a = prev_d / (prev_d - d);
      return pts[i - 1].fmr + a * (pts[i].fmr - pts[i - 1].fmr);
    }
    prev_d = d;
  }
  return pts.back().fmr;  // unreachable: the +inf point always has d = -100
}

/// The lowest-threshold operating point whose FMR does not exceed `fmr_target` (%).
inline VerificationPoint operating_point_at_fmr(std::span<const double> genuine, std::span<const double> impostor, double fmr_target) {
  const auto pts = verification_sweep(genuine, impostor);
  for (const auto& p : pts)
    if (p.fmr <= fmr_target) return p;
  return pts.back();
}

/// Genuine match rate (100 - FNMR) at the first threshold where FMR <= `fmr_target` (%).
inline double gmr_at_fmr(std::span<const double> genuine, std::span<const double> impostor, double fmr_target) {
  return 100.0 - operating_point_at_fmr(genuine, impostor, fmr_target).fnmr;
}

/// FNMR at the first threshold where FMR <= 1%.
inline double fmr100(std::span<const double> genuine, std::span<const double> impostor) {
  return operating_point_at_fmr(genuine, impostor, 1.0).fnmr;
}

}  // namespace ocfr::metrics
