#pragma once

// Training objective: L = w_D * L_D + w_S * L_S, with
//   L_D  per-sample Euclidean norm ||x - x'||_2, averaged over the batch
//   L_S  per-pixel categorical cross-entropy, averaged over pixels and batch,
//        probabilities clamped to [eps, 1 - eps]

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "ocfr/error.hpp"
#include "ocfr/grid.hpp"
#include "ocfr/tensor.hpp"
#include "ocfr/types.hpp"

namespace ocfr::train {

inline constexpr double kProbEps = 1e-7;

template <typename T>
struct LossGrad {
  double value = 0.0;
  Tensor<T> grad;  ///< dL/d(prediction)
};

template <typename T>
LossGrad<T> reconstruction_loss_grad(const Tensor<T>& x, const Tensor<T>& x_rec) {
  require_shape(x_rec.shape(), x.shape(), "loss_reconstruction");
  LossGrad<T> out{0.0, Tensor<T>(x.shape())};
  const std::size_t per = x.size() / static_cast<std::size_t>(x.n());
  for (int n = 0; n < x.n(); ++n) {
    const T* a = x.sample_ptr(n);
    const T* b = x_rec.sample_ptr(n);
    double sq = 0;
    for (std::size_t i = 0; i < per; ++i) sq += (static_cast<double>(b[i]) - a[i]) * (static_cast<double>(b[i]) - a[i]);
    const double norm = std::sqrt(sq);
    out.value += norm;
    T* g = out.grad.sample_ptr(n);
    if (norm > 0)
      for (std::size_t i = 0; i < per; ++i) g[i] = static_cast<T>((static_cast<double>(b[i]) - a[i]) / (norm * x.n()));
  }
  out.value /= x.n();
  return out;
}

template <typename T>
double loss_reconstruction(const Tensor<T>& x, const Tensor<T>& x_rec) {
  require_shape(x_rec.shape(), x.shape(), "loss_reconstruction");
  const std::size_t per = x.size() / static_cast<std::size_t>(x.n());
  double total = 0;
  for (int n = 0; n < x.n(); ++n) {
    double sq = 0;
    for (std::size_t i = 0; i < per; ++i) {
      const double d = static_cast<double>(x_rec.sample_ptr(n)[i]) - x.sample_ptr(n)[i];
      sq += d * d;
    }
    total += std::sqrt(sq);
  }
  return total / x.n();
}

/// `target` is one-hot (N x C x H x W), `prob` a per-pixel simplex of the same shape.
template <typename T>
LossGrad<T> segmentation_loss_grad(const Tensor<T>& target, const Tensor<T>& prob) {
  require_shape(prob.shape(), target.shape(), "loss_segmentation");
  for (T v : prob.values())
    if (!(v >= T{0} && v <= T{1})) throw InvalidArgument("loss_segmentation: probability outside [0,1]");
  LossGrad<T> out{0.0, Tensor<T>(prob.shape())};
  const double pixels = static_cast<double>(prob.n()) * prob.plane();
  const double lo = kProbEps, hi = 1.0 - kProbEps;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double y = target.data()[i];
    if (y == 0) continue;
    const double p = prob.data()[i];
    const double pc = std::clamp(p, lo, hi);
    out.value -= y * std::log(pc);
    if (p > lo && p < hi) out.grad.data()[i] = static_cast<T>(-y / (p * pixels));
  }
  out.value /= pixels;
  return out;
}

template <typename T>
double loss_segmentation(const Tensor<T>& target, const Tensor<T>& prob) {
  return segmentation_loss_grad(target, prob).value;
}

struct LossWeights {
  double reconstruction = 1.0;
  double segmentation = 1.0;
};

inline double loss_total(double l_d, double l_s, LossWeights w = {}) { return w.reconstruction * l_d + w.segmentation * l_s; }

/// One-hot encoding of hard masks, N x 4 x H x W.
template <typename T>
Tensor<T> one_hot(std::span<const AnnotationMask* const> masks) {
  if (masks.empty()) throw InvalidArgument("one_hot: no masks");
  const int h = masks.front()->rows(), w = masks.front()->cols();
  Tensor<T> out(static_cast<int>(masks.size()), kNumClasses, h, w);
  for (std::size_t n = 0; n < masks.size(); ++n) {
    const auto& m = masks[n]->labels;
    if (m.rows() != h || m.cols() != w) throw ShapeError("one_hot: mixed mask sizes");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto k = m(y, x);
        if (k >= kNumClasses) throw InvalidArgument("one_hot: label " + std::to_string(k) + " outside {0,1,2,3}");
        out.at(static_cast<int>(n), k, y, x) = T{1};
      }
  }
  return out;
}

}  // namespace ocfr::train
