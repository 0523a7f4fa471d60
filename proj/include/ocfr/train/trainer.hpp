#pragma once

// Five-fold training of the segmentation network on annotated bonafide B-scans.

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/imaging.hpp"
#include "ocfr/metrics.hpp"
#include "ocfr/nn/network.hpp"
#include "ocfr/train/adam.hpp"
#include "ocfr/train/folds.hpp"
#include "ocfr/train/losses.hpp"

namespace ocfr::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 5e-5;
  int batch_size = 16;
  int epochs = 100;
  std::uint64_t seed = 0;
  int fold_count = 5;
  LossWeights loss_weights;
  bool hflip = false;   ///< random horizontal flips of training samples
  int eval_batch = 8;

  AdamConfig adam() const { return {learning_rate, beta1, beta2, 1e-8, weight_decay}; }

  void validate() const {
    if (!(learning_rate > 0) || !(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1) || weight_decay < 0)
      throw InvalidArgument("train: optimizer hyperparameters out of range");
    if (batch_size < 1 || epochs < 1 || eval_batch < 1) throw InvalidArgument("train: batch_size, epochs and eval_batch must be >= 1");
    if (fold_count < 2) throw InvalidArgument("train: fold_count must be >= 2");
    if (loss_weights.reconstruction < 0 || loss_weights.segmentation < 0 ||
        loss_weights.reconstruction + loss_weights.segmentation <= 0)
      throw InvalidArgument("train: loss weights must be non-negative and not both zero");
  }
};

/// Network-ready samples: normalised, resized images with matching masks.
struct SegmentationDataset {
  std::vector<BScan> images;
  std::vector<AnnotationMask> masks;

  std::size_t size() const noexcept { return images.size(); }

  void add(const BScan& raw, const AnnotationMask& mask, int rows = kNetHeight, int cols = kNetWidth) {
    auto [img, m] = resize_to_network(normalize_bscan(raw), mask, rows, cols);
    images.push_back(std::move(img));
    masks.push_back(std::move(*m));
  }

  void add(const BScan& raw, const AnnotationMask& mask, const nn::NetworkConfig& net) {
    add(raw, mask, net.input_height, net.input_width);
  }
};

/// Per-slice network input from a raw B-scan.
inline BScan prepare_input(const BScan& raw, const nn::NetworkConfig& cfg) {
  return resize_to_network(normalize_bscan(raw), std::nullopt, cfg.input_height, cfg.input_width).first;
}

struct EpochRecord {
  int fold = 0;
  int epoch = 0;  ///< 1-based
  double l_d = 0, l_s = 0, l = 0;
  double test_miou = 0, test_pa = 0;
  double seconds = 0;  ///< wall time; informational only
};

/// Snapshot of every parameter (including running statistics).
template <typename T>
std::vector<std::vector<T>> snapshot(const nn::ParamStore<T>& ps) {
  std::vector<std::vector<T>> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(p.value);
  return out;
}

template <typename T>
void restore(nn::ParamStore<T>& ps, const std::vector<std::vector<T>>& snap) {
  if (snap.size() != ps.size()) throw InvalidArgument("restore: snapshot has " + std::to_string(snap.size()) + " tensors");
  for (std::size_t i = 0; i < snap.size(); ++i) {
    auto& p = ps[static_cast<int>(i)];
    if (snap[i].size() != p.value.size()) throw ShapeError("restore: size mismatch for " + p.name);
    p.value = snap[i];
  }
}

/// Confusion matrix of argmax predictions over `indices`.
template <typename T>
metrics::ConfusionMatrix evaluate(const nn::SegmentationNet<T>& net, const SegmentationDataset& data,
                                  const std::vector<std::size_t>& indices, int batch = 8) {
  metrics::ConfusionMatrix cm(kNumClasses);
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(indices.size(), start + static_cast<std::size_t>(batch));
    std::vector<const BScan*> imgs;
    for (std::size_t i = start; i < end; ++i) imgs.push_back(&data.images.at(indices[i]));
    const auto out = net.forward(to_network_input<T>(imgs));
    const auto& p = out.segmentation();
    for (std::size_t i = start; i < end; ++i) {
      const auto& truth = data.masks[indices[i]].labels;
      const int n = static_cast<int>(i - start);
      for (int y = 0; y < p.h(); ++y)
        for (int x = 0; x < p.w(); ++x) {
          int best = 0;
          for (int c = 1; c < p.c(); ++c)
            if (p.at(n, c, y, x) > p.at(n, best, y, x)) best = c;
          ++cm(truth(y, x), best);
        }
    }
  }
  return cm;
}

template <typename T>
struct FoldResult {
  nn::SegmentationNet<T> net;      ///< parameters of the best epoch
  std::vector<EpochRecord> trace;
  int best_epoch = 0;
  double best_miou = -1;
  double best_pa = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

namespace detail {

inline void hflip(Tensor<float>& x, int n) {
  for (int c = 0; c < x.c(); ++c)
    for (int y = 0; y < x.h(); ++y) {
      float* row = x.plane_ptr(n, c) + static_cast<std::size_t>(y) * x.w();
      std::reverse(row, row + x.w());
    }
}

}  // namespace detail

/// Trains one fold from a fresh initialisation and keeps the epoch with the best test mIOU.
inline FoldResult<float> train_fold(const SegmentationDataset& data, const std::vector<std::size_t>& train_idx,
                                    const std::vector<std::size_t>& test_idx, const nn::NetworkConfig& net_cfg,
                                    const TrainConfig& cfg, int fold = 0, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_idx.empty() || test_idx.empty()) throw InvalidArgument("train_fold: empty train or test set");
  FoldResult<float> r{nn::SegmentationNet<float>(net_cfg, derive_seed(cfg.seed, 0x1000 + static_cast<std::uint64_t>(fold))), {}};
  auto& net = r.net;
  Adam<float> adam(cfg.adam());
  std::vector<std::vector<float>> best;
  Rng rng(derive_seed(cfg.seed, 0x2000 + static_cast<std::uint64_t>(fold)));
  std::vector<std::size_t> order = train_idx;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);
    EpochRecord rec{fold, epoch};
    double sum_d = 0, sum_s = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const BScan*> imgs;
      std::vector<const AnnotationMask*> masks;
      for (std::size_t i = start; i < end; ++i) {
        imgs.push_back(&data.images.at(order[i]));
        masks.push_back(&data.masks.at(order[i]));
      }
      Tensor<float> x = to_network_input<float>(imgs);
      Tensor<float> target = one_hot<float>(masks);
      if (cfg.hflip)
        for (int n = 0; n < x.n(); ++n)
          if (rng.uniform() < 0.5) {
            detail::hflip(x, n);
            detail::hflip(target, n);
          }

      const auto out = net.forward_train(x);
      auto ld = reconstruction_loss_grad(x, out.reconstruction());
      auto ls = segmentation_loss_grad(target, out.segmentation());
      const double total = loss_total(ld.value, ls.value, cfg.loss_weights);
      if (!std::isfinite(total))
        throw TrainingError("non-finite loss at fold " + std::to_string(fold) + ", epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches + 1) + " (L_D=" + std::to_string(ld.value) + ", L_S=" + std::to_string(ls.value) + ")");
      for (auto& g : ld.grad.values()) g *= static_cast<float>(cfg.loss_weights.reconstruction);
      for (auto& g : ls.grad.values()) g *= static_cast<float>(cfg.loss_weights.segmentation);
      net.params().zero_grad();
      net.backward(ld.grad, ls.grad);
      adam.step(net.params());
      sum_d += ld.value;
      sum_s += ls.value;
      ++batches;
    }
    net.release_cache();
    rec.l_d = sum_d / batches;
    rec.l_s = sum_s / batches;
    rec.l = loss_total(rec.l_d, rec.l_s, cfg.loss_weights);
    const auto cm = evaluate(net, data, test_idx, cfg.eval_batch);
    rec.test_miou = metrics::miou(cm);
    rec.test_pa = metrics::pixel_accuracy(cm);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rec.test_miou > r.best_miou) {
      r.best_miou = rec.test_miou;
      r.best_pa = rec.test_pa;
      r.best_epoch = epoch;
      best = snapshot(net.params());
    }
    r.trace.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  restore(net.params(), best);
  return r;
}

}  // namespace ocfr::train
