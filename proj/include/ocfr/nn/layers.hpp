#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/nn/ops.hpp"
#include "ocfr/rng.hpp"
#include "ocfr/tensor.hpp"

namespace ocfr::nn {

enum class Mode { train, infer };

/// A named array of learnable weights (or a non-learnable buffer such as BN running stats).
template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool trainable = true;

  std::size_t count() const noexcept { return value.size(); }
};

template <typename T>
class ParamStore {
 public:
  int add(std::string name, std::vector<int> shape, bool trainable = true, T fill = T{0}) {
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                          [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    Param<T> p{std::move(name), std::move(shape), std::vector<T>(n, fill), {}, trainable};
    if (trainable) p.grad.assign(n, T{0});
    items_.push_back(std::move(p));
    return static_cast<int>(items_.size()) - 1;
  }

  Param<T>& operator[](int i) { return items_.at(static_cast<std::size_t>(i)); }
  const Param<T>& operator[](int i) const { return items_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const noexcept { return items_.size(); }
  auto begin() noexcept { return items_.begin(); }
  auto end() noexcept { return items_.end(); }
  auto begin() const noexcept { return items_.begin(); }
  auto end() const noexcept { return items_.end(); }

  void zero_grad() {
    for (auto& p : items_) std::fill(p.grad.begin(), p.grad.end(), T{0});
  }

  /// Number of learnable scalars.
  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : items_)
      if (p.trainable) n += p.count();
    return n;
  }

  const Param<T>* find(const std::string& name) const {
    for (const auto& p : items_)
      if (p.name == name) return &p;
    return nullptr;
  }

 private:
  std::vector<Param<T>> items_;
};

template <typename T>
struct Conv2d {
  int weight = -1;
  int bias = -1;
  ConvGeometry geom;

  /// Fan-in variance scaling; `gain` 2 for ReLU-followed layers, 1 for linear ones.
  static Conv2d create(ParamStore<T>& ps, const std::string& name, ConvGeometry g, Rng& rng, double gain = 2.0) {
    Conv2d c;
    c.geom = g;
    c.weight = ps.add(name + ".weight", {g.out_channels, g.in_channels, g.kernel, g.kernel});
    c.bias = ps.add(name + ".bias", {g.out_channels});
    const double std = std::sqrt(gain / g.patch());
    for (auto& v : ps[c.weight].value) v = static_cast<T>(std * rng.normal());
    return c;
  }

  Tensor<T> forward(const ParamStore<T>& ps, const Tensor<T>& x, std::vector<T>& scratch) const {
    return conv2d_forward(x, ps[weight].value.data(), ps[bias].value.data(), geom, scratch);
  }

  /// Accumulates parameter gradients; fills `dx` when non-null.
  void backward(ParamStore<T>& ps, const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx, std::vector<T>& scratch) const {
    conv2d_backward(x, ps[weight].value.data(), geom, dy, ps[weight].grad.data(), ps[bias].grad.data(), dx, scratch);
  }
};

template <typename T>
struct BatchNorm {
  int gamma = -1, beta = -1, running_mean = -1, running_var = -1;
  T eps = T(1e-5);
  T momentum = T(0.1);

  struct Cache {
    Tensor<T> xhat;
    std::vector<T> inv_std;
    std::vector<double> batch_mean;
    std::vector<double> batch_var;  ///< unbiased, for the running estimate
  };

  static BatchNorm create(ParamStore<T>& ps, const std::string& name, int channels) {
    BatchNorm b;
    b.gamma = ps.add(name + ".gamma", {channels}, true, T{1});
    b.beta = ps.add(name + ".beta", {channels}, true, T{0});
    b.running_mean = ps.add(name + ".running_mean", {channels}, false, T{0});
    b.running_var = ps.add(name + ".running_var", {channels}, false, T{1});
    return b;
  }

  /// Normalises with batch statistics over (N, H, W). Running estimates are updated
  /// separately by update_running() so the pass itself leaves the parameters untouched.
  Tensor<T> forward_train(const ParamStore<T>& ps, const Tensor<T>& x, Cache& cache) const {
    const int C = x.c();
    const std::size_t hw = x.plane();
    const double m = static_cast<double>(x.n()) * hw;
    Tensor<T> y(x.shape());
    cache.xhat = Tensor<T>(x.shape());
    cache.inv_std.assign(C, T{0});
    cache.batch_mean.assign(C, 0.0);
    cache.batch_var.assign(C, 0.0);
    const auto& g = ps[gamma].value;
    const auto& b = ps[beta].value;
    for (int c = 0; c < C; ++c) {
      double sum = 0;
      for (int n = 0; n < x.n(); ++n) {
        const T* p = x.plane_ptr(n, c);
        for (std::size_t i = 0; i < hw; ++i) sum += p[i];
      }
      const double mean = sum / m;
      double sq = 0;
      for (int n = 0; n < x.n(); ++n) {
        const T* p = x.plane_ptr(n, c);
        for (std::size_t i = 0; i < hw; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      const double var = sq / m;
      const T inv = static_cast<T>(1.0 / std::sqrt(var + eps));
      cache.inv_std[c] = inv;
      cache.batch_mean[c] = mean;
      cache.batch_var[c] = m > 1 ? var * m / (m - 1) : var;
      for (int n = 0; n < x.n(); ++n) {
        const T* p = x.plane_ptr(n, c);
        T* xh = cache.xhat.plane_ptr(n, c);
        T* out = y.plane_ptr(n, c);
        for (std::size_t i = 0; i < hw; ++i) {
          xh[i] = (p[i] - static_cast<T>(mean)) * inv;
          out[i] = g[c] * xh[i] + b[c];
        }
      }
    }
    return y;
  }

  void update_running(ParamStore<T>& ps, const Cache& cache) const {
    auto& rm = ps[running_mean].value;
    auto& rv = ps[running_var].value;
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = static_cast<T>((1 - momentum) * rm[c] + momentum * cache.batch_mean[c]);
      rv[c] = static_cast<T>((1 - momentum) * rv[c] + momentum * cache.batch_var[c]);
    }
  }

  Tensor<T> forward_infer(const ParamStore<T>& ps, const Tensor<T>& x) const {
    Tensor<T> y(x.shape());
    const auto& g = ps[gamma].value;
    const auto& b = ps[beta].value;
    const auto& rm = ps[running_mean].value;
    const auto& rv = ps[running_var].value;
    for (int c = 0; c < x.c(); ++c) {
      const T scale = g[c] / std::sqrt(rv[c] + eps);
      const T shift = b[c] - rm[c] * scale;
      for (int n = 0; n < x.n(); ++n) {
        const T* p = x.plane_ptr(n, c);
        T* out = y.plane_ptr(n, c);
        for (std::size_t i = 0; i < x.plane(); ++i) out[i] = p[i] * scale + shift;
      }
    }
    return y;
  }

  Tensor<T> backward(ParamStore<T>& ps, const Tensor<T>& dy, const Cache& cache) const {
    const int C = dy.c();
    const std::size_t hw = dy.plane();
    const double m = static_cast<double>(dy.n()) * hw;
    Tensor<T> dx(dy.shape());
    auto& g = ps[gamma];
    auto& b = ps[beta];
    for (int c = 0; c < C; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < dy.n(); ++n) {
        const T* d = dy.plane_ptr(n, c);
        const T* xh = cache.xhat.plane_ptr(n, c);
        for (std::size_t i = 0; i < hw; ++i) {
          sum_dy += d[i];
          sum_dy_xhat += d[i] * xh[i];
        }
      }
      b.grad[c] += static_cast<T>(sum_dy);
      g.grad[c] += static_cast<T>(sum_dy_xhat);
      const double k = g.value[c] * cache.inv_std[c] / m;
      for (int n = 0; n < dy.n(); ++n) {
        const T* d = dy.plane_ptr(n, c);
        const T* xh = cache.xhat.plane_ptr(n, c);
        T* out = dx.plane_ptr(n, c);
        for (std::size_t i = 0; i < hw; ++i) out[i] = static_cast<T>(k * (m * d[i] - sum_dy - xh[i] * sum_dy_xhat));
      }
    }
    return dx;
  }
};

/// conv -> [batch norm] -> [ReLU]
template <typename T>
struct ConvUnit {
  Conv2d<T> conv;
  bool has_bn = true;
  BatchNorm<T> bn;
  bool relu = true;

  struct Cache {
    Tensor<T> x;
    typename BatchNorm<T>::Cache bn;
    Tensor<T> y;
  };

  static ConvUnit create(ParamStore<T>& ps, const std::string& name, ConvGeometry g, Rng& rng, bool with_bn, bool with_relu) {
    ConvUnit u;
    u.conv = Conv2d<T>::create(ps, name + ".conv", g, rng, with_relu ? 2.0 : 1.0);
    u.has_bn = with_bn;
    if (with_bn) u.bn = BatchNorm<T>::create(ps, name + ".bn", g.out_channels);
    u.relu = with_relu;
    return u;
  }

  const ConvGeometry& geom() const noexcept { return conv.geom; }

  /// Inference when `cache` is null; otherwise training mode with batch statistics.
  Tensor<T> forward(const ParamStore<T>& ps, const Tensor<T>& x, Cache* cache, std::vector<T>& scratch) const {
    Tensor<T> y = conv.forward(ps, x, scratch);
    if (has_bn) y = cache ? bn.forward_train(ps, y, cache->bn) : bn.forward_infer(ps, y);
    if (relu) relu_inplace(y);
    if (cache) {
      cache->x = x;
      cache->y = y;
    }
    return y;
  }

  void update_running(ParamStore<T>& ps, const Cache& cache) const {
    if (has_bn) bn.update_running(ps, cache.bn);
  }

  /// Returns dL/dx (empty tensor when `need_dx` is false).
  Tensor<T> backward(ParamStore<T>& ps, Tensor<T> dy, const Cache& cache, bool need_dx, std::vector<T>& scratch) const {
    if (relu) dy = relu_backward(cache.y, std::move(dy));
    if (has_bn) dy = bn.backward(ps, dy, cache.bn);
    Tensor<T> dx;
    conv.backward(ps, cache.x, dy, need_dx ? &dx : nullptr, scratch);
    return dx;
  }
};

/// Attention fusion f_S * (1 + softmax_channels(f_D)).
template <typename T>
Tensor<T> attention_fuse(const Tensor<T>& f_d, const Tensor<T>& f_s, Tensor<T>* softmax_out = nullptr) {
  if (f_d.shape() != f_s.shape())
    throw ShapeError("attention: f_D " + f_d.shape().str() + " vs f_S " + f_s.shape().str());
  Tensor<T> p = softmax_channels(f_d);
  Tensor<T> out(f_s.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = f_s.data()[i] * (T{1} + p.data()[i]);
  if (softmax_out) *softmax_out = std::move(p);
  return out;
}

/// Backward of attention_fuse given its softmax; returns {dL/df_D, dL/df_S}.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> attention_fuse_backward(const Tensor<T>& softmax, const Tensor<T>& f_s, const Tensor<T>& g) {
  Tensor<T> d_fs(g.shape()), d_p(g.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    d_fs.data()[i] = g.data()[i] * (T{1} + softmax.data()[i]);
    d_p.data()[i] = g.data()[i] * f_s.data()[i];
  }
  return {softmax_channels_backward(softmax, d_p), std::move(d_fs)};
}

}  // namespace ocfr::nn
