#pragma once

// Tensor kernels for the segmentation network: convolution via im2col + GEMM, bilinear
// resize, channel softmax and pointwise activations, each with its backward pass.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/imaging.hpp"
#include "ocfr/tensor.hpp"

namespace ocfr::nn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;

  /// "same" padding for stride 1; for stride 2 with an odd kernel this halves even sizes.
  int pad() const noexcept { return dilation * (kernel - 1) / 2; }
  int out_h(int h) const noexcept { return (h + 2 * pad() - dilation * (kernel - 1) - 1) / stride + 1; }
  int out_w(int w) const noexcept { return (w + 2 * pad() - dilation * (kernel - 1) - 1) / stride + 1; }
  int patch() const noexcept { return in_channels * kernel * kernel; }
  bool pointwise() const noexcept { return kernel == 1 && stride == 1; }
};

namespace detail {

template <typename T>
void im2col(const T* x, int h, int w, const ConvGeometry& g, T* col) {
  const int oh = g.out_h(h), ow = g.out_w(w), pad = g.pad();
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < g.in_channels; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < g.kernel; ++ki)
      for (int kj = 0; kj < g.kernel; ++kj) {
        T* out = col + ((static_cast<std::size_t>(c) * g.kernel + ki) * g.kernel + kj) * ohw;
        const int dy = ki * g.dilation - pad, dx = kj * g.dilation - pad;
        for (int oy = 0; oy < oh; ++oy) {
          T* orow = out + static_cast<std::size_t>(oy) * ow;
          const int iy = oy * g.stride + dy;
          if (iy < 0 || iy >= h) {
            std::fill_n(orow, ow, T{0});
            continue;
          }
          const T* xrow = xc + static_cast<std::size_t>(iy) * w;
          if (g.stride == 1) {
            const int lo = std::clamp(-dx, 0, ow), hi = std::clamp(w - dx, 0, ow);
            std::fill_n(orow, lo, T{0});
            if (hi > lo) std::copy(xrow + lo + dx, xrow + hi + dx, orow + lo);
            std::fill(orow + std::max(hi, lo), orow + ow, T{0});
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * g.stride + dx;
              orow[ox] = (ix >= 0 && ix < w) ? xrow[ix] : T{0};
            }
          }
        }
      }
  }
}

template <typename T>
void col2im(const T* col, int h, int w, const ConvGeometry& g, T* dx_out) {
  const int oh = g.out_h(h), ow = g.out_w(w), pad = g.pad();
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < g.in_channels; ++c) {
    T* xc = dx_out + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < g.kernel; ++ki)
      for (int kj = 0; kj < g.kernel; ++kj) {
        const T* in = col + ((static_cast<std::size_t>(c) * g.kernel + ki) * g.kernel + kj) * ohw;
        const int dy = ki * g.dilation - pad, dx = kj * g.dilation - pad;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride + dy;
          if (iy < 0 || iy >= h) continue;
          const T* irow = in + static_cast<std::size_t>(oy) * ow;
          T* xrow = xc + static_cast<std::size_t>(iy) * w;
          if (g.stride == 1) {
            const int lo = std::clamp(-dx, 0, ow), hi = std::clamp(w - dx, 0, ow);
            for (int ox = lo; ox < hi; ++ox) xrow[ox + dx] += irow[ox];
          } else {
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * g.stride + dx;
              if (ix >= 0 && ix < w) xrow[ix] += irow[ox];
            }
          }
        }
      }
  }
}

}  // namespace detail

/// y = conv(x, weight) + bias. `weight` is out x in x k x k, `bias` may be null.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const T* weight, const T* bias, const ConvGeometry& g,
                         std::vector<T>& scratch) {
  if (x.c() != g.in_channels)
    throw ShapeError("conv2d: expected " + std::to_string(g.in_channels) + " input channels, got " + std::to_string(x.c()));
  const int oh = g.out_h(x.h()), ow = g.out_w(x.w());
  const Eigen::Index ohw = static_cast<Eigen::Index>(oh) * ow;
  Tensor<T> y(x.n(), g.out_channels, oh, ow);
  Eigen::Map<const MatRM<T>> wm(weight, g.out_channels, g.patch());
  for (int n = 0; n < x.n(); ++n) {
    const T* colp = x.sample_ptr(n);
    if (!g.pointwise()) {
      scratch.resize(static_cast<std::size_t>(g.patch()) * ohw);
      detail::im2col(x.sample_ptr(n), x.h(), x.w(), g, scratch.data());
      colp = scratch.data();
    }
    Eigen::Map<const MatRM<T>> col(colp, g.patch(), ohw);
    Eigen::Map<MatRM<T>> ym(y.sample_ptr(n), g.out_channels, ohw);
    ym.noalias() = wm * col;
    if (bias)
      for (int o = 0; o < g.out_channels; ++o) ym.row(o).array() += bias[o];
  }
  return y;
}

/// Accumulates dL/dweight and dL/dbias; returns dL/dx when `dx` is non-null.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const T* weight, const ConvGeometry& g, const Tensor<T>& dy, T* dweight,
                     T* dbias, Tensor<T>* dx, std::vector<T>& scratch) {
  const Eigen::Index ohw = static_cast<Eigen::Index>(dy.h()) * dy.w();
  Eigen::Map<const MatRM<T>> wm(weight, g.out_channels, g.patch());
  Eigen::Map<MatRM<T>> dwm(dweight, g.out_channels, g.patch());
  if (dx) *dx = Tensor<T>(x.shape());
  std::vector<T> dcol;
  for (int n = 0; n < x.n(); ++n) {
    Eigen::Map<const MatRM<T>> dym(dy.sample_ptr(n), g.out_channels, ohw);
    const T* colp = x.sample_ptr(n);
    if (!g.pointwise()) {
      scratch.resize(static_cast<std::size_t>(g.patch()) * ohw);
      detail::im2col(x.sample_ptr(n), x.h(), x.w(), g, scratch.data());
      colp = scratch.data();
    }
    Eigen::Map<const MatRM<T>> col(colp, g.patch(), ohw);
    dwm.noalias() += dym * col.transpose();
    if (dbias)
      for (int o = 0; o < g.out_channels; ++o) {
        const T* row = dy.plane_ptr(n, o);
        T s{0};
        for (Eigen::Index i = 0; i < ohw; ++i) s += row[i];
        dbias[o] += s;
      }
    if (dx) {
      if (g.pointwise()) {
        Eigen::Map<MatRM<T>> dxm(dx->sample_ptr(n), g.patch(), ohw);
        dxm.noalias() = wm.transpose() * dym;
      } else {
        dcol.resize(static_cast<std::size_t>(g.patch()) * ohw);
        Eigen::Map<MatRM<T>> dcm(dcol.data(), g.patch(), ohw);
        dcm.noalias() = wm.transpose() * dym;
        detail::col2im(dcol.data(), x.h(), x.w(), g, dx->sample_ptr(n));
      }
    }
  }
}

/// Half-pixel bilinear resize of every plane.
template <typename T>
Tensor<T> resize_forward(const Tensor<T>& x, int oh, int ow) {
  if (x.h() == oh && x.w() == ow) return x;
  const auto ty = bilinear_taps(x.h(), oh);
  const auto tx = bilinear_taps(x.w(), ow);
  Tensor<T> y(x.n(), x.c(), oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const T* in = x.plane_ptr(n, c);
      T* out = y.plane_ptr(n, c);
      for (int oy = 0; oy < oh; ++oy) {
        const T* r0 = in + static_cast<std::size_t>(ty.lo[oy]) * x.w();
        const T* r1 = in + static_cast<std::size_t>(ty.hi[oy]) * x.w();
        const T fy = static_cast<T>(ty.frac[oy]);
        T* orow = out + static_cast<std::size_t>(oy) * ow;
        for (int ox = 0; ox < ow; ++ox) {
          const T fx = static_cast<T>(tx.frac[ox]);
          const T top = r0[tx.lo[ox]] + fx * (r0[tx.hi[ox]] - r0[tx.lo[ox]]);
          const T bot = r1[tx.lo[ox]] + fx * (r1[tx.hi[ox]] - r1[tx.lo[ox]]);
          orow[ox] = top + fy * (bot - top);
        }
      }
    }
  return y;
}

template <typename T>
Tensor<T> resize_backward(const Tensor<T>& dy, const Shape4& in_shape) {
  if (dy.h() == in_shape.h && dy.w() == in_shape.w) return dy;
  const auto ty = bilinear_taps(in_shape.h, dy.h());
  const auto tx = bilinear_taps(in_shape.w, dy.w());
  Tensor<T> dx(in_shape);
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c) {
      const T* g = dy.plane_ptr(n, c);
      T* out = dx.plane_ptr(n, c);
      for (int oy = 0; oy < dy.h(); ++oy) {
        T* r0 = out + static_cast<std::size_t>(ty.lo[oy]) * in_shape.w;
        T* r1 = out + static_cast<std::size_t>(ty.hi[oy]) * in_shape.w;
        const T fy = static_cast<T>(ty.frac[oy]);
        const T* grow = g + static_cast<std::size_t>(oy) * dy.w();
        for (int ox = 0; ox < dy.w(); ++ox) {
          const T fx = static_cast<T>(tx.frac[ox]);
          const T v = grow[ox];
          r0[tx.lo[ox]] += (1 - fy) * (1 - fx) * v;
          r0[tx.hi[ox]] += (1 - fy) * fx * v;
          r1[tx.lo[ox]] += fy * (1 - fx) * v;
          r1[tx.hi[ox]] += fy * fx * v;
        }
      }
    }
  return dx;
}

/// Softmax across channels at every spatial site.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  Tensor<T> p(x.shape());
  const std::size_t hw = x.plane();
  std::vector<T> mx(hw), sum(hw);
  for (int n = 0; n < x.n(); ++n) {
    std::fill(mx.begin(), mx.end(), -std::numeric_limits<T>::infinity());
    for (int c = 0; c < x.c(); ++c) {
      const T* in = x.plane_ptr(n, c);
      for (std::size_t i = 0; i < hw; ++i) mx[i] = std::max(mx[i], in[i]);
    }
    std::fill(sum.begin(), sum.end(), T{0});
    for (int c = 0; c < x.c(); ++c) {
      const T* in = x.plane_ptr(n, c);
      T* out = p.plane_ptr(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        out[i] = std::exp(in[i] - mx[i]);
        sum[i] += out[i];
      }
    }
    for (int c = 0; c < x.c(); ++c) {
      T* out = p.plane_ptr(n, c);
      for (std::size_t i = 0; i < hw; ++i) out[i] /= sum[i];
    }
  }
  return p;
}

/// Given p = softmax(z) and g = dL/dp, returns dL/dz = p * (g - <p, g>).
template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& p, const Tensor<T>& g) {
  Tensor<T> dz(p.shape());
  const std::size_t hw = p.plane();
  std::vector<T> dot(hw);
  for (int n = 0; n < p.n(); ++n) {
    std::fill(dot.begin(), dot.end(), T{0});
    for (int c = 0; c < p.c(); ++c) {
      const T* pp = p.plane_ptr(n, c);
      const T* gg = g.plane_ptr(n, c);
      for (std::size_t i = 0; i < hw; ++i) dot[i] += pp[i] * gg[i];
    }
    for (int c = 0; c < p.c(); ++c) {
      const T* pp = p.plane_ptr(n, c);
      const T* gg = g.plane_ptr(n, c);
      T* out = dz.plane_ptr(n, c);
      for (std::size_t i = 0; i < hw; ++i) out[i] = pp[i] * (gg[i] - dot[i]);
    }
  }
  return dz;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (auto& v : x.values()) v = v > T{0} ? v : T{0};
}

/// dL/dx for y = relu(x), using the forward output as the mask.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, Tensor<T> dy) {
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!(y.data()[i] > T{0})) dy.data()[i] = T{0};
  return dy;
}

template <typename T>
Tensor<T> sigmoid(Tensor<T> x) {
  for (auto& v : x.values()) v = T{1} / (T{1} + std::exp(-v));
  return x;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, Tensor<T> dy) {
  for (std::size_t i = 0; i < dy.size(); ++i) dy.data()[i] *= y.data()[i] * (T{1} - y.data()[i]);
  return dy;
}

/// Channel concatenation [a, b].
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ShapeError("concat: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    std::copy_n(a.sample_ptr(n), a.plane() * a.c(), out.sample_ptr(n));
    std::copy_n(b.sample_ptr(n), b.plane() * b.c(), out.plane_ptr(n, a.c()));
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& g, int first) {
  Tensor<T> a(g.n(), first, g.h(), g.w()), b(g.n(), g.c() - first, g.h(), g.w());
  for (int n = 0; n < g.n(); ++n) {
    std::copy_n(g.sample_ptr(n), a.plane() * a.c(), a.sample_ptr(n));
    std::copy_n(g.plane_ptr(n, first), b.plane() * b.c(), b.sample_ptr(n));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  require_shape(b.shape(), a.shape(), "add");
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

}  // namespace ocfr::nn
