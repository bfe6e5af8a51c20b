#pragma once

// Forward and backward kernels for every primitive the saliency network uses.
// All kernels are pure functions of their arguments. Accumulation order for
// each output element is fixed, so results are bit-reproducible for a given
// scalar type and build.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dna/tensor.hpp"

namespace dna {

struct ConvSpec {
  int kh = 1;
  int kw = 1;
  int in_channels = 1;
  int out_channels = 1;
  int stride = 1;
  int ph = 0;
  int pw = 0;
  bool has_bias = true;

  /// Stride-1 convolution whose zero padding preserves spatial size (odd kernels).
  static ConvSpec same(int in, int out, int kh, int kw, bool bias = true) {
    return ConvSpec{kh, kw, in, out, 1, (kh - 1) / 2, (kw - 1) / 2, bias};
  }

  Shape weight_shape() const { return {out_channels, in_channels, kh, kw}; }

  int out_h(int h) const { return (h + 2 * ph - kh) / stride + 1; }
  int out_w(int w) const { return (w + 2 * pw - kw) / stride + 1; }

  void validate() const {
    if (kh < 1 || kw < 1 || stride < 1 || ph < 0 || pw < 0 || in_channels < 1 || out_channels < 1)
      throw ShapeError("invalid conv spec");
  }

  Shape output_shape(const Shape& in) const {
    validate();
    if (in.c != in_channels)
      throw ShapeError("conv expects " + std::to_string(in_channels) + " input channels, got " +
                       in.str());
    if (in.h + 2 * ph < kh || in.w + 2 * pw < kw)
      throw ShapeError("conv kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                       " larger than padded input " + in.str());
    return {in.n, out_channels, out_h(in.h), out_w(in.w)};
  }

  /// Multiply-adds for one forward pass over an input of the given shape.
  std::int64_t multiply_adds(const Shape& in) const {
    const Shape out = output_shape(in);
    return std::int64_t(out.n) * out.h * out.w * out_channels * in_channels * kh * kw;
  }

  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && ph == 0 && pw == 0; }
};

namespace detail {

template <typename S>
using ColMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Unfolds one image (C, H, W) into a (out_h*out_w) x (C*kh*kw) column-major
// matrix; column (c, i, j) holds the input plane shifted by kernel tap (i, j).
template <typename S>
void im2col(const S* image, int channels, int h, int w, const ConvSpec& s, ColMatrix<S>& cols) {
  const int oh = s.out_h(h), ow = s.out_w(w);
  cols.resize(Index(oh) * ow, Index(channels) * s.kh * s.kw);
  Index col = 0;
  for (int c = 0; c < channels; ++c) {
    const S* plane = image + Index(c) * h * w;
    for (int i = 0; i < s.kh; ++i) {
      for (int j = 0; j < s.kw; ++j, ++col) {
        S* dst = cols.col(col).data();
        for (int y = 0; y < oh; ++y) {
          const int iy = y * s.stride - s.ph + i;
          S* row = dst + Index(y) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + ow, S(0));
            continue;
          }
          const S* src = plane + Index(iy) * w;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * s.stride - s.pw + j;
            row[x] = (ix >= 0 && ix < w) ? src[ix] : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const ColMatrix<S>& cols, int channels, int h, int w, const ConvSpec& s, S* image) {
  const int oh = s.out_h(h), ow = s.out_w(w);
  Index col = 0;
  for (int c = 0; c < channels; ++c) {
    S* plane = image + Index(c) * h * w;
    for (int i = 0; i < s.kh; ++i) {
      for (int j = 0; j < s.kw; ++j, ++col) {
        const S* src = cols.col(col).data();
        for (int y = 0; y < oh; ++y) {
          const int iy = y * s.stride - s.ph + i;
          if (iy < 0 || iy >= h) continue;
          S* dst = plane + Index(iy) * w;
          const S* row = src + Index(y) * ow;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * s.stride - s.pw + j;
            if (ix >= 0 && ix < w) dst[ix] += row[x];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D cross-correlation (no kernel flip), computed as im2col followed by one
/// GEMM per batch item. `weights` has shape (out_c, in_c, kh, kw); `bias` has
/// out_c entries, or is empty when the spec has no bias.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const ConvSpec& spec, const Tensor<S>& weights,
                 const Eigen::Matrix<S, Eigen::Dynamic, 1>& bias) {
  const Shape out_shape = spec.output_shape(input.shape());
  if (weights.shape() != spec.weight_shape())
    throw ShapeError("conv weights " + weights.shape().str() + ", expected " +
                     spec.weight_shape().str());
  if (spec.has_bias && bias.size() != spec.out_channels)
    throw ShapeError("conv bias has " + std::to_string(bias.size()) + " entries, expected " +
                     std::to_string(spec.out_channels));
  require_finite(input, "conv2d");

  const Shape& in = input.shape();
  const Index k = Index(in.c) * spec.kh * spec.kw;
  const Index p = out_shape.plane();
  Eigen::Map<const detail::ColMatrix<S>> wm(weights.data(), k, spec.out_channels);

  Tensor<S> out(out_shape);
  detail::ColMatrix<S> cols;
  for (int n = 0; n < in.n; ++n) {
    Eigen::Map<detail::ColMatrix<S>> om(out.channel(n, 0), p, spec.out_channels);
    if (spec.is_pointwise()) {
      Eigen::Map<const detail::ColMatrix<S>> xm(input.channel(n, 0), p, in.c);
      om.noalias() = xm * wm;
    } else {
      detail::im2col(input.channel(n, 0), in.c, in.h, in.w, spec, cols);
      om.noalias() = cols * wm;
    }
    if (spec.has_bias) om.rowwise() += bias.transpose();
  }
  return out;
}

template <typename S>
struct ConvGrads {
  Tensor<S> input;  // empty when not requested
  Tensor<S> weights;
  Eigen::Matrix<S, Eigen::Dynamic, 1> bias;
};

template <typename S>
ConvGrads<S> conv2d_backward(const Tensor<S>& input, const ConvSpec& spec, const Tensor<S>& weights,
                             const Tensor<S>& grad_out, bool need_input_grad = true) {
  const Shape out_shape = spec.output_shape(input.shape());
  if (grad_out.shape() != out_shape)
    throw ShapeError("conv upstream gradient " + grad_out.shape().str() + ", expected " +
                     out_shape.str());
  const Shape& in = input.shape();
  const Index k = Index(in.c) * spec.kh * spec.kw;
  const Index p = out_shape.plane();
  Eigen::Map<const detail::ColMatrix<S>> wm(weights.data(), k, spec.out_channels);

  ConvGrads<S> g;
  g.weights = Tensor<S>(spec.weight_shape());
  Eigen::Map<detail::ColMatrix<S>> gw(g.weights.data(), k, spec.out_channels);
  g.bias = Eigen::Matrix<S, Eigen::Dynamic, 1>::Zero(spec.has_bias ? spec.out_channels : 0);
  if (need_input_grad) g.input = Tensor<S>(in);

  detail::ColMatrix<S> cols;
  for (int n = 0; n < in.n; ++n) {
    Eigen::Map<const detail::ColMatrix<S>> go(grad_out.channel(n, 0), p, spec.out_channels);
    if (spec.has_bias) g.bias += go.colwise().sum().transpose();
    if (spec.is_pointwise()) {
      Eigen::Map<const detail::ColMatrix<S>> xm(input.channel(n, 0), p, in.c);
      gw.noalias() += xm.transpose() * go;
      if (need_input_grad) {
        Eigen::Map<detail::ColMatrix<S>> gx(g.input.channel(n, 0), p, in.c);
        gx.noalias() = go * wm.transpose();
      }
    } else {
      detail::im2col(input.channel(n, 0), in.c, in.h, in.w, spec, cols);
      gw.noalias() += cols.transpose() * go;
      if (need_input_grad) {
        cols.noalias() = go * wm.transpose();
        detail::col2im_add(cols, in.c, in.h, in.w, spec, g.input.channel(n, 0));
      }
    }
  }
  return g;
}

/// Asymmetric pair: a 1 x n convolution followed by an n x 1 convolution, both
/// size-preserving. `row_weights` is (mid, in, 1, n) and `col_weights` is (out, mid, n, 1).
template <typename S>
Tensor<S> separable_conv(const Tensor<S>& input, const Tensor<S>& row_weights,
                         const Eigen::Matrix<S, Eigen::Dynamic, 1>& row_bias,
                         const Tensor<S>& col_weights,
                         const Eigen::Matrix<S, Eigen::Dynamic, 1>& col_bias) {
  const int n = row_weights.shape().w;
  if (n % 2 == 0) throw ShapeError("asymmetric kernel length must be odd, got " + std::to_string(n));
  if (row_weights.shape().h != 1 || col_weights.shape().h != n || col_weights.shape().w != 1)
    throw ShapeError("asymmetric pair expects 1x" + std::to_string(n) + " then " +
                     std::to_string(n) + "x1 kernels");
  const ConvSpec row = ConvSpec::same(row_weights.shape().c, row_weights.shape().n, 1, n,
                                      row_bias.size() > 0);
  const ConvSpec col = ConvSpec::same(col_weights.shape().c, col_weights.shape().n, n, 1,
                                      col_bias.size() > 0);
  return conv2d(conv2d(input, row, row_weights, row_bias), col, col_weights, col_bias);
}

template <typename S>
struct PoolResult {
  Tensor<S> output;
  std::vector<std::int64_t> argmax;  // flat input index of each output element
};

/// 2x2 stride-2 max pooling. Odd heights/widths are handled by replicating the
/// last row/column, so the output is ceil(h/2) x ceil(w/2). Ties resolve to the
/// first window position in row-major order.
template <typename S>
PoolResult<S> maxpool2(const Tensor<S>& input) {
  const Shape& in = input.shape();
  if (in.h < 1 || in.w < 1) throw ShapeError("maxpool on empty spatial extent " + in.str());
  require_finite(input, "maxpool2");
  const Shape out_shape{in.n, in.c, (in.h + 1) / 2, (in.w + 1) / 2};
  PoolResult<S> r{Tensor<S>(out_shape), std::vector<std::int64_t>(out_shape.size())};
  Index o = 0;
  for (int n = 0; n < in.n; ++n) {
    for (int c = 0; c < in.c; ++c) {
      const Index base = input.offset(n, c, 0, 0);
      for (int y = 0; y < out_shape.h; ++y) {
        for (int x = 0; x < out_shape.w; ++x, ++o) {
          Index best = -1;
          S best_v = S(0);
          for (int dy = 0; dy < 2; ++dy) {
            const int iy = std::min(2 * y + dy, in.h - 1);
            for (int dx = 0; dx < 2; ++dx) {
              const int ix = std::min(2 * x + dx, in.w - 1);
              const Index idx = base + Index(iy) * in.w + ix;
              if (best < 0 || input[idx] > best_v) {
                best = idx;
                best_v = input[idx];
              }
            }
          }
          r.output[o] = best_v;
          r.argmax[o] = best;
        }
      }
    }
  }
  return r;
}

template <typename S>
Tensor<S> maxpool2_backward(const Shape& input_shape, std::span<const std::int64_t> argmax,
                            const Tensor<S>& grad_out) {
  if (Index(argmax.size()) != grad_out.size())
    throw ShapeError("maxpool backward: argmax/gradient size mismatch");
  Tensor<S> g(input_shape);
  for (Index o = 0; o < grad_out.size(); ++o) g[argmax[o]] += grad_out[o];
  return g;
}

/// Factors accepted by the fixed bilinear upsampler.
inline bool is_supported_upsample_factor(int f) {
  return f == 2 || f == 4 || f == 8 || f == 16 || f == 32;
}

/// 1-D profile of the frozen bilinear kernel for factor f: length 2f,
/// w(i) = 1 - |i + 0.5 - f| / f. The 2-D kernel is its outer product.
template <typename S>
Eigen::Matrix<S, Eigen::Dynamic, 1> bilinear_kernel_1d(int f) {
  if (!is_supported_upsample_factor(f))
    throw ShapeError("unsupported upsample factor " + std::to_string(f));
  Eigen::Matrix<S, Eigen::Dynamic, 1> k(2 * f);
  for (int i = 0; i < 2 * f; ++i) k[i] = S(1) - std::abs(S(i) + S(0.5) - S(f)) / S(f);
  return k;
}

namespace detail {

// Dense (in*f) x in matrix of the stride-f transposed convolution with the
// bilinear kernel and padding f/2, along one axis.
template <typename S>
ColMatrix<S> upsample_matrix(int in, int f) {
  const auto k = bilinear_kernel_1d<S>(f);
  const int pad = f / 2;
  ColMatrix<S> u = ColMatrix<S>::Zero(Index(in) * f, in);
  for (int i = 0; i < in; ++i)
    for (int t = 0; t < 2 * f; ++t) {
      const int o = i * f - pad + t;
      if (o >= 0 && o < in * f) u(o, i) = k[t];
    }
  return u;
}

}  // namespace detail

/// Upsampling by a power-of-two factor as a transposed convolution with the
/// frozen bilinear kernel (stride f, padding f/2), applied per channel. The
/// kernel is separable, so each plane is computed as U_h * X * U_w^T.
template <typename S>
Tensor<S> upsample_bilinear(const Tensor<S>& input, int factor) {
  if (!is_supported_upsample_factor(factor))
    throw ShapeError("unsupported upsample factor " + std::to_string(factor));
  const Shape& in = input.shape();
  const Shape out_shape{in.n, in.c, in.h * factor, in.w * factor};
  const auto uh = detail::upsample_matrix<S>(in.h, factor);
  const auto uw = detail::upsample_matrix<S>(in.w, factor);
  Tensor<S> out(out_shape);
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < in.c; ++c) out.plane(n, c).noalias() = uh * input.plane(n, c) * uw.transpose();
  return out;
}

/// Adjoint of upsample_bilinear: a stride-f correlation with the same kernel.
template <typename S>
Tensor<S> upsample_bilinear_backward(const Shape& input_shape, int factor, const Tensor<S>& grad_out) {
  const Shape expect{input_shape.n, input_shape.c, input_shape.h * factor, input_shape.w * factor};
  if (grad_out.shape() != expect)
    throw ShapeError("upsample backward: gradient " + grad_out.shape().str() + ", expected " +
                     expect.str());
  const auto uh = detail::upsample_matrix<S>(input_shape.h, factor);
  const auto uw = detail::upsample_matrix<S>(input_shape.w, factor);
  Tensor<S> g(input_shape);
  for (int n = 0; n < input_shape.n; ++n)
    for (int c = 0; c < input_shape.c; ++c)
      g.plane(n, c).noalias() = uh.transpose() * grad_out.plane(n, c) * uw;
  return g;
}

enum class Activation { Relu, Sigmoid };

template <typename S>
S sigmoid(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S>
Tensor<S> activation(const Tensor<S>& input, Activation kind) {
  Tensor<S> out(input.shape());
  if (kind == Activation::Relu)
    out.values() = input.values().cwiseMax(S(0));
  else
    out.values() = input.values().unaryExpr([](S v) { return sigmoid(v); });
  return out;
}

/// Gradient through an activation, expressed in terms of its forward output.
template <typename S>
Tensor<S> activation_backward(const Tensor<S>& output, Activation kind, const Tensor<S>& grad_out) {
  if (output.shape() != grad_out.shape()) throw ShapeError("activation backward shape mismatch");
  Tensor<S> g(output.shape());
  if (kind == Activation::Relu)
    g.values() = (output.values().array() > S(0)).select(grad_out.values(), S(0));
  else
    g.values() = grad_out.values().array() * output.values().array() * (S(1) - output.values().array());
  return g;
}

template <typename S>
Tensor<S> concat_channels(std::span<const Tensor<S>* const> inputs) {
  if (inputs.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = inputs.front()->shape();
  int channels = 0;
  for (const Tensor<S>* t : inputs) {
    const Shape& s = t->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w)
      throw ShapeError("concat spatial mismatch: " + s.str() + " vs " + first.str());
    channels += s.c;
  }
  Tensor<S> out({first.n, channels, first.h, first.w});
  for (int n = 0; n < first.n; ++n) {
    S* dst = out.channel(n, 0);
    for (const Tensor<S>* t : inputs) {
      const Index len = Index(t->shape().c) * first.plane();
      std::copy_n(t->channel(n, 0), len, dst);
      dst += len;
    }
  }
  return out;
}

template <typename S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& inputs) {
  std::vector<const Tensor<S>*> ptrs;
  for (const auto& t : inputs) ptrs.push_back(&t);
  return concat_channels<S>(std::span<const Tensor<S>* const>(ptrs));
}

/// Channels [first, first + count) of `input`; the backward of concat.
template <typename S>
Tensor<S> slice_channels(const Tensor<S>& input, int first, int count) {
  const Shape& s = input.shape();
  if (first < 0 || count < 0 || first + count > s.c)
    throw ShapeError("channel slice out of range for " + s.str());
  Tensor<S> out({s.n, count, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    std::copy_n(input.channel(n, first), Index(count) * s.plane(), out.channel(n, 0));
  return out;
}

/// Centered spatial crop to (h, w). Identity when the sizes already match.
template <typename S>
Tensor<S> center_crop(const Tensor<S>& input, int h, int w) {
  const Shape& s = input.shape();
  if (h > s.h || w > s.w) throw ShapeError("crop target larger than input " + s.str());
  if (h == s.h && w == s.w) return input;
  const int oy = (s.h - h) / 2, ox = (s.w - w) / 2;
  Tensor<S> out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) out.plane(n, c) = input.plane(n, c).block(oy, ox, h, w);
  return out;
}

template <typename S>
Tensor<S> center_crop_backward(const Shape& input_shape, const Tensor<S>& grad_out) {
  const Shape& g = grad_out.shape();
  if (g.h == input_shape.h && g.w == input_shape.w) return grad_out;
  const int oy = (input_shape.h - g.h) / 2, ox = (input_shape.w - g.w) / 2;
  Tensor<S> out(input_shape);
  for (int n = 0; n < g.n; ++n)
    for (int c = 0; c < g.c; ++c) out.plane(n, c).block(oy, ox, g.h, g.w) = grad_out.plane(n, c);
  return out;
}

}  // namespace dna
