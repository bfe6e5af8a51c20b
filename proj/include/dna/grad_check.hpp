#pragma once

// Central finite-difference checking of analytic gradients.
//
// A layer under test is wrapped in a GradOp: forward maps an input tensor to an
// output, backward maps (input, upstream gradient) to the input gradient and
// leaves parameter gradients in grads(). The scalar probe loss is
// L(x) = <r, forward(x)> with a fixed random r, so the upstream gradient is r.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "dna/layers.hpp"
#include "dna/rng.hpp"

namespace dna {

class GradOp {
 public:
  virtual ~GradOp() = default;
  virtual Tensor<double> forward(const Tensor<double>& x) = 0;
  virtual Tensor<double> backward(const Tensor<double>& x, const Tensor<double>& grad_out) = 0;
  virtual std::vector<Tensor<double>*> params() { return {}; }
  virtual std::vector<Tensor<double>*> grads() { return {}; }
};

struct GradCheckResult {
  double input_error = 0.0;
  double param_error = 0.0;
  double max() const { return std::max(input_error, param_error); }
};

/// Error between an analytic and a numeric derivative, scaled by
/// max(|analytic|, |numeric|, 1): relative for O(1) and larger gradients,
/// absolute below that (the Caffe GradientChecker convention).
inline double gradient_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1.0});
  return std::abs(analytic - numeric) / scale;
}

/// Worst error of `analytic` against central differences of `loss` with respect
/// to every entry of `x`. `x` is perturbed in place and restored.
inline double check_entries(const std::function<double()>& loss, Tensor<double>& x,
                            const Tensor<double>& analytic, double eps) {
  if (analytic.shape() != x.shape()) throw ShapeError("grad check: gradient shape mismatch");
  double worst = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = loss();
    x[i] = saved - eps;
    const double down = loss();
    x[i] = saved;
    worst = std::max(worst, gradient_error(analytic[i], (up - down) / (2.0 * eps)));
  }
  return worst;
}

inline Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                                    double hi = 1.0) {
  CounterRng rng(seed);
  Tensor<double> t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline GradCheckResult grad_check(GradOp& op, Tensor<double> input, double eps = 1e-6,
                                  std::uint64_t seed = 17) {
  const Tensor<double> probe = random_tensor(op.forward(input).shape(), seed);
  auto loss = [&] { return op.forward(input).values().dot(probe.values()); };

  GradCheckResult r;
  const Tensor<double> gx = op.backward(input, probe);
  std::vector<Tensor<double>> analytic;
  for (Tensor<double>* g : op.grads()) analytic.push_back(*g);

  r.input_error = check_entries(loss, input, gx, eps);
  const auto params = op.params();
  for (std::size_t k = 0; k < params.size(); ++k)
    r.param_error = std::max(r.param_error, check_entries(loss, *params[k], analytic[k], eps));
  return r;
}

// Adapters for the primitives in layers.hpp.

class ConvOp : public GradOp {
 public:
  ConvOp(const ConvSpec& spec, std::uint64_t seed, double scale = 0.5)
      : spec_(spec),
        weights_(random_tensor(spec.weight_shape(), seed, -scale, scale)),
        bias_(random_tensor({spec.has_bias ? spec.out_channels : 0, 1, 1, 1}, seed + 1, -scale, scale)),
        gw_(spec.weight_shape()),
        gb_(bias_.shape()) {}

  Tensor<double> forward(const Tensor<double>& x) override {
    return conv2d(x, spec_, weights_, bias_.values());
  }
  Tensor<double> backward(const Tensor<double>& x, const Tensor<double>& g) override {
    auto r = conv2d_backward(x, spec_, weights_, g);
    gw_ = r.weights;
    gb_ = Tensor<double>(bias_.shape(), r.bias);
    return r.input;
  }
  std::vector<Tensor<double>*> params() override {
    if (spec_.has_bias) return {&weights_, &bias_};
    return {&weights_};
  }
  std::vector<Tensor<double>*> grads() override {
    if (spec_.has_bias) return {&gw_, &gb_};
    return {&gw_};
  }

  Tensor<double>& weights() { return weights_; }
  Tensor<double>& bias() { return bias_; }

 private:
  ConvSpec spec_;
  Tensor<double> weights_, bias_, gw_, gb_;
};

class SeparableOp : public GradOp {
 public:
  SeparableOp(int in, int mid, int out, int n, std::uint64_t seed)
      : row_(ConvSpec::same(in, mid, 1, n), seed), col_(ConvSpec::same(mid, out, n, 1), seed + 7) {}

  Tensor<double> forward(const Tensor<double>& x) override {
    return separable_conv(x, row_.weights(), row_.bias().values(), col_.weights(), col_.bias().values());
  }
  Tensor<double> backward(const Tensor<double>& x, const Tensor<double>& g) override {
    const Tensor<double> mid = row_.forward(x);
    return row_.backward(x, col_.backward(mid, g));
  }
  std::vector<Tensor<double>*> params() override { return concat(row_.params(), col_.params()); }
  std::vector<Tensor<double>*> grads() override { return concat(row_.grads(), col_.grads()); }

 private:
  static std::vector<Tensor<double>*> concat(std::vector<Tensor<double>*> a,
                                             const std::vector<Tensor<double>*>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  ConvOp row_, col_;
};

class ActivationOp : public GradOp {
 public:
  explicit ActivationOp(Activation kind) : kind_(kind) {}
  Tensor<double> forward(const Tensor<double>& x) override { return activation(x, kind_); }
  Tensor<double> backward(const Tensor<double>& x, const Tensor<double>& g) override {
    return activation_backward(activation(x, kind_), kind_, g);
  }

 private:
  Activation kind_;
};

class MaxPoolOp : public GradOp {
 public:
  Tensor<double> forward(const Tensor<double>& x) override { return maxpool2(x).output; }
  Tensor<double> backward(const Tensor<double>& x, const Tensor<double>& g) override {
    const auto r = maxpool2(x);
    return maxpool2_backward<double>(x.shape(), r.argmax, g);
  }
};

class UpsampleOp : public GradOp {
 public:
  explicit UpsampleOp(int factor) : factor_(factor) {}
  Tensor<double> forward(const Tensor<double>& x) override { return upsample_bilinear(x, factor_); }
  Tensor<double> backward(const Tensor<double>& x, const Tensor<double>& g) override {
    return upsample_bilinear_backward(x.shape(), factor_, g);
  }

 private:
  int factor_;
};

/// Concatenates the input with a second (parameter) tensor along channels.
class ConcatOp : public GradOp {
 public:
  ConcatOp(const Shape& other, std::uint64_t seed) : other_(random_tensor(other, seed)), g_(other) {}
  Tensor<double> forward(const Tensor<double>& x) override {
    const Tensor<double>* parts[] = {&x, &other_};
    return concat_channels<double>(parts);
  }
  Tensor<double> backward(const Tensor<double>& x, const Tensor<double>& g) override {
    g_ = slice_channels(g, x.shape().c, other_.shape().c);
    return slice_channels(g, 0, x.shape().c);
  }
  std::vector<Tensor<double>*> params() override { return {&other_}; }
  std::vector<Tensor<double>*> grads() override { return {&g_}; }

 private:
  Tensor<double> other_, g_;
};

class SequentialOp : public GradOp {
 public:
  SequentialOp& add(std::unique_ptr<GradOp> op) {
    ops_.push_back(std::move(op));
    return *this;
  }

  Tensor<double> forward(const Tensor<double>& x) override {
    Tensor<double> y = x;
    for (auto& op : ops_) y = op->forward(y);
    return y;
  }
  Tensor<double> backward(const Tensor<double>& x, const Tensor<double>& g) override {
    std::vector<Tensor<double>> inputs{x};
    for (std::size_t i = 0; i + 1 < ops_.size(); ++i) inputs.push_back(ops_[i]->forward(inputs.back()));
    Tensor<double> grad = g;
    for (std::size_t i = ops_.size(); i-- > 0;) grad = ops_[i]->backward(inputs[i], grad);
    return grad;
  }
  std::vector<Tensor<double>*> params() override {
    std::vector<Tensor<double>*> all;
    for (auto& op : ops_) for (auto* p : op->params()) all.push_back(p);
    return all;
  }
  std::vector<Tensor<double>*> grads() override {
    std::vector<Tensor<double>*> all;
    for (auto& op : ops_) for (auto* p : op->grads()) all.push_back(p);
    return all;
  }

 private:
  std::vector<std::unique_ptr<GradOp>> ops_;
};

}  // namespace dna
