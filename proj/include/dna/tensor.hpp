#pragma once

#include <Eigen/Core>

#include <initializer_list>
#include <ostream>
#include <string>
#include <vector>

#include "dna/errors.hpp"

namespace dna {

using Index = Eigen::Index;

/// NCHW extent of a dense tensor.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  constexpr Index size() const { return Index(n) * c * h * w; }
  constexpr Index plane() const { return Index(h) * w; }
  constexpr bool operator==(const Shape&) const = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << s.str(); }

/// Dense row-major (n, c, h, w) tensor. Storage is a contiguous Eigen vector, so
/// every channel plane is a contiguous h*w block and whole tensors can be handed
/// to Eigen expressions through `values()`.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstPlaneMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;

  explicit Tensor(const Shape& shape) : shape_(checked(shape)), data_(Vector::Zero(shape.size())) {}

  Tensor(const Shape& shape, Scalar fill)
      : shape_(checked(shape)), data_(Vector::Constant(shape.size(), fill)) {}

  Tensor(const Shape& shape, std::initializer_list<Scalar> values) : Tensor(shape) {
    if (Index(values.size()) != shape.size())
      throw ShapeError("tensor " + shape.str() + " given " + std::to_string(values.size()) +
                       " values");
    Index i = 0;
    for (Scalar v : values) data_[i++] = v;
  }

  Tensor(const Shape& shape, const std::vector<Scalar>& values)
      : Tensor(shape, Vector(Eigen::Map<const Vector>(values.data(), Index(values.size())))) {}

  Tensor(const Shape& shape, Vector values) : shape_(checked(shape)), data_(std::move(values)) {
    if (data_.size() != shape.size())
      throw ShapeError("tensor " + shape.str() + " given " + std::to_string(data_.size()) +
                       " values");
  }

  const Shape& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Vector& values() { return data_; }
  const Vector& values() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Index offset(int n, int c, int y, int x) const {
    return ((Index(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  Scalar& operator()(int n, int c, int y, int x) { return data_[offset(n, c, y, x)]; }
  Scalar operator()(int n, int c, int y, int x) const { return data_[offset(n, c, y, x)]; }

  Scalar* channel(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
  const Scalar* channel(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

  PlaneMap plane(int n, int c) { return PlaneMap(channel(n, c), shape_.h, shape_.w); }
  ConstPlaneMap plane(int n, int c) const { return ConstPlaneMap(channel(n, c), shape_.h, shape_.w); }

  bool all_finite() const { return data_.allFinite(); }

  void set_zero() { data_.setZero(); }

  Tensor reshaped(const Shape& shape) const { return Tensor(shape, data_); }

  template <typename To>
  Tensor<To> cast() const {
    return Tensor<To>(shape_, data_.template cast<To>().eval());
  }

 private:
  static const Shape& checked(const Shape& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw ShapeError("negative extent in " + s.str());
    return s;
  }

  Shape shape_{0, 0, 0, 0};
  Vector data_;
};

template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite value in input");
}

}  // namespace dna
