#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tminer/common.hpp"

namespace tminer::nc {

// All engine values are rank-2, row-major. Scalars are [1 x 1], row vectors
// [1 x n], column vectors [n x 1].
struct Shape {
  int rows = 1;
  int cols = 1;

  int size() const { return rows * cols; }
  bool operator==(const Shape& o) const = default;

  std::string str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }
};

template <class Real>
using EigenMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using MatMap = Eigen::Map<EigenMat<Real>>;
template <class Real>
using ConstMatMap = Eigen::Map<const EigenMat<Real>>;

template <class Real>
struct Tensor {
  Shape shape;
  std::vector<Real> data;

  Tensor() = default;
  Tensor(Shape s, Real fill = Real(0)) : shape(s), data(static_cast<size_t>(s.size()), fill) {}
  Tensor(Shape s, std::vector<Real> d) : shape(s), data(std::move(d)) {
    if (static_cast<int>(data.size()) != shape.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape.str());
  }

  static Tensor zeros(int rows, int cols) { return Tensor(Shape{rows, cols}); }
  static Tensor scalar(Real v) { return Tensor(Shape{1, 1}, std::vector<Real>{v}); }
  static Tensor row(std::vector<Real> d) {
    int n = static_cast<int>(d.size());
    return Tensor(Shape{1, n}, std::move(d));
  }

  int rows() const { return shape.rows; }
  int cols() const { return shape.cols; }
  int size() const { return shape.size(); }

  Real& at(int r, int c) { return data[static_cast<size_t>(r) * shape.cols + c]; }
  Real at(int r, int c) const { return data[static_cast<size_t>(r) * shape.cols + c]; }

  MatMap<Real> mat() { return MatMap<Real>(data.data(), shape.rows, shape.cols); }
  ConstMatMap<Real> mat() const {
    return ConstMatMap<Real>(data.data(), shape.rows, shape.cols);
  }

  bool all_finite() const {
    for (Real v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

template <class Real>
inline const char* dtype_name() {
  if constexpr (sizeof(Real) == 4)
    return "f32";
  else
    return "f64";
}

}  // namespace tminer::nc
