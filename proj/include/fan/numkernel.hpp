#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace fan {

// Dense real vector. Never empty; entries are finite when constructed from
// external data (checked), and every library operation preserves that.
class Vector {
 public:
  explicit Vector(std::vector<double> values);
  Vector(std::initializer_list<double> values);

  static Vector zeros(std::size_t n);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> span() const { return values_; }
  std::span<double> span() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> values_;
};

// Row-major dense matrix with at least one row and one column.
class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix zeros(std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols_, cols_);
  }
  std::span<double> row(std::size_t r) {
    return std::span<double>(values_).subspan(r * cols_, cols_);
  }

  std::span<const double> span() const { return values_; }
  std::span<double> span() { return values_; }

  // New matrix made of the given rows, in the given order. Indices may repeat.
  Matrix select_rows(std::span<const std::size_t> indices) const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> values_;
};

bool all_finite(std::span<const double> values);

// Logistic function. Only ever exponentiates a non-positive argument.
double sigmoid(double x);

// Left-to-right accumulation, so dot(a, b) == dot(b, a) bit for bit.
double dot(std::span<const double> a, std::span<const double> b);
double dot(const Vector& a, const Vector& b);

Vector concat(const Vector& a, const Vector& b);

struct LossAndGrad {
  double loss;
  Vector grad;
};

// -log softmax(logits)[label] with max subtraction; grad = softmax - onehot.
LossAndGrad softmax_cross_entropy(std::span<const double> logits, std::size_t label);
LossAndGrad softmax_cross_entropy(const Vector& logits, std::size_t label);

// Probabilities, computed with the same stabilization as the loss.
std::vector<double> softmax(std::span<const double> logits);

using LossFunction = std::function<double(const Vector&)>;

// Central differences, one coordinate at a time. Throws NumericError if any
// probe evaluates to a non-finite loss.
Vector finite_diff_gradient(const LossFunction& loss_fn, const Vector& params, double eps);

// |a - b| / max(1e-8, |a| + |b|)
double relative_error(double a, double b);

}  // namespace fan
