#include "fan/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fan/errors.hpp"

namespace fan {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  if (!all_finite(values)) {
    throw NumericError(std::string(what) + " contains a non-finite entry");
  }
}

}  // namespace

Vector::Vector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw DimensionError("vector must have at least one entry");
  require_finite(values_, "vector");
}

Vector::Vector(std::initializer_list<double> values) : Vector(std::vector<double>(values)) {}

Vector Vector::zeros(std::size_t n) { return Vector(std::vector<double>(n, 0.0)); }

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows_ == 0 || cols_ == 0) throw DimensionError("matrix must be at least 1x1");
  if (values_.size() != rows_ * cols_) {
    throw DimensionError("matrix data has " + std::to_string(values_.size()) +
                         " entries, expected " + std::to_string(rows_ * cols_));
  }
  require_finite(values_, "matrix");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  if (rows_ == 0 || cols_ == 0) throw DimensionError("matrix must be at least 1x1");
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("ragged matrix literal");
    values_.insert(values_.end(), r.begin(), r.end());
  }
  require_finite(values_, "matrix");
}

Matrix Matrix::zeros(std::size_t rows, std::size_t cols) {
  return Matrix(rows, cols, std::vector<double>(rows * cols, 0.0));
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  std::vector<double> out;
  out.reserve(indices.size() * cols_);
  for (std::size_t idx : indices) {
    if (idx >= rows_) throw IndexError("row index " + std::to_string(idx) + " out of range");
    auto r = row(idx);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Matrix(indices.size(), cols_, std::move(out));
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
  return acc;
}

double dot(const Vector& a, const Vector& b) { return dot(a.span(), b.span()); }

Vector concat(const Vector& a, const Vector& b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  return Vector(std::move(out));
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax of empty logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - m);
    total += p[k];
  }
  for (double& v : p) v /= total;
  return p;
}

LossAndGrad softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw IndexError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - m);
  const double log_total = std::log(total);
  const double loss = log_total - (logits[label] - m);

  std::vector<double> grad(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) grad[k] = std::exp(logits[k] - m - log_total);
  grad[label] -= 1.0;
  if (!std::isfinite(loss)) throw NumericError("cross-entropy loss is not finite");
  return {std::max(loss, 0.0), Vector(std::move(grad))};
}

LossAndGrad softmax_cross_entropy(const Vector& logits, std::size_t label) {
  return softmax_cross_entropy(logits.span(), label);
}

Vector finite_diff_gradient(const LossFunction& loss_fn, const Vector& params, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite difference step must be positive");
  std::vector<double> grad(params.size());
  Vector probe = params;
  for (std::size_t j = 0; j < params.size(); ++j) {
    probe[j] = params[j] + eps;
    const double up = loss_fn(probe);
    probe[j] = params[j] - eps;
    const double down = loss_fn(probe);
    probe[j] = params[j];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("non-finite loss while probing coordinate " + std::to_string(j));
    }
    grad[j] = (up - down) / (2.0 * eps);
  }
  return Vector(std::move(grad));
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

}  // namespace fan
