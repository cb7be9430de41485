#include "meel/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "meel/error.hpp"

namespace meel {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw Error(ErrorCode::kDimensionMismatch,
                "matrix of " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                    std::to_string(values_.size()) + " values");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "dot: length " + std::to_string(a.size()) +
                                                   " vs " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> x) { return std::sqrt(dot(x, x)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kDimensionMismatch, "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vector Normalized::backward(std::span<const double> grad_unit) const {
  if (grad_unit.size() != unit.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "normalize backward: gradient length mismatch");
  }
  const double proj = dot(unit, grad_unit);
  Vector grad(unit.size());
  for (std::size_t i = 0; i < unit.size(); ++i) grad[i] = (grad_unit[i] - proj * unit[i]) / norm;
  return grad;
}

Normalized l2_normalize_with_grad(std::span<const double> x) {
  if (x.empty()) throw Error(ErrorCode::kDegenerateInput, "normalize: empty vector");
  const double norm = l2_norm(x);
  if (!(norm > kNormEpsilon)) {
    throw Error(ErrorCode::kDegenerateInput, "normalize: norm " + std::to_string(norm) +
                                                 " is below epsilon");
  }
  Normalized out;
  out.norm = norm;
  out.unit.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.unit[i] = x[i] / norm;
  return out;
}

Vector l2_normalize(std::span<const double> x) { return l2_normalize_with_grad(x).unit; }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "cosine_similarity: length " +
                                                   std::to_string(a.size()) + " vs " +
                                                   std::to_string(b.size()));
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na > kNormEpsilon) || !(nb > kNormEpsilon)) {
    throw Error(ErrorCode::kDegenerateInput, "cosine_similarity: degenerate norm");
  }
  return dot(a, b) / (na * nb);
}

Matrix similarity_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "similarity_matrix: inner dimension " +
                                                   std::to_string(a.cols()) + " vs " +
                                                   std::to_string(b.cols()));
  }
  // Normalize once per row instead of once per pair.
  Matrix an(a.rows(), a.cols());
  Matrix bn(b.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto u = l2_normalize(a.row(i));
    std::copy(u.begin(), u.end(), an.row(i).begin());
  }
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const auto u = l2_normalize(b.row(j));
    std::copy(u.begin(), u.end(), bn.row(j).begin());
  }
  Matrix s(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) s(i, j) = dot(an.row(i), bn.row(j));
  }
  return s;
}

CrossEntropy softmax_cross_entropy_with_grad(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw Error(ErrorCode::kOutOfRange, "cross entropy: label " + std::to_string(label) +
                                            " out of range for " +
                                            std::to_string(logits.size()) + " logits");
  }
  if (logits[label] == kMaskedLogit) {
    throw Error(ErrorCode::kInvalidArgument, "cross entropy: label position is masked");
  }
  double max_logit = logits[label];
  for (double z : logits) {
    if (std::isnan(z) || z == std::numeric_limits<double>::infinity()) {
      throw Error(ErrorCode::kInvalidArgument, "cross entropy: non-finite logit");
    }
    if (z != kMaskedLogit) max_logit = std::max(max_logit, z);
  }
  double partition = 0.0;
  CrossEntropy out;
  out.grad.assign(logits.size(), 0.0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i] == kMaskedLogit) continue;
    out.grad[i] = std::exp(logits[i] - max_logit);
    partition += out.grad[i];
  }
  for (auto& g : out.grad) g /= partition;
  out.loss = std::log(partition) - (logits[label] - max_logit);
  out.grad[label] -= 1.0;
  // log(partition) >= the label term analytically; clamp rounding below zero.
  out.loss = std::max(out.loss, 0.0);
  return out;
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace meel
