#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace meel {

using Vector = std::vector<double>;

// Norms at or below this are rejected instead of normalized.
inline constexpr double kNormEpsilon = 1e-12;

// Logit value marking an entry excluded from the softmax partition sum.
inline constexpr double kMaskedLogit = -std::numeric_limits<double>::infinity();

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> x);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Result of normalizing x to unit length. backward() pulls an output
// gradient back through the Jacobian (I - u u^T) / ||x||.
struct Normalized {
  Vector unit;
  double norm = 0.0;

  Vector backward(std::span<const double> grad_unit) const;
};

Normalized l2_normalize_with_grad(std::span<const double> x);
Vector l2_normalize(std::span<const double> x);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Entry (i, j) is the cosine similarity of row i of a and row j of b.
Matrix similarity_matrix(const Matrix& a, const Matrix& b);

struct CrossEntropy {
  double loss = 0.0;
  Vector grad;  // d loss / d logits
};

// -log softmax(logits)[label]. Entries equal to kMaskedLogit are excluded
// from the partition sum and get zero gradient.
CrossEntropy softmax_cross_entropy_with_grad(std::span<const double> logits, std::size_t label);

bool all_finite(std::span<const double> x);

}  // namespace meel
