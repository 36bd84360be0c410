#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <utility>

namespace protex {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Pairwise distances between n examples (rows) and m prototypes (columns).
/// Entries whose mask bit is false do not take part in normalization or minima.
struct DistanceMatrix {
  Matrix values;
  Mask mask;

  DistanceMatrix() = default;
  explicit DistanceMatrix(Matrix v);
  DistanceMatrix(Matrix v, Mask m);

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  std::size_t active_in_row(Eigen::Index i) const;
};

namespace math {

inline constexpr double kDefaultNormEpsilon = 1e-5;

/// values(i, j) = ||x_i - p_j||^2 with an all-true mask.
DistanceMatrix squared_l2_distance_matrix(const Matrix& x, const Matrix& p);

/// Per-row standardization over the unmasked entries using the population
/// variance: (d - mean) / sqrt(var + epsilon). Rows with one active entry pass
/// through unchanged; masked entries are copied as-is.
DistanceMatrix instance_normalize(const DistanceMatrix& d, double epsilon = kDefaultNormEpsilon);

/// Vector-Jacobian product of instance_normalize. `grad_out` is dL/d(normalized);
/// the result is dL/d(raw) and is zero on masked entries.
Matrix instance_normalize_backward(const DistanceMatrix& raw, const Matrix& grad_out,
                                   double epsilon = kDefaultNormEpsilon);

/// Minimum over the entries whose mask bit is set; ties go to the lowest index.
std::pair<double, Eigen::Index> masked_min(const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                           const Eigen::Ref<const Eigen::Array<bool, 1, Eigen::Dynamic>>& mask);

Vector softmax(const Eigen::Ref<const Vector>& logits);

/// Row-wise softmax of an n x K logit matrix.
Matrix softmax_rows(const Matrix& logits);

}  // namespace math
}  // namespace protex
