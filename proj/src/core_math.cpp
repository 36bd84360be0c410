#include "protex/core_math.hpp"

#include <cmath>
#include <string>

#include "protex/errors.hpp"

namespace protex {

DistanceMatrix::DistanceMatrix(Matrix v) : values(std::move(v)) {
  mask = Mask::Constant(values.rows(), values.cols(), true);
}

DistanceMatrix::DistanceMatrix(Matrix v, Mask m) : values(std::move(v)), mask(std::move(m)) {
  if (mask.rows() != values.rows() || mask.cols() != values.cols()) {
    throw ShapeError("distance mask shape does not match values");
  }
}

std::size_t DistanceMatrix::active_in_row(Eigen::Index i) const {
  return static_cast<std::size_t>(mask.row(i).count());
}

namespace math {

DistanceMatrix squared_l2_distance_matrix(const Matrix& x, const Matrix& p) {
  if (x.cols() != p.cols()) {
    throw ShapeError("distance: inputs have " + std::to_string(x.cols()) +
                     " columns, prototypes have " + std::to_string(p.cols()));
  }
  if (x.rows() < 1 || p.rows() < 1) {
    throw ShapeError("distance: empty input or prototype set");
  }
  // Explicit differences rather than the |x|^2 - 2x.p + |p|^2 expansion so
  // that identical vectors give exactly zero.
  Matrix out(x.rows(), p.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
      out(i, j) = (x.row(i) - p.row(j)).squaredNorm();
    }
  }
  return DistanceMatrix(std::move(out));
}

namespace {

struct RowStats {
  double mean = 0.0;
  double inv_std = 1.0;
  std::size_t count = 0;
};

RowStats row_stats(const DistanceMatrix& d, Eigen::Index i, double epsilon) {
  RowStats s;
  double sum = 0.0;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    if (d.mask(i, j)) {
      sum += d.values(i, j);
      ++s.count;
    }
  }
  if (s.count == 0) {
    throw EmptySelectionError("instance_normalize: row " + std::to_string(i) + " has no active entries");
  }
  s.mean = sum / static_cast<double>(s.count);
  double var = 0.0;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    if (d.mask(i, j)) {
      const double c = d.values(i, j) - s.mean;
      var += c * c;
    }
  }
  var /= static_cast<double>(s.count);
  s.inv_std = 1.0 / std::sqrt(var + epsilon);
  return s;
}

}  // namespace

DistanceMatrix instance_normalize(const DistanceMatrix& d, double epsilon) {
  DistanceMatrix out = d;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const RowStats s = row_stats(d, i, epsilon);
    if (s.count == 1) continue;
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (d.mask(i, j)) out.values(i, j) = (d.values(i, j) - s.mean) * s.inv_std;
    }
  }
  return out;
}

Matrix instance_normalize_backward(const DistanceMatrix& raw, const Matrix& grad_out, double epsilon) {
  if (grad_out.rows() != raw.rows() || grad_out.cols() != raw.cols()) {
    throw ShapeError("instance_normalize_backward: gradient shape mismatch");
  }
  Matrix grad_in = Matrix::Zero(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const RowStats s = row_stats(raw, i, epsilon);
    if (s.count == 1) {
      for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        if (raw.mask(i, j)) grad_in(i, j) = grad_out(i, j);
      }
      continue;
    }
    // dx = inv_std * (g - mean(g) - y * mean(g * y)), y the normalized row.
    const double n = static_cast<double>(s.count);
    double g_mean = 0.0;
    double gy_mean = 0.0;
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      if (!raw.mask(i, j)) continue;
      const double y = (raw.values(i, j) - s.mean) * s.inv_std;
      g_mean += grad_out(i, j);
      gy_mean += grad_out(i, j) * y;
    }
    g_mean /= n;
    gy_mean /= n;
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      if (!raw.mask(i, j)) continue;
      const double y = (raw.values(i, j) - s.mean) * s.inv_std;
      grad_in(i, j) = s.inv_std * (grad_out(i, j) - g_mean - y * gy_mean);
    }
  }
  return grad_in;
}

std::pair<double, Eigen::Index> masked_min(const Eigen::Ref<const Eigen::RowVectorXd>& row,
                                           const Eigen::Ref<const Eigen::Array<bool, 1, Eigen::Dynamic>>& mask) {
  if (row.size() != mask.size()) throw ShapeError("masked_min: mask length mismatch");
  Eigen::Index best = -1;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (!mask(j)) continue;
    if (best < 0 || row(j) < row(best)) best = j;
  }
  if (best < 0) throw EmptySelectionError("masked_min: every entry is masked");
  return {row(best), best};
}

Vector softmax(const Eigen::Ref<const Vector>& logits) {
  const double shift = logits.maxCoeff();
  Vector e = (logits.array() - shift).exp().matrix();
  return e / e.sum();
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out.row(i) = softmax(logits.row(i).transpose()).transpose();
  }
  return out;
}

}  // namespace math
}  // namespace protex
