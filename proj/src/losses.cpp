#include "protex/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "protex/errors.hpp"

namespace protex {

GradientSet GradientSet::zeros_like(const PrototypeHead& head) {
  return GradientSet{Matrix::Zero(head.projection.rows(), head.projection.cols()),
                     Matrix::Zero(head.prototypes.rows(), head.prototypes.cols()),
                     Matrix::Zero(head.linear_weights.rows(), head.linear_weights.cols())};
}

double GradientSet::max_abs() const {
  return std::max({d_projection.cwiseAbs().maxCoeff(), d_prototypes.cwiseAbs().maxCoeff(),
                   d_linear.cwiseAbs().maxCoeff()});
}

LossSpec LossSpec::joint(const TrainConfig& c) {
  LossSpec s;
  s.phase = Phase::Joint;
  s.lambda1 = c.lambda1;
  s.lambda2 = c.lambda2;
  return s;
}

LossSpec LossSpec::prototype_only(int cls) {
  LossSpec s;
  s.phase = Phase::PrototypeOnly;
  s.target_class = cls;
  return s;
}

LossSpec LossSpec::classifier(const TrainConfig& c, int cls) {
  LossSpec s;
  s.phase = Phase::Classifier;
  s.target_class = cls;
  s.lambda = c.lambda_interleaved;
  return s;
}

namespace {

void check_labels(Eigen::Index n, const std::vector<int>& labels, Eigen::Index num_classes) {
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw ShapeError("expected " + std::to_string(n) + " labels, got " + std::to_string(labels.size()));
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw LabelError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

// Column j's argmin row, or -1 when the column has no active entry.
Eigen::Index column_argmin(const DistanceMatrix& d, Eigen::Index j) {
  Eigen::Index best = -1;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    if (!d.mask(i, j)) continue;
    if (best < 0 || d.values(i, j) < d.values(best, j)) best = i;
  }
  return best;
}

DistanceMatrix maybe_normalize(const PrototypeHead& head, const DistanceMatrix& d) {
  return head.normalize_distances ? math::instance_normalize(d, head.epsilon) : d;
}

Matrix maybe_normalize_backward(const PrototypeHead& head, const DistanceMatrix& raw, const Matrix& g) {
  return head.normalize_distances ? math::instance_normalize_backward(raw, g, head.epsilon) : g;
}

}  // namespace

double cross_entropy_loss(const Matrix& probabilities, const std::vector<int>& labels) {
  check_labels(probabilities.rows(), labels, probabilities.cols());
  if (labels.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = probabilities(static_cast<Eigen::Index>(i), labels[i]);
    sum -= std::log(std::max(p, kLogFloor));
  }
  return sum / static_cast<double>(labels.size());
}

double loss_p1(const DistanceMatrix& d) {
  double sum = 0.0;
  std::size_t used = 0;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    const Eigen::Index i = column_argmin(d, j);
    if (i < 0) continue;
    sum += d.values(i, j);
    ++used;
  }
  if (used == 0) throw EmptySelectionError("loss_p1: no prototype column has an active entry");
  return sum / static_cast<double>(used);
}

double loss_p2(const DistanceMatrix& d) {
  if (d.rows() == 0) throw EmptySelectionError("loss_p2: no examples");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    sum += math::masked_min(d.values.row(i), d.mask.row(i)).first;
  }
  return sum / static_cast<double>(d.rows());
}

Matrix loss_p1_grad(const DistanceMatrix& d) {
  Matrix g = Matrix::Zero(d.rows(), d.cols());
  std::vector<std::pair<Eigen::Index, Eigen::Index>> hits;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    const Eigen::Index i = column_argmin(d, j);
    if (i >= 0) hits.emplace_back(i, j);
  }
  if (hits.empty()) throw EmptySelectionError("loss_p1: no prototype column has an active entry");
  const double w = 1.0 / static_cast<double>(hits.size());
  for (auto [i, j] : hits) g(i, j) += w;
  return g;
}

Matrix loss_p2_grad(const DistanceMatrix& d) {
  if (d.rows() == 0) throw EmptySelectionError("loss_p2: no examples");
  Matrix g = Matrix::Zero(d.rows(), d.cols());
  const double w = 1.0 / static_cast<double>(d.rows());
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    g(i, math::masked_min(d.values.row(i), d.mask.row(i)).second) += w;
  }
  return g;
}

LossBreakdown total_loss(double ce, double p1, double p2, double lambda1, double lambda2) {
  return LossBreakdown{ce, p1, p2, ce + lambda1 * p1 + lambda2 * p2, lambda1, lambda2};
}

DistanceMatrix class_restricted(const DistanceMatrix& raw, const std::vector<int>& labels,
                                const std::vector<int>& proto_class, int cls, std::vector<Eigen::Index>& rows) {
  if (static_cast<Eigen::Index>(proto_class.size()) != raw.cols()) {
    throw ShapeError("class_restricted: prototype class list length mismatch");
  }
  rows.clear();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == cls) rows.push_back(static_cast<Eigen::Index>(i));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Matrix values(n, raw.cols());
  Mask mask(n, raw.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    values.row(r) = raw.values.row(rows[static_cast<std::size_t>(r)]);
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      mask(r, j) = raw.mask(rows[static_cast<std::size_t>(r)], j) && proto_class[static_cast<std::size_t>(j)] == cls;
    }
  }
  return DistanceMatrix(std::move(values), std::move(mask));
}

LossBreakdown evaluate_loss(const PrototypeHead& head, const Matrix& x, const std::vector<int>& labels,
                            const LossSpec& spec) {
  check_labels(x.rows(), labels, head.num_classes());
  const ForwardTrace t = forward(head, x);
  switch (spec.phase) {
    case Phase::Joint:
      return total_loss(cross_entropy_loss(t.probabilities, labels), loss_p1(t.raw_distances),
                        loss_p2(t.raw_distances), spec.lambda1, spec.lambda2);
    case Phase::PrototypeOnly: {
      std::vector<Eigen::Index> rows;
      const DistanceMatrix dc = class_restricted(t.raw_distances, labels, head.proto_class, spec.target_class, rows);
      const double p1 = rows.empty() ? 0.0 : loss_p1(maybe_normalize(head, dc));
      return total_loss(0.0, p1, 0.0, 1.0, 0.0);
    }
    case Phase::Classifier: {
      std::vector<Eigen::Index> rows;
      const DistanceMatrix dc = class_restricted(t.raw_distances, labels, head.proto_class, spec.target_class, rows);
      const double p2 = rows.empty() ? 0.0 : loss_p2(maybe_normalize(head, dc));
      return total_loss(cross_entropy_loss(t.probabilities, labels), 0.0, p2, 0.0, spec.lambda);
    }
  }
  throw StateError("unknown loss phase");
}

LossAndGradient backward(const PrototypeHead& head, const Matrix& x, const std::vector<int>& labels,
                         const LossSpec& spec) {
  check_labels(x.rows(), labels, head.num_classes());
  const ForwardTrace t = forward(head, x);
  const Eigen::Index n = x.rows();
  const Eigen::Index m = head.num_prototypes();

  LossAndGradient out;
  out.grads = GradientSet::zeros_like(head);
  Matrix g_raw = Matrix::Zero(n, m);  // dL / d(raw squared distance)

  double ce = 0.0;
  if (spec.phase != Phase::PrototypeOnly && n > 0) {
    ce = cross_entropy_loss(t.probabilities, labels);
    Matrix d_logits = t.probabilities;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int y = labels[static_cast<std::size_t>(i)];
      if (t.probabilities(i, y) < kLogFloor) {
        d_logits.row(i).setZero();  // clamped region is flat
      } else {
        d_logits(i, y) -= 1.0;
      }
    }
    d_logits /= static_cast<double>(n);
    out.grads.d_linear = d_logits.transpose() * t.normalized_distances.values;
    const Matrix d_norm = d_logits * head.linear_weights;
    g_raw += maybe_normalize_backward(head, t.raw_distances, d_norm);
  }

  double p1 = 0.0;
  double p2 = 0.0;
  if (spec.phase == Phase::Joint) {
    p1 = loss_p1(t.raw_distances);
    p2 = loss_p2(t.raw_distances);
    g_raw += spec.lambda1 * loss_p1_grad(t.raw_distances) + spec.lambda2 * loss_p2_grad(t.raw_distances);
    out.loss = total_loss(ce, p1, p2, spec.lambda1, spec.lambda2);
  } else {
    std::vector<Eigen::Index> rows;
    const DistanceMatrix dc = class_restricted(t.raw_distances, labels, head.proto_class, spec.target_class, rows);
    if (!rows.empty()) {
      const DistanceMatrix dn = maybe_normalize(head, dc);
      Matrix g_sub;
      if (spec.phase == Phase::PrototypeOnly) {
        p1 = loss_p1(dn);
        g_sub = loss_p1_grad(dn);
      } else {
        p2 = loss_p2(dn);
        g_sub = spec.lambda * loss_p2_grad(dn);
      }
      g_sub = maybe_normalize_backward(head, dc, g_sub);
      for (std::size_t r = 0; r < rows.size(); ++r) g_raw.row(rows[r]) += g_sub.row(static_cast<Eigen::Index>(r));
    }
    out.loss = spec.phase == Phase::PrototypeOnly ? total_loss(0.0, p1, 0.0, 1.0, 0.0)
                                                  : total_loss(ce, 0.0, p2, 0.0, spec.lambda);
  }

  // d ||z_i - p_j||^2 = 2 (z_i - p_j) dz_i - 2 (z_i - p_j) dp_j
  const Matrix& z = t.projected;
  const Matrix& p = head.prototypes;
  const Matrix d_z = 2.0 * (g_raw.rowwise().sum().asDiagonal() * z - g_raw * p);
  out.grads.d_prototypes = 2.0 * (g_raw.colwise().sum().transpose().asDiagonal() * p - g_raw.transpose() * z);
  out.grads.d_projection = x.transpose() * d_z;
  return out;
}

namespace {

// Straight-loop evaluation of the selected loss in extended precision, with an
// optional offset on one scalar parameter. Shares no code with forward().
using Real = long double;

enum class Group { None, Projection, Prototypes, Linear };

struct Offset {
  Group group = Group::None;
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  Real delta = 0;
};

Real entry(const Matrix& m, Group g, Eigen::Index i, Eigen::Index j, const Offset& off) {
  Real v = m(i, j);
  if (off.group == g && off.row == i && off.col == j) v += off.delta;
  return v;
}

void normalize_row(std::vector<Real>& row, const std::vector<bool>& active, Real eps) {
  std::size_t count = 0;
  Real mean = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (active[j]) {
      mean += row[j];
      ++count;
    }
  }
  if (count < 2) return;
  mean /= static_cast<Real>(count);
  Real var = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (active[j]) var += (row[j] - mean) * (row[j] - mean);
  }
  var /= static_cast<Real>(count);
  const Real denom = std::sqrt(var + eps);
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (active[j]) row[j] = (row[j] - mean) / denom;
  }
}

Real reference_total(const PrototypeHead& head, const Matrix& x, const std::vector<int>& labels,
                     const LossSpec& spec, const Offset& off) {
  const Eigen::Index n = x.rows();
  const Eigen::Index in_dim = head.input_dim();
  const Eigen::Index dim = head.latent_dim();
  const Eigen::Index m = head.num_prototypes();
  const Eigen::Index k_classes = head.num_classes();
  const Real eps = head.epsilon;

  std::vector<std::vector<Real>> dist(static_cast<std::size_t>(n), std::vector<Real>(static_cast<std::size_t>(m)));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Real> z(static_cast<std::size_t>(dim), 0);
    for (Eigen::Index c = 0; c < dim; ++c) {
      for (Eigen::Index k = 0; k < in_dim; ++k) {
        z[static_cast<std::size_t>(c)] += static_cast<Real>(x(i, k)) * entry(head.projection, Group::Projection, k, c, off);
      }
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      Real acc = 0;
      for (Eigen::Index c = 0; c < dim; ++c) {
        const Real diff = z[static_cast<std::size_t>(c)] - entry(head.prototypes, Group::Prototypes, j, c, off);
        acc += diff * diff;
      }
      dist[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = acc;
    }
  }

  Real ce = 0;
  if (spec.phase != Phase::PrototypeOnly) {
    const std::vector<bool> all(static_cast<std::size_t>(m), true);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<Real> row = dist[static_cast<std::size_t>(i)];
      if (head.normalize_distances) normalize_row(row, all, eps);
      std::vector<Real> logits(static_cast<std::size_t>(k_classes), 0);
      for (Eigen::Index k = 0; k < k_classes; ++k) {
        for (Eigen::Index j = 0; j < m; ++j) {
          logits[static_cast<std::size_t>(k)] +=
              entry(head.linear_weights, Group::Linear, k, j, off) * row[static_cast<std::size_t>(j)];
        }
      }
      const Real top = *std::max_element(logits.begin(), logits.end());
      Real sum = 0;
      for (Real l : logits) sum += std::exp(l - top);
      const Real p_true = std::exp(logits[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] - top) / sum;
      ce -= std::log(std::max(p_true, static_cast<Real>(kLogFloor)));
    }
    if (n > 0) ce /= static_cast<Real>(n);
  }

  // Rows and columns taking part in the prototype term.
  std::vector<std::size_t> rows;
  std::vector<bool> cols(static_cast<std::size_t>(m), true);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    if (spec.phase == Phase::Joint || labels[i] == spec.target_class) rows.push_back(i);
  }
  if (spec.phase != Phase::Joint) {
    for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = head.proto_class[j] == spec.target_class;
  }
  std::vector<std::vector<Real>> sub;
  for (std::size_t i : rows) {
    std::vector<Real> row = dist[i];
    if (spec.phase != Phase::Joint && head.normalize_distances) normalize_row(row, cols, eps);
    sub.push_back(std::move(row));
  }

  auto p1 = [&] {
    if (sub.empty()) return Real(0);
    Real total = 0;
    std::size_t used = 0;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (!cols[j]) continue;
      Real best = sub[0][j];
      for (const auto& row : sub) best = std::min(best, row[j]);
      total += best;
      ++used;
    }
    return used ? total / static_cast<Real>(used) : Real(0);
  };
  auto p2 = [&] {
    if (sub.empty()) return Real(0);
    Real total = 0;
    for (const auto& row : sub) {
      Real best = std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j]) best = std::min(best, row[j]);
      }
      total += best;
    }
    return total / static_cast<Real>(sub.size());
  };

  switch (spec.phase) {
    case Phase::Joint:
      return ce + static_cast<Real>(spec.lambda1) * p1() + static_cast<Real>(spec.lambda2) * p2();
    case Phase::PrototypeOnly:
      return p1();
    case Phase::Classifier:
      return ce + static_cast<Real>(spec.lambda) * p2();
  }
  throw StateError("unknown loss phase");
}

}  // namespace

double reference_loss(const PrototypeHead& head, const Matrix& x, const std::vector<int>& labels,
                      const LossSpec& spec) {
  head.check();
  if (x.cols() != head.input_dim()) throw ShapeError("reference_loss: input dimension mismatch");
  check_labels(x.rows(), labels, head.num_classes());
  return static_cast<double>(reference_total(head, x, labels, spec, Offset{}));
}

double finite_diff_check(const PrototypeHead& head, const Matrix& x, const std::vector<int>& labels,
                         const LossSpec& spec, double h, const GradientSet& analytic) {
  head.check();
  if (x.cols() != head.input_dim()) throw ShapeError("finite_diff_check: input dimension mismatch");
  check_labels(x.rows(), labels, head.num_classes());
  double worst = 0.0;
  auto sweep = [&](const Matrix& param, const Matrix& grad, Group group) {
    for (Eigen::Index i = 0; i < param.rows(); ++i) {
      for (Eigen::Index j = 0; j < param.cols(); ++j) {
        const auto at = [&](Real k) {
          return reference_total(head, x, labels, spec, Offset{group, i, j, k * static_cast<Real>(h)});
        };
        const Real diff = 8 * (at(1) - at(-1)) - (at(2) - at(-2));
        const double numeric = static_cast<double>(diff / (12 * static_cast<Real>(h)));
        const double a = grad(i, j);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
  };
  sweep(head.projection, analytic.d_projection, Group::Projection);
  sweep(head.prototypes, analytic.d_prototypes, Group::Prototypes);
  sweep(head.linear_weights, analytic.d_linear, Group::Linear);
  return worst;
}

double finite_diff_check(const PrototypeHead& head, const Matrix& x, const std::vector<int>& labels,
                         const LossSpec& spec, double h) {
  return finite_diff_check(head, x, labels, spec, h, backward(head, x, labels, spec).grads);
}

}  // namespace protex
