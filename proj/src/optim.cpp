#include "protex/optim.hpp"

#include <cmath>
#include <string>

#include "protex/errors.hpp"

namespace protex {

Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  if (rows < 1 || cols < 1) throw ConfigError("xavier_uniform: dimensions must be >= 1");
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix out(rows, cols);
  // Row-major fill order so the stream layout does not depend on Eigen's storage order.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = dist(rng);
  }
  return out;
}

AdamWParams AdamWParams::from_config(const TrainConfig& c) {
  return AdamWParams{c.lr, c.beta1, c.beta2, c.adam_epsilon, c.weight_decay};
}

MomentState::MomentState(Eigen::Index rows, Eigen::Index cols)
    : first(Matrix::Zero(rows, cols)),
      second(Matrix::Zero(rows, cols)),
      row_steps(static_cast<std::size_t>(rows), 0) {}

OptimizerState OptimizerState::for_head(const PrototypeHead& head, const AdamWParams& params) {
  OptimizerState s;
  s.params = params;
  s.projection = MomentState(head.projection.rows(), head.projection.cols());
  s.prototypes = MomentState(head.prototypes.rows(), head.prototypes.cols());
  s.linear = MomentState(head.linear_weights.rows(), head.linear_weights.cols());
  return s;
}

void adamw_step(Matrix& param, const Matrix& grad, MomentState& state, const AdamWParams& p,
                std::string_view group, const std::vector<bool>* rows) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
    throw ShapeError("adamw_step: gradient shape mismatch in group '" + std::string(group) + "'");
  }
  if (state.empty()) state = MomentState(param.rows(), param.cols());
  if (state.first.rows() != param.rows() || state.first.cols() != param.cols()) {
    throw ShapeError("adamw_step: optimizer state shape mismatch in group '" + std::string(group) + "'");
  }
  if (!grad.allFinite()) {
    throw NonFiniteError("non-finite gradient in parameter group '" + std::string(group) + "'");
  }
  if (rows != nullptr && static_cast<Eigen::Index>(rows->size()) != param.rows()) {
    throw ShapeError("adamw_step: row selector length mismatch");
  }

  for (Eigen::Index i = 0; i < param.rows(); ++i) {
    if (rows != nullptr && !(*rows)[static_cast<std::size_t>(i)]) continue;
    const std::int64_t t = ++state.row_steps[static_cast<std::size_t>(i)];
    const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(t));
    for (Eigen::Index j = 0; j < param.cols(); ++j) {
      const double g = grad(i, j);
      double& m = state.first(i, j);
      double& v = state.second(i, j);
      m = p.beta1 * m + (1.0 - p.beta1) * g;
      v = p.beta2 * v + (1.0 - p.beta2) * g * g;
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      double& theta = param(i, j);
      theta -= p.lr * m_hat / (std::sqrt(v_hat) + p.epsilon);
      theta -= p.lr * p.weight_decay * theta;
    }
  }
}

bool EarlyStopping::update(double metric, const PrototypeHead& head) {
  ++evaluations_;
  if (!best_head_ || metric > best_metric_) {
    best_metric_ = metric;
    best_head_ = head;
    best_index_ = evaluations_ - 1;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return since_best_ < patience_;
}

}  // namespace protex
