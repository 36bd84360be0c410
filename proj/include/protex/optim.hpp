#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "protex/core_math.hpp"
#include "protex/model.hpp"

namespace protex {

/// Entries i.i.d. uniform on [-a, a] with a = sqrt(6 / (rows + cols)).
Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

struct AdamWParams {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;

  static AdamWParams from_config(const TrainConfig& c);
};

/// Moment accumulators for one parameter group. Step counts are kept per row
/// so that a row-restricted update (one class's prototypes) leaves every other
/// row's state exactly as it was.
struct MomentState {
  Matrix first;
  Matrix second;
  std::vector<std::int64_t> row_steps;

  MomentState() = default;
  MomentState(Eigen::Index rows, Eigen::Index cols);
  bool empty() const { return first.size() == 0; }
};

struct OptimizerState {
  AdamWParams params;
  MomentState projection;
  MomentState prototypes;
  MomentState linear;

  static OptimizerState for_head(const PrototypeHead& head, const AdamWParams& params);
};

/// One decoupled-weight-decay Adam step. When `rows` is given only those rows
/// (parameters and moments) change. Throws NonFiniteError naming `group` if the
/// gradient has a non-finite entry.
void adamw_step(Matrix& param, const Matrix& grad, MomentState& state, const AdamWParams& params,
                std::string_view group, const std::vector<bool>* rows = nullptr);

/// Early stopping on a validation metric that should increase.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Records one evaluation. Returns false when training should stop.
  bool update(double metric, const PrototypeHead& head);

  double best_metric() const { return best_metric_; }
  int evaluations_since_best() const { return since_best_; }
  int best_evaluation() const { return best_index_; }
  const std::optional<PrototypeHead>& best_head() const { return best_head_; }

 private:
  int patience_;
  double best_metric_ = -1.0;
  int since_best_ = 0;
  int evaluations_ = 0;
  int best_index_ = -1;
  std::optional<PrototypeHead> best_head_;
};

}  // namespace protex
