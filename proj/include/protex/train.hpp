#pragma once

#include <optional>
#include <string>
#include <vector>

#include "protex/config.hpp"
#include "protex/data.hpp"
#include "protex/losses.hpp"
#include "protex/model.hpp"
#include "protex/optim.hpp"

namespace protex {

struct EpochRecord {
  int iteration = 0;  // 1-based outer iteration
  int epoch = 0;      // 1-based global epoch
  std::string phase;  // "joint", "prototype", "classifier"
  int target_class = -1;
  std::size_t steps = 0;
  LossBreakdown mean_loss;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<double> validation_f1;  // one entry per outer iteration
  int iterations_run = 0;
  int best_iteration = 0;  // 1-based; 0 when no evaluation happened
  double best_validation_f1 = 0.0;
  bool stopped_early = false;
};

struct TrainResult {
  PrototypeHead head;  // best validation snapshot, or the last state without dev data
  OptimizerState optimizer;
  TrainReport report;
};

/// One joint update of every parameter group on a batch.
LossBreakdown joint_step(PrototypeHead& head, OptimizerState& opt, const Matrix& x, const std::vector<int>& y,
                         const TrainConfig& config);

/// Prototype-only update of the rows belonging to `cls`. Returns nullopt (and
/// changes nothing) when the batch has no example of that class.
std::optional<LossBreakdown> prototype_step(PrototypeHead& head, OptimizerState& opt, const Matrix& x,
                                            const std::vector<int>& y, int cls);

/// Projection and linear-layer update; prototypes stay fixed.
LossBreakdown classifier_step(PrototypeHead& head, OptimizerState& opt, const Matrix& x,
                              const std::vector<int>& y, const TrainConfig& config, int cls);

/// Class picked by the `epoch`-th (1-based) epoch of an alternating loop.
int alternating_class(int epoch, int start_class);

TrainResult train_simple(PrototypeHead head, const LabeledMatrix& train, const LabeledMatrix& dev,
                         const TrainConfig& config);

TrainResult train_interleaved(PrototypeHead head, const LabeledMatrix& train, const LabeledMatrix& dev,
                              const TrainConfig& config);

/// Dispatches on config.algorithm.
TrainResult train(PrototypeHead head, const LabeledMatrix& train, const LabeledMatrix& dev,
                  const TrainConfig& config);

}  // namespace protex
