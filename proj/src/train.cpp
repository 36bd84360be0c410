#include "protex/train.hpp"

#include <algorithm>
#include <random>

#include "protex/errors.hpp"
#include "protex/metrics.hpp"

namespace protex {

namespace {

struct Batch {
  Matrix x;
  std::vector<int> y;
};

Batch take(const LabeledMatrix& data, const std::vector<std::size_t>& idx) {
  Batch b;
  b.x.resize(static_cast<Eigen::Index>(idx.size()), data.features.cols());
  b.y.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    b.x.row(static_cast<Eigen::Index>(r)) = data.features.row(static_cast<Eigen::Index>(idx[r]));
    b.y.push_back(data.labels[idx[r]]);
  }
  return b;
}

class LossAverager {
 public:
  void add(const LossBreakdown& l) {
    sum_.ce += l.ce;
    sum_.p1 += l.p1;
    sum_.p2 += l.p2;
    sum_.total += l.total;
    sum_.lambda1 = l.lambda1;
    sum_.lambda2 = l.lambda2;
    ++count_;
  }
  std::size_t count() const { return count_; }
  LossBreakdown mean() const {
    LossBreakdown m = sum_;
    if (count_ == 0) return m;
    const double k = static_cast<double>(count_);
    m.ce /= k;
    m.p1 /= k;
    m.p2 /= k;
    m.total /= k;
    return m;
  }

 private:
  LossBreakdown sum_;
  std::size_t count_ = 0;
};

void check_inputs(const PrototypeHead& head, const LabeledMatrix& train, const LabeledMatrix& dev,
                  const TrainConfig& config) {
  config.validate();
  head.check();
  if (train.features.cols() != head.input_dim()) throw ShapeError("training features do not match head input");
  if (!dev.empty() && dev.features.cols() != head.input_dim()) {
    throw ShapeError("validation features do not match head input");
  }
  if (static_cast<std::size_t>(train.features.rows()) != train.labels.size()) {
    throw ShapeError("training features and labels differ in length");
  }
}

double validation_macro_f1(const PrototypeHead& head, const LabeledMatrix& dev) {
  const Prediction p = predict_batch(head, dev.features);
  return f1_scores(p.labels, dev.labels).f1_macro;
}

// Shared outer loop: run one iteration, evaluate, early-stop.
template <typename Iteration>
TrainResult run_outer_loop(PrototypeHead head, const LabeledMatrix& dev, const TrainConfig& config,
                           Iteration&& iteration) {
  TrainResult result;
  result.optimizer = OptimizerState::for_head(head, AdamWParams::from_config(config));
  EarlyStopping stopper(config.patience);
  for (int k = 1; k <= config.iterations; ++k) {
    iteration(head, result.optimizer, result.report, k);
    result.report.iterations_run = k;
    if (dev.empty()) continue;
    const double f1 = validation_macro_f1(head, dev);
    result.report.validation_f1.push_back(f1);
    if (!stopper.update(f1, head)) {
      result.report.stopped_early = true;
      break;
    }
  }
  if (stopper.best_head()) {
    result.report.best_iteration = stopper.best_evaluation() + 1;
    result.report.best_validation_f1 = stopper.best_metric();
    result.head = *stopper.best_head();
  } else {
    result.head = std::move(head);
  }
  return result;
}

AdamWParams encoder_params(const OptimizerState& opt, const TrainConfig& config) {
  AdamWParams p = opt.params;
  p.lr = config.effective_encoder_lr();
  return p;
}

}  // namespace

int alternating_class(int epoch, int start_class) { return (start_class + epoch - 1) % 2; }

LossBreakdown joint_step(PrototypeHead& head, OptimizerState& opt, const Matrix& x, const std::vector<int>& y,
                         const TrainConfig& config) {
  const LossAndGradient lg = backward(head, x, y, LossSpec::joint(config));
  adamw_step(head.projection, lg.grads.d_projection, opt.projection, encoder_params(opt, config), "projection");
  adamw_step(head.prototypes, lg.grads.d_prototypes, opt.prototypes, opt.params, "prototypes");
  adamw_step(head.linear_weights, lg.grads.d_linear, opt.linear, opt.params, "linear");
  return lg.loss;
}

std::optional<LossBreakdown> prototype_step(PrototypeHead& head, OptimizerState& opt, const Matrix& x,
                                            const std::vector<int>& y, int cls) {
  if (std::find(y.begin(), y.end(), cls) == y.end()) return std::nullopt;
  const LossAndGradient lg = backward(head, x, y, LossSpec::prototype_only(cls));
  std::vector<bool> rows(head.proto_class.size());
  for (std::size_t j = 0; j < rows.size(); ++j) rows[j] = head.proto_class[j] == cls;
  adamw_step(head.prototypes, lg.grads.d_prototypes, opt.prototypes, opt.params, "prototypes", &rows);
  return lg.loss;
}

LossBreakdown classifier_step(PrototypeHead& head, OptimizerState& opt, const Matrix& x,
                              const std::vector<int>& y, const TrainConfig& config, int cls) {
  const LossAndGradient lg = backward(head, x, y, LossSpec::classifier(config, cls));
  adamw_step(head.projection, lg.grads.d_projection, opt.projection, encoder_params(opt, config), "projection");
  adamw_step(head.linear_weights, lg.grads.d_linear, opt.linear, opt.params, "linear");
  return lg.loss;
}

TrainResult train_simple(PrototypeHead head, const LabeledMatrix& train, const LabeledMatrix& dev,
                         const TrainConfig& config) {
  if (config.algorithm != Algorithm::Simple) throw ConfigError("train_simple requires algorithm = simple");
  check_inputs(head, train, dev, config);
  std::mt19937_64 rng(config.seed);
  return run_outer_loop(std::move(head), dev, config,
                        [&](PrototypeHead& h, OptimizerState& opt, TrainReport& report, int k) {
                          const BatchPlan plan = balanced_batches(train.labels, config.batch_size, rng);
                          LossAverager avg;
                          for (const auto& idx : plan.batches) {
                            const Batch b = take(train, idx);
                            avg.add(joint_step(h, opt, b.x, b.y, config));
                          }
                          report.epochs.push_back({k, k, "joint", -1, avg.count(), avg.mean()});
                        });
}

TrainResult train_interleaved(PrototypeHead head, const LabeledMatrix& train, const LabeledMatrix& dev,
                              const TrainConfig& config) {
  if (config.algorithm != Algorithm::Interleaved) {
    throw ConfigError("train_interleaved requires algorithm = interleaved");
  }
  check_inputs(head, train, dev, config);
  std::mt19937_64 rng(config.seed);
  int delta_epoch = 0;
  int gamma_epoch = 0;
  int global_epoch = 0;
  return run_outer_loop(
      std::move(head), dev, config, [&](PrototypeHead& h, OptimizerState& opt, TrainReport& report, int k) {
        for (int i = 0; i < config.delta_epochs; ++i) {
          const int c = alternating_class(++delta_epoch, config.start_class);
          const BatchPlan plan = balanced_batches(train.labels, config.batch_size, rng);
          LossAverager avg;
          for (const auto& idx : plan.batches) {
            const Batch b = take(train, idx);
            if (auto l = prototype_step(h, opt, b.x, b.y, c)) avg.add(*l);
          }
          report.epochs.push_back({k, ++global_epoch, "prototype", c, avg.count(), avg.mean()});
        }
        for (int j = 0; j < config.gamma_epochs; ++j) {
          const int c = alternating_class(++gamma_epoch, config.start_class);
          const BatchPlan plan = balanced_batches(train.labels, config.batch_size, rng);
          LossAverager avg;
          for (const auto& idx : plan.batches) {
            const Batch b = take(train, idx);
            avg.add(classifier_step(h, opt, b.x, b.y, config, c));
          }
          report.epochs.push_back({k, ++global_epoch, "classifier", c, avg.count(), avg.mean()});
        }
      });
}

TrainResult train(PrototypeHead head, const LabeledMatrix& train, const LabeledMatrix& dev,
                  const TrainConfig& config) {
  return config.algorithm == Algorithm::Simple ? train_simple(std::move(head), train, dev, config)
                                               : train_interleaved(std::move(head), train, dev, config);
}

}  // namespace protex
