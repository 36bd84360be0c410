#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "protex/checkpoint.hpp"
#include "protex/errors.hpp"
#include "protex/losses.hpp"
#include "protex/optim.hpp"
#include "protex/train.hpp"
#include "support.hpp"

using namespace protex;
using protex::testing::alternating_labels;
using protex::testing::random_matrix;
using protex::testing::small_config;
using protex::testing::TempDir;

TEST(Xavier, BoundForSquareMatrix) {
  std::mt19937_64 rng(1);
  const Matrix w = xavier_uniform(3, 3, rng);
  EXPECT_LE(w.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Xavier, SameSeedSameMatrix) {
  std::mt19937_64 a(9), b(9);
  EXPECT_EQ(xavier_uniform(4, 7, a), xavier_uniform(4, 7, b));
}

TEST(Xavier, EmpiricalVariance) {
  std::mt19937_64 rng(2);
  double sum = 0, sq = 0;
  const int draws = 10000 / 9 + 1;
  int count = 0;
  for (int k = 0; k < draws; ++k) {
    const Matrix w = xavier_uniform(3, 3, rng);
    sum += w.sum();
    sq += w.squaredNorm();
    count += 9;
  }
  const double mean = sum / count;
  const double var = sq / count - mean * mean;
  EXPECT_NEAR(var, 1.0 / 3.0, 0.1 / 3.0);
}

TEST(AdamW, SingleStepFromZero) {
  AdamWParams p;
  p.lr = 1e-3;
  p.weight_decay = 0.0;
  Matrix theta = Matrix::Zero(1, 1);
  MomentState s(1, 1);
  adamw_step(theta, Matrix::Ones(1, 1), s, p, "theta");
  EXPECT_NEAR(theta(0, 0), -p.lr, 1e-6 * p.lr);
}

TEST(AdamW, HandEvaluatedTwoSteps) {
  AdamWParams p;
  p.lr = 0.1;
  p.weight_decay = 0.5;
  Matrix theta(1, 1);
  theta << 2.0;
  MomentState s(1, 1);
  double m = 0, v = 0, t = 2.0;
  for (int step = 1; step <= 2; ++step) {
    const double g = step == 1 ? 0.3 : -0.7;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, step));
    const double vh = v / (1 - std::pow(0.999, step));
    t -= p.lr * mh / (std::sqrt(vh) + p.epsilon);
    t -= p.lr * p.weight_decay * t;
    adamw_step(theta, Matrix::Constant(1, 1, g), s, p, "theta");
    EXPECT_NEAR(theta(0, 0), t, 1e-14);
  }
}

TEST(AdamW, ZeroGradientNoDecayIsIdentity) {
  AdamWParams p;
  p.weight_decay = 0.0;
  Matrix theta = random_matrix(3, 4, 1);
  const Matrix before = theta;
  MomentState s(3, 4);
  adamw_step(theta, Matrix::Zero(3, 4), s, p, "theta");
  EXPECT_EQ(theta, before);
}

TEST(AdamW, ZeroGradientWithDecayShrinks) {
  AdamWParams p;
  p.lr = 0.01;
  p.weight_decay = 0.1;
  Matrix theta = random_matrix(3, 4, 1);
  const Matrix before = theta;
  MomentState s(3, 4);
  adamw_step(theta, Matrix::Zero(3, 4), s, p, "theta");
  EXPECT_TRUE(theta.isApprox(before * (1 - p.lr * p.weight_decay), 1e-15));
}

TEST(AdamW, ZeroLearningRateIsIdentity) {
  AdamWParams p;
  p.lr = 0.0;
  Matrix theta = random_matrix(3, 4, 1);
  const Matrix before = theta;
  MomentState s(3, 4);
  adamw_step(theta, random_matrix(3, 4, 2), s, p, "theta");
  EXPECT_EQ(theta, before);
}

TEST(AdamW, RowRestrictionLeavesOtherRowsUntouched) {
  AdamWParams p;
  p.lr = 0.1;
  Matrix theta = random_matrix(4, 3, 1);
  const Matrix before = theta;
  MomentState s(4, 3);
  const std::vector<bool> rows = {false, true, false, true};
  adamw_step(theta, random_matrix(4, 3, 2), s, p, "theta", &rows);
  for (int r : {0, 2}) {
    EXPECT_EQ(theta.row(r), before.row(r));
    EXPECT_TRUE(s.first.row(r).isZero(0));
    EXPECT_EQ(s.row_steps[static_cast<std::size_t>(r)], 0);
  }
  for (int r : {1, 3}) {
    EXPECT_NE(theta.row(r), before.row(r));
    EXPECT_EQ(s.row_steps[static_cast<std::size_t>(r)], 1);
  }
}

TEST(AdamW, NonFiniteGradientNamesGroup) {
  AdamWParams p;
  Matrix theta = Matrix::Zero(2, 2);
  MomentState s(2, 2);
  Matrix g = Matrix::Zero(2, 2);
  g(1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    adamw_step(theta, g, s, p, "prototypes");
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("prototypes"), std::string::npos);
  }
  EXPECT_TRUE(theta.isZero(0));
}

TEST(AdamW, SmallStepDecreasesLossInEveryMode) {
  const TrainConfig c = small_config();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Matrix x = random_matrix(8, 5, seed + 40);
    const auto y = alternating_labels(8);
    for (const LossSpec& spec : {LossSpec::joint(c), LossSpec::prototype_only(1), LossSpec::classifier(c, 1)}) {
      PrototypeHead h = init_head(c, 5, seed);
      AdamWParams p;
      p.lr = 1e-4;
      p.weight_decay = 0.0;
      OptimizerState opt = OptimizerState::for_head(h, p);
      const LossAndGradient lg = backward(h, x, y, spec);
      adamw_step(h.projection, lg.grads.d_projection, opt.projection, p, "projection");
      adamw_step(h.prototypes, lg.grads.d_prototypes, opt.prototypes, p, "prototypes");
      adamw_step(h.linear_weights, lg.grads.d_linear, opt.linear, p, "linear");
      EXPECT_LT(evaluate_loss(h, x, y, spec).total, lg.loss.total);
    }
  }
}

TEST(EarlyStopping, StopsAfterPatienceNonImprovingEvaluations) {
  PrototypeHead h = init_head(small_config(), 5, 1);
  EarlyStopping es(2);
  const std::vector<double> metrics = {0.5, 0.6, 0.55, 0.54, 0.9};
  std::vector<bool> go;
  for (std::size_t k = 0; k < 4; ++k) {
    h.prototypes(0, 0) = static_cast<double>(k);
    go.push_back(es.update(metrics[k], h));
  }
  EXPECT_EQ(go, (std::vector<bool>{true, true, true, false}));
  EXPECT_EQ(es.best_metric(), 0.6);
  EXPECT_EQ(es.best_evaluation(), 1);
  ASSERT_TRUE(es.best_head().has_value());
  EXPECT_EQ(es.best_head()->prototypes(0, 0), 1.0);
}

TEST(EarlyStopping, StrictlyImprovingNeverStops) {
  const PrototypeHead h = init_head(small_config(), 5, 1);
  EarlyStopping es(1);
  for (int k = 0; k < 20; ++k) EXPECT_TRUE(es.update(0.01 * k, h));
}

TEST(EarlyStopping, TieCountsAsNonImproving) {
  const PrototypeHead h = init_head(small_config(), 5, 1);
  EarlyStopping es(1);
  EXPECT_TRUE(es.update(0.7, h));
  EXPECT_FALSE(es.update(0.7, h));
  EXPECT_EQ(es.best_evaluation(), 0);
}

TEST(OptimizerState, ResumeFromCheckpointMatchesUninterrupted) {
  TempDir dir;
  TrainConfig c = small_config();
  c.lr = 1e-2;
  const Matrix x = random_matrix(16, 5, 3);
  const auto y = alternating_labels(16);
  auto run = [&](PrototypeHead& h, OptimizerState& opt, int from, int to) {
    for (int k = from; k < to; ++k) {
      const Matrix xb = x.middleRows(k % 2 * 8, 8);
      const std::vector<int> yb(y.begin() + k % 2 * 8, y.begin() + k % 2 * 8 + 8);
      joint_step(h, opt, xb, yb, c);
      prototype_step(h, opt, xb, yb, k % 2);
      classifier_step(h, opt, xb, yb, c, k % 2);
    }
  };
  PrototypeHead straight = init_head(c, 5, 1);
  OptimizerState straight_opt = OptimizerState::for_head(straight, AdamWParams::from_config(c));
  run(straight, straight_opt, 0, 10);

  PrototypeHead first = init_head(c, 5, 1);
  OptimizerState first_opt = OptimizerState::for_head(first, AdamWParams::from_config(c));
  run(first, first_opt, 0, 4);
  save_checkpoint(dir.file("mid.ckpt"), first, c, &first_opt);
  Checkpoint resumed = load_checkpoint(dir.file("mid.ckpt"));
  ASSERT_TRUE(resumed.optimizer.has_value());
  run(resumed.head, *resumed.optimizer, 4, 10);

  EXPECT_EQ(resumed.head.projection, straight.projection);
  EXPECT_EQ(resumed.head.prototypes, straight.prototypes);
  EXPECT_EQ(resumed.head.linear_weights, straight.linear_weights);
}
