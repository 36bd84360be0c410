#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "protex/checkpoint.hpp"
#include "protex/errors.hpp"
#include "protex/model.hpp"
#include "protex/optim.hpp"
#include "support.hpp"

using namespace protex;
using protex::testing::random_matrix;
using protex::testing::small_config;
using protex::testing::TempDir;

namespace {

bool same_head(const PrototypeHead& a, const PrototypeHead& b) {
  return a.projection == b.projection && a.prototypes == b.prototypes && a.linear_weights == b.linear_weights &&
         a.proto_class == b.proto_class && a.normalize_distances == b.normalize_distances && a.epsilon == b.epsilon;
}

}  // namespace

TEST(InitHead, DefaultPrototypeClasses) {
  TrainConfig c;
  const PrototypeHead h = init_head(c, 16, 1);
  ASSERT_EQ(h.num_prototypes(), 20);
  int neg = 0, pos = 0;
  for (int k : h.proto_class) (k == 0 ? neg : pos)++;
  EXPECT_EQ(neg, 1);
  EXPECT_EQ(pos, 19);
  EXPECT_EQ(h.num_classes(), 2);
}

TEST(InitHead, SameSeedBitIdentical) {
  TrainConfig c;
  EXPECT_TRUE(same_head(init_head(c, 16, 42), init_head(c, 16, 42)));
  EXPECT_FALSE(same_head(init_head(c, 16, 42), init_head(c, 16, 43)));
}

TEST(InitHead, IdentityProjectionWhenDimensionsAgree) {
  TrainConfig c;
  c.latent_dim = 8;
  const PrototypeHead h = init_head(c, 8, 3);
  EXPECT_EQ(h.projection, Matrix::Identity(8, 8));
  c.latent_dim = 0;
  EXPECT_EQ(init_head(c, 8, 3).projection, Matrix::Identity(8, 8));
}

TEST(InitHead, XavierBoundsOnEveryGroup) {
  TrainConfig c;
  c.latent_dim = 6;
  const PrototypeHead h = init_head(c, 10, 4);
  EXPECT_LE(h.prototypes.cwiseAbs().maxCoeff(), std::sqrt(6.0 / (20 + 6)));
  EXPECT_LE(h.linear_weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / (2 + 20)));
  EXPECT_LE(h.projection.cwiseAbs().maxCoeff(), std::sqrt(6.0 / (10 + 6)));
}

TEST(InitHead, TooFewPrototypesIsConfigError) {
  TrainConfig c;
  c.num_prototypes = 1;
  c.num_classes = 2;
  EXPECT_THROW(init_head(c, 4, 1), ConfigError);
}

TEST(Forward, HandExample) {
  PrototypeHead h;
  h.projection = Matrix::Identity(1, 1);
  h.prototypes = Matrix(2, 1);
  h.prototypes << 0, 2;
  h.proto_class = {0, 1};
  h.linear_weights = Matrix::Identity(2, 2);
  h.normalize_distances = true;
  Matrix x(1, 1);
  x << 0.5;  // raw distances 0.25, 2.25 -> normalized [-1, 1]
  const ForwardTrace t = forward(h, x);
  EXPECT_NEAR(t.normalized_distances.values(0, 0), -1.0, 1e-5);
  EXPECT_NEAR(t.normalized_distances.values(0, 1), 1.0, 1e-5);
  EXPECT_NEAR(t.logits(0, 0), -1.0, 1e-5);
  EXPECT_NEAR(t.logits(0, 1), 1.0, 1e-5);
  EXPECT_NEAR(t.probabilities(0, 0), 0.11920, 1e-5);
  EXPECT_NEAR(t.probabilities(0, 1), 0.88080, 1e-5);
}

TEST(Forward, InputEqualToPrototypeHasZeroDistance) {
  TrainConfig c = small_config();
  c.latent_dim = 5;
  PrototypeHead h = init_head(c, 5, 7);
  h.normalize_distances = false;
  const Matrix x = h.prototypes.row(1);
  EXPECT_EQ(forward(h, x).raw_distances.values(0, 1), 0.0);
}

TEST(Forward, BatchMatchesSingleExampleLoop) {
  TrainConfig c = small_config();
  const PrototypeHead h = init_head(c, 5, 8);
  const Matrix x = random_matrix(3, 5, 9);
  const ForwardTrace batch = forward(h, x);
  for (int i = 0; i < 3; ++i) {
    const ForwardTrace one = forward(h, x.row(i));
    EXPECT_LT((one.logits.row(0) - batch.logits.row(i)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((one.probabilities.row(0) - batch.probabilities.row(i)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, LogitsAreLinearInWeights) {
  TrainConfig c = small_config();
  PrototypeHead h = init_head(c, 5, 10);
  const Matrix x = random_matrix(6, 5, 11);
  const ForwardTrace a = forward(h, x);
  EXPECT_TRUE(a.logits.isApprox(a.normalized_distances.values * h.linear_weights.transpose(), 1e-14));
  h.linear_weights *= 3.0;
  EXPECT_TRUE(forward(h, x).logits.isApprox(3.0 * a.logits, 1e-12));
}

TEST(Forward, ZeroNormalizedRowGivesUniformProbabilities) {
  TrainConfig c = small_config();
  PrototypeHead h = init_head(c, 5, 12);
  // All prototypes equal: every normalized distance row is constant, hence zero.
  for (int j = 1; j < 3; ++j) h.prototypes.row(j) = h.prototypes.row(0);
  const ForwardTrace t = forward(h, random_matrix(4, 5, 13));
  EXPECT_TRUE(t.logits.isZero(1e-12));
  EXPECT_TRUE((t.probabilities.array() - 0.5).abs().maxCoeff() < 1e-12);
}

TEST(Forward, ShapeMismatch) {
  const PrototypeHead h = init_head(small_config(), 5, 1);
  EXPECT_THROW(forward(h, Matrix::Zero(2, 4)), ShapeError);
}

TEST(Predict, TieGoesToLowestClass) {
  Matrix p(3, 2);
  p << 0.1, 0.9, 0.5, 0.5, 0.7, 0.3;
  EXPECT_EQ(argmax_rows(p), (std::vector<int>{1, 0, 0}));
}

TEST(Predict, UninitializedHeadIsStateError) {
  PrototypeHead h;
  EXPECT_THROW(predict_batch(h, Matrix::Zero(1, 1)), Error);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  TempDir dir;
  TrainConfig c = small_config();
  c.lr = 1.0 / 3.0;
  c.seed = 77;
  PrototypeHead h = init_head(c, 5, 5);
  h.prototypes(0, 0) = 0.1 + 0.2;  // not exactly representable in short decimal
  const std::string path = dir.file("m.ckpt");
  save_checkpoint(path, h, c);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_TRUE(same_head(h, back.head));
  EXPECT_EQ(back.config.lr, c.lr);
  EXPECT_EQ(back.config.seed, 77u);
  EXPECT_FALSE(back.optimizer.has_value());
  const Matrix x = random_matrix(10, 5, 6);
  EXPECT_EQ(predict_batch(h, x).probabilities, predict_batch(back.head, x).probabilities);
}

TEST(Checkpoint, OptimizerStateRoundTrips) {
  TempDir dir;
  TrainConfig c = small_config();
  PrototypeHead h = init_head(c, 5, 5);
  OptimizerState opt = OptimizerState::for_head(h, AdamWParams::from_config(c));
  const Matrix g = random_matrix(3, 4, 1);
  std::vector<bool> rows = {true, false, true};
  adamw_step(h.prototypes, g, opt.prototypes, opt.params, "prototypes", &rows);
  const std::string path = dir.file("m.ckpt");
  save_checkpoint(path, h, c, &opt);
  const Checkpoint back = load_checkpoint(path);
  ASSERT_TRUE(back.optimizer.has_value());
  EXPECT_EQ(back.optimizer->prototypes.first, opt.prototypes.first);
  EXPECT_EQ(back.optimizer->prototypes.second, opt.prototypes.second);
  EXPECT_EQ(back.optimizer->prototypes.row_steps, opt.prototypes.row_steps);
  EXPECT_EQ(back.optimizer->params.lr, opt.params.lr);
}

TEST(Checkpoint, TruncatedFileIsCorrupted) {
  TempDir dir;
  const PrototypeHead h = init_head(small_config(), 5, 5);
  const std::string path = dir.file("m.ckpt");
  save_checkpoint(path, h, small_config());
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::ofstream(dir.file("cut.ckpt")) << text.substr(0, text.size() / 2);
  EXPECT_THROW(load_checkpoint(dir.file("cut.ckpt")), CorruptedFileError);
}

TEST(Checkpoint, FutureVersionIsVersionMismatch) {
  TempDir dir;
  const std::string path = dir.file("m.ckpt");
  save_checkpoint(path, init_head(small_config(), 5, 5), small_config());
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  text.replace(0, text.find('\n'), "PTEXCKPT 99");
  std::ofstream(dir.file("v99.ckpt")) << text;
  EXPECT_THROW(load_checkpoint(dir.file("v99.ckpt")), VersionMismatchError);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/m.ckpt"), IoError);
}

TEST(Checkpoint, GarbageIsCorrupted) {
  TempDir dir;
  std::ofstream(dir.file("g.ckpt")) << "hello world\n";
  EXPECT_THROW(load_checkpoint(dir.file("g.ckpt")), CorruptedFileError);
}
