#include <gtest/gtest.h>

#include <cmath>

#include "protex/errors.hpp"
#include "protex/explain.hpp"
#include "support.hpp"

using namespace protex;
using protex::testing::random_matrix;
using protex::testing::reciprocal_oracle;
using protex::testing::small_config;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Three well separated groups on the axes, and a head with one prototype on
// each group center.
struct Clustered {
  PrototypeHead head;
  LabeledMatrix data;
  std::vector<std::optional<std::string>> subcategories;
};

Clustered clustered() {
  Clustered c;
  c.head.projection = Matrix::Identity(3, 3);
  c.head.prototypes = 10.0 * Matrix::Identity(3, 3);
  c.head.proto_class = {1, 1, 0};
  c.head.linear_weights = random_matrix(2, 3, 1);
  const Matrix noise = random_matrix(30, 3, 2, 0.5);
  c.data.features.resize(30, 3);
  for (int i = 0; i < 30; ++i) {
    const int g = i % 3;
    c.data.features.row(i) = c.head.prototypes.row(g) + noise.row(i);
    c.data.labels.push_back(g == 2 ? 0 : 1);
    c.data.rows.push_back(static_cast<std::size_t>(i));
    c.subcategories.push_back(g == 2 ? std::nullopt : std::optional<std::string>(g == 0 ? "alpha" : "beta"));
  }
  return c;
}

}  // namespace

TEST(SoftCluster, TwoPointExample) {
  Matrix d(1, 2);
  d << 1, 2;
  const SoftClusterModel m = soft_cluster_build(d, std::vector<int>{1, 0});
  EXPECT_NEAR(m.z(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.pi(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.pi(0, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.psi(0), 2.0 / 3.0, 1e-15);
}

TEST(SoftCluster, ZeroDistanceTakesAllMass) {
  EXPECT_EQ(reciprocal_distribution(vec({0, 3, 4})), vec({1, 0, 0}));
  EXPECT_EQ(reciprocal_distribution(vec({0, 3, 0})), vec({0.5, 0, 0.5}));
  double z = -1;
  reciprocal_distribution(vec({2, 0}), &z);
  EXPECT_EQ(z, 0.0);
}

TEST(SoftCluster, InvalidDistances) {
  EXPECT_THROW(reciprocal_distribution(vec({1, -1})), DataError);
  EXPECT_THROW(reciprocal_distribution(Vector()), EmptySelectionError);
  EXPECT_THROW(soft_cluster_build(Matrix::Ones(2, 3), std::vector<int>{1, 0}), ShapeError);
}

TEST(SoftCluster, InferExamples) {
  Matrix d(2, 2);
  d << 1, 2, 4, 4;
  const SoftClusterModel m = soft_cluster_build(d, std::vector<int>{1, 0});
  EXPECT_NEAR(m.psi(1), 0.5, 1e-15);
  const TestPosterior p = soft_cluster_infer(m, vec({1, 3}));
  EXPECT_NEAR(p.theta(0), 0.75, 1e-15);
  EXPECT_NEAR(p.p_positive, 0.75 * (2.0 / 3.0) + 0.25 * 0.5, 1e-15);
  EXPECT_THROW(soft_cluster_infer(m, vec({1, 2, 3})), ShapeError);
}

TEST(SoftCluster, MatchesProductFormOracle) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> size_m(1, 5), size_n(1, 20);
  std::uniform_real_distribution<double> dist(0.01, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = size_m(rng), n = size_n(rng);
    Matrix d(m, n);
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < n; ++i) d(j, i) = dist(rng);
    }
    std::vector<int> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = static_cast<int>(rng() % 2);
    const SoftClusterModel model = soft_cluster_build(d, y);
    for (int j = 0; j < m; ++j) {
      std::vector<double> dj;
      for (int i = 0; i < n; ++i) dj.push_back(d(j, i));
      const std::vector<double> pi = reciprocal_oracle(dj);
      double psi = 0;
      for (int i = 0; i < n; ++i) {
        EXPECT_NEAR(model.pi(j, i), pi[static_cast<std::size_t>(i)], 1e-9);
        psi += pi[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
      }
      EXPECT_NEAR(model.psi(j), psi, 1e-9);
      EXPECT_NEAR(model.pi.row(j).sum(), 1.0, 1e-9);
      for (int u = 0; u < n; ++u) {
        for (int v = 0; v < n; ++v) {
          EXPECT_NEAR(model.pi(j, v) / model.pi(j, u), d(j, u) / d(j, v), 1e-9 * d(j, u) / d(j, v));
        }
      }
    }
  }
}

TEST(Knn, Examples) {
  Matrix train(4, 1), test(2, 1);
  train << 0, 1, 10, 11;
  test << 0.4, 10.4;
  EXPECT_EQ(knn_classify(train, std::vector<int>{0, 0, 1, 1}, test, 1), (std::vector<int>{0, 1}));
  EXPECT_EQ(knn_classify(train, std::vector<int>{0, 1, 1, 0}, test, 2), (std::vector<int>{0, 0}));
  EXPECT_EQ(knn_classify(train, std::vector<int>{0, 1, 1, 1}, test, 3), (std::vector<int>{1, 1}));
  EXPECT_THROW(knn_classify(train, std::vector<int>{0, 1, 1, 1}, test, 0), ConfigError);
  EXPECT_THROW(knn_classify(train, std::vector<int>{0, 1, 1, 1}, test, 5), ConfigError);
}

TEST(Segregation, ExtremeCases) {
  std::vector<std::vector<std::size_t>> disjoint;
  for (std::size_t j = 0; j < 20; ++j) disjoint.push_back({5 * j, 5 * j + 1, 5 * j + 2, 5 * j + 3, 5 * j + 4});
  EXPECT_EQ(segregation_metric(disjoint).unique_count, 100u);
  EXPECT_EQ(segregation_metric(disjoint).exactly_one_prototype_count, 100u);
  const std::vector<std::vector<std::size_t>> shared(20, {0, 1, 2, 3, 4});
  EXPECT_EQ(segregation_metric(shared).unique_count, 5u);
  EXPECT_EQ(segregation_metric(shared).exactly_one_prototype_count, 0u);
}

TEST(Segregation, NearestListsAreSortedAndSized) {
  const PrototypeHead h = init_head(small_config(), 5, 1);
  const Matrix x = random_matrix(12, 5, 2);
  const auto nearest = nearest_examples_per_prototype(h, x, 5);
  ASSERT_EQ(nearest.size(), 3u);
  const DistanceMatrix d = math::squared_l2_distance_matrix(h.project(x), h.prototypes);
  for (std::size_t j = 0; j < 3; ++j) {
    ASSERT_EQ(nearest[j].size(), 5u);
    for (std::size_t r = 1; r < 5; ++r) {
      EXPECT_LE(d.values(Eigen::Index(nearest[j][r - 1]), Eigen::Index(j)),
                d.values(Eigen::Index(nearest[j][r]), Eigen::Index(j)));
    }
  }
  EXPECT_THROW(nearest_examples_per_prototype(h, x, 13), ConfigError);
}

TEST(Association, PermutationMatrixOnClusteredData) {
  const Clustered c = clustered();
  const AssociationMatrix a = association_matrix(c.head, c.data, c.subcategories);
  EXPECT_EQ(a.groups, (std::vector<std::string>{"alpha", "beta", "negative"}));
  EXPECT_EQ(a.fractions, Matrix::Identity(3, 3));
}

TEST(Association, RowsSumToOne) {
  const PrototypeHead h = init_head(small_config(), 5, 3);
  LabeledMatrix data;
  data.features = random_matrix(40, 5, 4);
  std::vector<std::optional<std::string>> subs;
  for (int i = 0; i < 40; ++i) {
    data.labels.push_back(i % 2);
    subs.push_back(i % 2 ? std::optional<std::string>(i % 4 == 1 ? "a" : "b") : std::nullopt);
  }
  const AssociationMatrix a = association_matrix(h, data, subs);
  for (Eigen::Index g = 0; g < a.fractions.rows(); ++g) EXPECT_NEAR(a.fractions.row(g).sum(), 1.0, 1e-12);
}

TEST(Explain, RecomputedLabelMatchesPrediction) {
  const PrototypeHead h = init_head(small_config(), 5, 5);
  LabeledDataset ds;
  LabeledMatrix train;
  train.features = random_matrix(10, 5, 6);
  for (int i = 0; i < 10; ++i) {
    ds.examples.push_back({"t" + std::to_string(i), "text", i % 2, {}, Split::Train});
    train.labels.push_back(i % 2);
    train.rows.push_back(static_cast<std::size_t>(i));
  }
  const ExemplarIndex index(h, ds, train, 3);
  const Matrix test = random_matrix(100, 5, 7, 3.0);
  const Prediction p = predict_batch(h, test);
  for (int i = 0; i < 100; ++i) {
    const Explanation e = explain_prediction(h, index, test.row(i), "q", 2);
    EXPECT_EQ(e.predicted, p.labels[static_cast<std::size_t>(i)]);
    EXPECT_EQ(e.recompute_label(h.linear_weights), e.predicted);
    ASSERT_EQ(e.prototypes.size(), 2u);
    EXPECT_LE(e.prototypes[0].distance, e.prototypes[1].distance);
    EXPECT_EQ(e.prototypes[0].exemplars.size(), 3u);
  }
}

TEST(Explain, PrototypeOnTrainingPointRanksItFirst) {
  TrainConfig c = small_config();
  c.latent_dim = 5;
  PrototypeHead h = init_head(c, 5, 8);
  LabeledDataset ds;
  LabeledMatrix train;
  train.features = random_matrix(6, 5, 9);
  for (int i = 0; i < 6; ++i) {
    ds.examples.push_back({"t" + std::to_string(i), "", i % 2, {}, Split::Train});
    train.labels.push_back(i % 2);
    train.rows.push_back(static_cast<std::size_t>(i));
  }
  h.prototypes.row(2) = train.features.row(4);
  const ExemplarIndex index(h, ds, train, 2);
  ASSERT_FALSE(index.for_prototype(2).empty());
  EXPECT_EQ(index.for_prototype(2)[0].id, "t4");
  EXPECT_EQ(index.for_prototype(2)[0].distance, 0.0);
}

TEST(Explain, InvalidRequests) {
  const PrototypeHead h = init_head(small_config(), 5, 5);
  LabeledDataset ds;
  LabeledMatrix train;
  const Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(5);
  EXPECT_THROW(explain_prediction(h, ds, train, x, "q", 0, 1), ConfigError);
  EXPECT_THROW(explain_prediction(PrototypeHead{}, ds, train, x, "q", 1, 1), StateError);
}
