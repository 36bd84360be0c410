#include "protex/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "protex/errors.hpp"
#include "protex/optim.hpp"

namespace protex {

std::string to_string(Algorithm a) { return a == Algorithm::Simple ? "simple" : "interleaved"; }

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "simple") return Algorithm::Simple;
  if (s == "interleaved") return Algorithm::Interleaved;
  throw ConfigError("unknown algorithm '" + s + "' (expected simple or interleaved)");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(num_classes >= 2, "number of classes K must be at least 2");
  require(num_prototypes >= num_classes,
          "number of prototypes m (" + std::to_string(num_prototypes) +
              ") must be >= number of classes K (" + std::to_string(num_classes) + ")");
  require(neg_prototypes >= 0, "negative prototype count must be >= 0");
  require(num_prototypes - neg_prototypes >= num_classes - 1,
          "every positive class needs at least one prototype");
  require(latent_dim >= 0, "latent dimension must be >= 0");
  require(iterations >= 0 && delta_epochs >= 0 && gamma_epochs >= 0, "epoch counts must be >= 0");
  require(lambda1 >= 0 && lambda2 >= 0 && lambda_interleaved >= 0, "loss weights must be >= 0");
  require(lr > 0, "learning rate must be > 0");
  require(std::isfinite(encoder_lr), "encoder learning rate must be finite");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "betas must lie in [0, 1)");
  require(adam_epsilon > 0 && norm_epsilon > 0, "epsilons must be > 0");
  require(weight_decay >= 0, "weight decay must be >= 0");
  require(batch_size >= 2, "batch size must be >= 2");
  require(patience >= 1, "patience must be >= 1");
  if (algorithm == Algorithm::Interleaved) {
    require(neg_prototypes >= 1, "interleaved training needs at least one negative prototype");
    require(num_classes == 2, "interleaved training alternates between exactly two classes");
    require(start_class == 0 || start_class == 1, "start class must be 0 or 1");
  }
}

int TrainConfig::epochs_per_iteration() const {
  return algorithm == Algorithm::Simple ? 1 : delta_epochs + gamma_epochs;
}

Matrix PrototypeHead::project(const Matrix& x) const {
  if (x.cols() != input_dim()) {
    throw ShapeError("input has " + std::to_string(x.cols()) + " columns, head expects " +
                     std::to_string(input_dim()));
  }
  return x * projection;
}

void PrototypeHead::check() const {
  if (!initialized()) throw StateError("prototype head is not initialized");
  if (prototypes.cols() != projection.cols()) throw ShapeError("prototype dimension != latent dimension");
  if (linear_weights.cols() != prototypes.rows()) throw ShapeError("linear layer width != prototype count");
  if (static_cast<Eigen::Index>(proto_class.size()) != prototypes.rows()) {
    throw ShapeError("prototype class list length != prototype count");
  }
  for (int c : proto_class) {
    if (c < 0 || c >= num_classes()) throw ShapeError("prototype class out of range");
  }
  if (!projection.allFinite() || !prototypes.allFinite() || !linear_weights.allFinite()) {
    throw NonFiniteError("prototype head contains non-finite parameters");
  }
}

PrototypeHead init_head(const TrainConfig& config, Eigen::Index input_dim, std::uint64_t seed) {
  config.validate();
  if (input_dim < 1) throw ConfigError("input dimension must be >= 1");
  const Eigen::Index d = config.latent_dim > 0 ? config.latent_dim : input_dim;
  const Eigen::Index m = config.num_prototypes;
  const Eigen::Index k = config.num_classes;

  std::mt19937_64 rng(seed);
  PrototypeHead head;
  head.prototypes = xavier_uniform(m, d, rng);
  head.linear_weights = xavier_uniform(k, m, rng);
  head.projection = d == input_dim ? Matrix::Identity(input_dim, d) : xavier_uniform(input_dim, d, rng);
  head.normalize_distances = config.normalize;
  head.epsilon = config.norm_epsilon;

  head.proto_class.assign(static_cast<std::size_t>(m), 0);
  const Eigen::Index positives = m - config.neg_prototypes;
  for (Eigen::Index j = 0; j < positives; ++j) {
    head.proto_class[static_cast<std::size_t>(j)] = static_cast<int>(1 + j % (k - 1));
  }
  return head;
}

ForwardTrace forward(const PrototypeHead& head, const Matrix& x) {
  head.check();
  ForwardTrace t;
  t.projected = head.project(x);
  t.raw_distances = math::squared_l2_distance_matrix(t.projected, head.prototypes);
  t.normalized_distances =
      head.normalize_distances ? math::instance_normalize(t.raw_distances, head.epsilon) : t.raw_distances;
  t.logits = t.normalized_distances.values * head.linear_weights.transpose();
  t.probabilities = math::softmax_rows(t.logits);
  return t;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < m.cols(); ++j) {
      if (m(i, j) > m(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

Prediction predict_batch(const PrototypeHead& head, const Matrix& x) {
  ForwardTrace t = forward(head, x);
  Prediction p;
  p.labels = argmax_rows(t.probabilities);
  p.probabilities = std::move(t.probabilities);
  return p;
}

}  // namespace protex
