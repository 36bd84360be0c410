#pragma once

#include <cstdint>
#include <vector>

#include "protex/config.hpp"
#include "protex/core_math.hpp"

namespace protex {

/// Trainable state of the prototype classification head.
///
/// Inputs x (rows of an n x D matrix) are mapped to the latent space by
/// `projection` (D x d). Each of the m prototypes is a row of `prototypes`
/// (m x d) and belongs to the class in `proto_class`. The linear layer maps
/// the m distances to K logits and has no bias.
struct PrototypeHead {
  Matrix projection;
  Matrix prototypes;
  std::vector<int> proto_class;
  Matrix linear_weights;
  bool normalize_distances = true;
  double epsilon = math::kDefaultNormEpsilon;

  Eigen::Index input_dim() const { return projection.rows(); }
  Eigen::Index latent_dim() const { return projection.cols(); }
  Eigen::Index num_prototypes() const { return prototypes.rows(); }
  Eigen::Index num_classes() const { return linear_weights.rows(); }
  bool initialized() const { return prototypes.size() > 0 && linear_weights.size() > 0; }

  Matrix project(const Matrix& x) const;

  /// Checks the structural invariants (shapes, finiteness, class labels).
  void check() const;
};

/// Everything the forward pass computed; enough to reconstruct each decision.
struct ForwardTrace {
  Matrix projected;
  DistanceMatrix raw_distances;
  DistanceMatrix normalized_distances;  // equals raw_distances when normalization is off
  Matrix logits;
  Matrix probabilities;
};

struct Prediction {
  std::vector<int> labels;
  Matrix probabilities;
};

/// Xavier-uniform prototypes and linear weights; identity projection when the
/// latent and input dimensions agree. The last `neg_prototypes` prototypes are
/// assigned class 0, the rest are spread over the positive classes.
PrototypeHead init_head(const TrainConfig& config, Eigen::Index input_dim, std::uint64_t seed);

ForwardTrace forward(const PrototypeHead& head, const Matrix& x);

Prediction predict_batch(const PrototypeHead& head, const Matrix& x);

/// Row-wise argmax with lowest-index tie-break.
std::vector<int> argmax_rows(const Matrix& m);

}  // namespace protex
