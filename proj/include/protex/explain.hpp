#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protex/core_math.hpp"
#include "protex/data.hpp"
#include "protex/model.hpp"

namespace protex {

struct Exemplar {
  std::size_t row = 0;  // index into the training set
  std::string id;
  std::string text;
  int label = 0;
  std::optional<std::string> subcategory;
  double distance = 0.0;  // squared distance to the prototype in the latent space
};

struct RankedPrototype {
  Eigen::Index index = 0;
  int cls = 0;
  double distance = 0.0;      // the value the linear layer consumed
  std::vector<double> weights;  // linear weights of this prototype, one per class
  double contribution = 0.0;  // weights[predicted] * distance
  std::vector<Exemplar> exemplars;
};

struct Explanation {
  std::string example_id;
  int predicted = 0;
  std::vector<double> probabilities;
  std::vector<RankedPrototype> prototypes;  // top_k, ascending decision-path distance
  std::vector<double> decision_distances;   // all m values, indexed by prototype

  /// Label implied by decision_distances and the given linear weights alone.
  int recompute_label(const Matrix& linear_weights) const;
};

/// The nearest training exemplars of every prototype, computed once per head.
class ExemplarIndex {
 public:
  ExemplarIndex(const PrototypeHead& head, const LabeledDataset& dataset, const LabeledMatrix& train,
                std::size_t per_prototype);

  const std::vector<Exemplar>& for_prototype(Eigen::Index j) const {
    return exemplars_[static_cast<std::size_t>(j)];
  }
  std::size_t per_prototype() const { return per_prototype_; }

 private:
  std::size_t per_prototype_;
  std::vector<std::vector<Exemplar>> exemplars_;
};

/// For each prototype, the k training rows closest in the latent space
/// (ascending squared distance, ties by row index).
std::vector<std::vector<std::size_t>> nearest_examples_per_prototype(const PrototypeHead& head,
                                                                     const Matrix& train_features, std::size_t k);

/// Ranks prototypes by the distances the classifier consumed for `x` and
/// attaches the indexed exemplars to the `top_k` closest.
Explanation explain_prediction(const PrototypeHead& head, const ExemplarIndex& index,
                               const Eigen::Ref<const Eigen::RowVectorXd>& x, const std::string& example_id,
                               std::size_t top_k);

Explanation explain_prediction(const PrototypeHead& head, const LabeledDataset& dataset, const LabeledMatrix& train,
                               const Eigen::Ref<const Eigen::RowVectorXd>& x, const std::string& example_id,
                               std::size_t top_k, std::size_t exemplars_per_prototype);

struct Segregation {
  std::size_t unique_count = 0;
  std::size_t exactly_one_prototype_count = 0;
};

Segregation segregation_metric(const std::vector<std::vector<std::size_t>>& nearest);

/// Rows: sorted positive subcategories, then "negative". Columns: prototypes.
/// Entry = fraction of the group's examples whose closest prototype is j.
struct AssociationMatrix {
  std::vector<std::string> groups;
  Matrix fractions;
};

AssociationMatrix association_matrix(const PrototypeHead& head, const LabeledMatrix& data,
                                     std::span<const std::optional<std::string>> subcategories);

/// Prototypes as reciprocal-distance soft clusterings over training examples.
struct SoftClusterModel {
  Matrix pi;    // m x n, rows sum to 1
  Vector z;     // normalizers (0 when the zero-distance rule applied)
  Vector psi;   // P_j(y = 1)
};

struct TestPosterior {
  Vector theta;
  double p_positive = 0.0;
};

/// Reciprocal-distance distribution over entries of `distances`. A zero entry
/// takes all the mass, split evenly among the zero entries.
Vector reciprocal_distribution(const Eigen::Ref<const Vector>& distances, double* normalizer = nullptr);

/// `distances` is m x n (prototype j to training example i).
SoftClusterModel soft_cluster_build(const Matrix& distances, std::span<const int> labels);
SoftClusterModel soft_cluster_build(const PrototypeHead& head, const Matrix& train_features,
                                    std::span<const int> labels);

/// `distances` holds the m test-to-prototype distances.
TestPosterior soft_cluster_infer(const SoftClusterModel& model, const Eigen::Ref<const Vector>& distances);
TestPosterior soft_cluster_infer(const SoftClusterModel& model, const PrototypeHead& head,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// Majority vote of the k nearest training rows by squared L2 distance; a tie
/// votes negative.
std::vector<int> knn_classify(const Matrix& train_features, std::span<const int> train_labels,
                              const Matrix& test_features, std::size_t k);

}  // namespace protex
