#include "protex/explain.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <numeric>
#include <set>

#include "protex/errors.hpp"

namespace protex {

namespace {

// Indices of the k smallest entries of `values`, ascending, ties by index.
std::vector<std::size_t> k_smallest(const Eigen::Ref<const Vector>& values, std::size_t k) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(values.size()));
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double va = values(static_cast<Eigen::Index>(a));
                      const double vb = values(static_cast<Eigen::Index>(b));
                      return va < vb || (va == vb && a < b);
                    });
  idx.resize(k);
  return idx;
}

}  // namespace

int Explanation::recompute_label(const Matrix& linear_weights) const {
  const Eigen::Map<const Vector> d(decision_distances.data(), static_cast<Eigen::Index>(decision_distances.size()));
  const Matrix logits = (linear_weights * d).transpose();
  return argmax_rows(logits).front();
}

std::vector<std::vector<std::size_t>> nearest_examples_per_prototype(const PrototypeHead& head,
                                                                     const Matrix& train_features, std::size_t k) {
  head.check();
  if (k > static_cast<std::size_t>(train_features.rows())) {
    throw ConfigError("cannot take " + std::to_string(k) + " nearest examples from " +
                      std::to_string(train_features.rows()));
  }
  const DistanceMatrix d = math::squared_l2_distance_matrix(head.project(train_features), head.prototypes);
  std::vector<std::vector<std::size_t>> out;
  out.reserve(static_cast<std::size_t>(d.cols()));
  for (Eigen::Index j = 0; j < d.cols(); ++j) out.push_back(k_smallest(d.values.col(j), k));
  return out;
}

ExemplarIndex::ExemplarIndex(const PrototypeHead& head, const LabeledDataset& dataset, const LabeledMatrix& train,
                             std::size_t per_prototype)
    : per_prototype_(per_prototype) {
  head.check();
  const std::size_t k = std::min(per_prototype, train.size());
  if (k == 0) {
    exemplars_.resize(static_cast<std::size_t>(head.num_prototypes()));
    return;
  }
  const DistanceMatrix d = math::squared_l2_distance_matrix(head.project(train.features), head.prototypes);
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    std::vector<Exemplar> list;
    for (std::size_t r : k_smallest(d.values.col(j), k)) {
      const Example& ex = dataset.examples.at(train.rows.at(r));
      list.push_back({r, ex.id, ex.text, ex.label, ex.subcategory, d.values(static_cast<Eigen::Index>(r), j)});
    }
    exemplars_.push_back(std::move(list));
  }
}

Explanation explain_prediction(const PrototypeHead& head, const ExemplarIndex& index,
                               const Eigen::Ref<const Eigen::RowVectorXd>& x, const std::string& example_id,
                               std::size_t top_k) {
  if (!head.initialized()) throw StateError("cannot explain with an uninitialized head");
  if (top_k == 0) throw ConfigError("top_k must be >= 1");
  const ForwardTrace t = forward(head, Matrix(x));

  Explanation e;
  e.example_id = example_id;
  e.predicted = argmax_rows(t.probabilities).front();
  e.probabilities.assign(t.probabilities.data(), t.probabilities.data() + t.probabilities.size());
  const Vector decision = t.normalized_distances.values.row(0).transpose();
  e.decision_distances.assign(decision.data(), decision.data() + decision.size());

  for (std::size_t j : k_smallest(decision, top_k)) {
    const auto col = static_cast<Eigen::Index>(j);
    RankedPrototype rp;
    rp.index = col;
    rp.cls = head.proto_class[j];
    rp.distance = decision(col);
    for (Eigen::Index c = 0; c < head.num_classes(); ++c) rp.weights.push_back(head.linear_weights(c, col));
    rp.contribution = head.linear_weights(e.predicted, col) * rp.distance;
    rp.exemplars = index.for_prototype(col);
    e.prototypes.push_back(std::move(rp));
  }
  return e;
}

Explanation explain_prediction(const PrototypeHead& head, const LabeledDataset& dataset, const LabeledMatrix& train,
                               const Eigen::Ref<const Eigen::RowVectorXd>& x, const std::string& example_id,
                               std::size_t top_k, std::size_t exemplars_per_prototype) {
  if (!head.initialized()) throw StateError("cannot explain with an uninitialized head");
  return explain_prediction(head, ExemplarIndex(head, dataset, train, exemplars_per_prototype), x, example_id,
                            top_k);
}

Segregation segregation_metric(const std::vector<std::vector<std::size_t>>& nearest) {
  std::map<std::size_t, std::size_t> owners;
  for (const auto& list : nearest) {
    // an example listed twice by one prototype still counts once for it
    for (std::size_t r : std::set<std::size_t>(list.begin(), list.end())) ++owners[r];
  }
  Segregation s;
  s.unique_count = owners.size();
  s.exactly_one_prototype_count =
      static_cast<std::size_t>(std::count_if(owners.begin(), owners.end(), [](const auto& kv) { return kv.second == 1; }));
  return s;
}

AssociationMatrix association_matrix(const PrototypeHead& head, const LabeledMatrix& data,
                                     std::span<const std::optional<std::string>> subcategories) {
  head.check();
  if (subcategories.size() != data.size()) throw ShapeError("association_matrix: subcategory list length mismatch");
  std::map<std::string, std::vector<std::size_t>> positives;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == 0) {
      negatives.push_back(i);
    } else {
      positives[subcategories[i].value_or("positive")].push_back(i);
    }
  }

  AssociationMatrix out;
  std::vector<const std::vector<std::size_t>*> members;
  for (const auto& [name, rows] : positives) {
    out.groups.push_back(name);
    members.push_back(&rows);
  }
  if (negatives.empty()) {
    std::cerr << "warning: no negative examples, association row omitted\n";
  } else {
    out.groups.push_back("negative");
    members.push_back(&negatives);
  }

  const DistanceMatrix d =
      data.empty() ? DistanceMatrix() : math::squared_l2_distance_matrix(head.project(data.features), head.prototypes);
  out.fractions = Matrix::Zero(static_cast<Eigen::Index>(members.size()), head.num_prototypes());
  for (std::size_t g = 0; g < members.size(); ++g) {
    for (std::size_t i : *members[g]) {
      const auto row = static_cast<Eigen::Index>(i);
      const Eigen::Index closest = math::masked_min(d.values.row(row), d.mask.row(row)).second;
      out.fractions(static_cast<Eigen::Index>(g), closest) += 1.0;
    }
    out.fractions.row(static_cast<Eigen::Index>(g)) /= static_cast<double>(members[g]->size());
  }
  return out;
}

Vector reciprocal_distribution(const Eigen::Ref<const Vector>& distances, double* normalizer) {
  if (distances.size() == 0) throw EmptySelectionError("reciprocal_distribution: no distances");
  if ((distances.array() < 0.0).any()) throw DataError("reciprocal_distribution: negative distance");
  const auto zeros = (distances.array() == 0.0).count();
  Vector out(distances.size());
  if (zeros > 0) {
    for (Eigen::Index i = 0; i < distances.size(); ++i) {
      out(i) = distances(i) == 0.0 ? 1.0 / static_cast<double>(zeros) : 0.0;
    }
    if (normalizer != nullptr) *normalizer = 0.0;
    return out;
  }
  const Vector inv = distances.cwiseInverse();
  const double z = 1.0 / inv.sum();
  if (normalizer != nullptr) *normalizer = z;
  return z * inv;
}

SoftClusterModel soft_cluster_build(const Matrix& distances, std::span<const int> labels) {
  if (static_cast<std::size_t>(distances.cols()) != labels.size()) {
    throw ShapeError("soft_cluster_build: label count does not match distance columns");
  }
  SoftClusterModel model;
  model.pi.resize(distances.rows(), distances.cols());
  model.z.resize(distances.rows());
  model.psi.resize(distances.rows());
  Vector y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i)) = labels[i] == 1 ? 1.0 : 0.0;
  for (Eigen::Index j = 0; j < distances.rows(); ++j) {
    double z = 0.0;
    model.pi.row(j) = reciprocal_distribution(distances.row(j).transpose(), &z).transpose();
    model.z(j) = z;
    model.psi(j) = model.pi.row(j).dot(y);
  }
  return model;
}

SoftClusterModel soft_cluster_build(const PrototypeHead& head, const Matrix& train_features,
                                    std::span<const int> labels) {
  head.check();
  const DistanceMatrix d = math::squared_l2_distance_matrix(head.project(train_features), head.prototypes);
  return soft_cluster_build(Matrix(d.values.transpose()), labels);
}

TestPosterior soft_cluster_infer(const SoftClusterModel& model, const Eigen::Ref<const Vector>& distances) {
  if (distances.size() != model.psi.size()) throw ShapeError("soft_cluster_infer: expected one distance per prototype");
  TestPosterior post;
  post.theta = reciprocal_distribution(distances);
  post.p_positive = post.theta.dot(model.psi);
  return post;
}

TestPosterior soft_cluster_infer(const SoftClusterModel& model, const PrototypeHead& head,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  head.check();
  const DistanceMatrix d = math::squared_l2_distance_matrix(head.project(Matrix(x)), head.prototypes);
  return soft_cluster_infer(model, d.values.row(0).transpose());
}

std::vector<int> knn_classify(const Matrix& train_features, std::span<const int> train_labels,
                              const Matrix& test_features, std::size_t k) {
  if (static_cast<std::size_t>(train_features.rows()) != train_labels.size()) {
    throw ShapeError("knn: training features and labels differ in length");
  }
  if (k == 0 || k > train_labels.size()) throw ConfigError("knn: k must lie in [1, n]");
  const DistanceMatrix d = math::squared_l2_distance_matrix(test_features, train_features);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(test_features.rows()));
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    std::size_t positive = 0;
    for (std::size_t r : k_smallest(d.values.row(i).transpose(), k)) positive += train_labels[r] == 1 ? 1 : 0;
    out.push_back(2 * positive > k ? 1 : 0);
  }
  return out;
}

}  // namespace protex
