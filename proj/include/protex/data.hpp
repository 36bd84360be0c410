#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "protex/core_math.hpp"

namespace protex {

enum class Split { Unassigned, Train, Dev, Test };

std::string to_string(Split s);
std::optional<Split> split_from_string(const std::string& s);

struct Example {
  std::string id;
  std::string text;
  int label = 0;
  std::optional<std::string> subcategory;
  Split split = Split::Unassigned;
};

struct LabeledDataset {
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  std::vector<int> labels() const;
  std::vector<std::size_t> indices(Split s) const;
  /// Row index of `id`, if present.
  std::optional<std::size_t> find(const std::string& id) const;
};

/// One embedding row per dataset example, in dataset order.
struct EmbeddingMatrix {
  Eigen::MatrixXf vectors;
  std::vector<std::string> ids;

  std::size_t size() const { return ids.size(); }
  Eigen::Index dim() const { return vectors.cols(); }
};

/// Features and labels for a subset of a dataset, in double precision.
struct LabeledMatrix {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::size_t> rows;  // indices into the source dataset

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

/// Line-delimited JSON records: {"id", "text", "label", "subcategory"?, "split"?}.
/// Throws ParseError carrying the offending line number.
LabeledDataset load_dataset(const std::string& path);
void save_dataset(const LabeledDataset& dataset, const std::string& path);

/// Randomly tags unassigned examples train/dev/test in the given proportions.
void assign_splits(LabeledDataset& dataset, double train_frac, double dev_frac, std::uint64_t seed);

/// Raw PTXE reader/writer. Layout (little-endian): "PTXE", u32 version = 1,
/// u64 n, u64 D, n*D f32 row-major, then n ids as u32 length + UTF-8 bytes.
EmbeddingMatrix read_ptxe(const std::string& path);
void write_ptxe(const EmbeddingMatrix& embeddings, const std::string& path);

/// read_ptxe plus row-count and id alignment checks against `dataset`.
EmbeddingMatrix load_embeddings(const std::string& path, const LabeledDataset& dataset);

LabeledMatrix gather(const LabeledDataset& dataset, const EmbeddingMatrix& embeddings,
                     std::span<const std::size_t> rows);
LabeledMatrix gather(const LabeledDataset& dataset, const EmbeddingMatrix& embeddings, Split split);

/// One epoch of class-balanced batches: each batch holds ceil(B/2) positives and
/// floor(B/2) negatives. The majority class is drawn without replacement (a
/// trailing remainder smaller than its share of a batch is dropped), the
/// minority with replacement.
struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;
  std::uint64_t seed = 0;
};

BatchPlan balanced_batches(std::span<const int> labels, std::size_t batch_size, std::mt19937_64& rng);
BatchPlan balanced_batches(std::span<const int> labels, std::size_t batch_size, std::uint64_t seed);

/// Asymmetric detection task: negatives are isotropic Gaussian background;
/// positives are background plus a shared offset of norm `separation` and one
/// of `clusters` subcategory offsets of norm `spread`, all on the first
/// `signal_dims` coordinates.
struct SyntheticSpec {
  std::size_t n = 2000;
  Eigen::Index dim = 16;
  double pos_frac = 0.35;
  Eigen::Index signal_dims = 8;
  double noise_scale = 1.75;
  int clusters = 4;
  double separation = 6.0;
  double spread = 3.0;
  double train_frac = 0.7;
  double dev_frac = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  LabeledDataset dataset;
  EmbeddingMatrix embeddings;
  Matrix centers;  // clusters x dim
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace protex
