#include "protex/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "protex/errors.hpp"

namespace protex {

using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
    case Split::Unassigned: break;
  }
  return "";
}

std::optional<Split> split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

std::vector<int> LabeledDataset::labels() const {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

std::vector<std::size_t> LabeledDataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].split == s) out.push_back(i);
  }
  return out;
}

std::optional<std::size_t> LabeledDataset::find(const std::string& id) const {
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].id == id) return i;
  }
  return std::nullopt;
}

LabeledDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  LabeledDataset ds;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!rec.is_object()) throw ParseError(lineno, "record is not an object");
    Example ex;
    if (!rec.contains("id") || !rec["id"].is_string()) throw ParseError(lineno, "missing string field 'id'");
    ex.id = rec["id"].get<std::string>();
    if (rec.contains("text")) {
      if (!rec["text"].is_string()) throw ParseError(lineno, "field 'text' must be a string");
      ex.text = rec["text"].get<std::string>();
    }
    if (!rec.contains("label") || !rec["label"].is_number_integer()) {
      throw ParseError(lineno, "missing integer field 'label'");
    }
    const auto label = rec["label"].get<long long>();
    if (label != 0 && label != 1) throw ParseError(lineno, "label " + std::to_string(label) + " is not 0 or 1");
    ex.label = static_cast<int>(label);
    if (rec.contains("subcategory") && !rec["subcategory"].is_null()) {
      if (!rec["subcategory"].is_string()) throw ParseError(lineno, "field 'subcategory' must be a string");
      ex.subcategory = rec["subcategory"].get<std::string>();
    }
    if (rec.contains("split") && !rec["split"].is_null()) {
      const auto s = rec["split"].is_string() ? split_from_string(rec["split"].get<std::string>()) : std::nullopt;
      if (!s) throw ParseError(lineno, "split must be one of train, dev, test");
      ex.split = *s;
    }
    if (!seen.insert(ex.id).second) throw ParseError(lineno, "duplicate id '" + ex.id + "'");
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

void save_dataset(const LabeledDataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset '" + path + "'");
  for (const auto& e : dataset.examples) {
    json rec = {{"id", e.id}, {"text", e.text}, {"label", e.label}};
    if (e.subcategory) rec["subcategory"] = *e.subcategory;
    if (e.split != Split::Unassigned) rec["split"] = to_string(e.split);
    out << rec.dump() << '\n';
  }
  if (!out) throw DataError("failed writing dataset '" + path + "'");
}

void assign_splits(LabeledDataset& dataset, double train_frac, double dev_frac, std::uint64_t seed) {
  if (train_frac < 0 || dev_frac < 0 || train_frac + dev_frac > 1.0) {
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  }
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.examples[i].split == Split::Unassigned) free.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(free.begin(), free.end(), rng);
  const auto n = static_cast<double>(free.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * train_frac));
  const auto n_dev = static_cast<std::size_t>(std::llround(n * dev_frac));
  for (std::size_t r = 0; r < free.size(); ++r) {
    dataset.examples[free[r]].split = r < n_train ? Split::Train : r < n_train + n_dev ? Split::Dev : Split::Test;
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "PTXE I/O assumes a little-endian host");

constexpr char kPtxeMagic[4] = {'P', 'T', 'X', 'E'};
constexpr std::uint32_t kPtxeVersion = 1;

template <typename T>
void read_pod(std::istream& in, T& v, const std::string& path, const char* what) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CountMismatchError("'" + path + "': truncated while reading " + what);
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

EmbeddingMatrix read_ptxe(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kPtxeMagic, 4) != 0) {
    throw MagicMismatchError("'" + path + "' is not a PTXE file (bad magic)");
  }
  std::uint32_t version = 0;
  std::uint64_t n = 0;
  std::uint64_t dim = 0;
  read_pod(in, version, path, "version");
  if (version != kPtxeVersion) {
    throw DataError("'" + path + "': unsupported PTXE version " + std::to_string(version));
  }
  read_pod(in, n, path, "row count");
  read_pod(in, dim, path, "dimension");
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 32;
  if (n >= kLimit || dim >= kLimit || n * dim >= kLimit) throw DataError("'" + path + "': implausible header");

  EmbeddingMatrix e;
  e.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::vector<float> row(dim);
  for (std::uint64_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (!in) throw CountMismatchError("'" + path + "': fewer vector rows than the declared " + std::to_string(n));
    for (std::uint64_t j = 0; j < dim; ++j) {
      if (!std::isfinite(row[j])) {
        throw NonFiniteError("'" + path + "': non-finite value at row " + std::to_string(i));
      }
      e.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
  }
  e.ids.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint32_t len = 0;
    read_pod(in, len, path, "id length");
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (!in) throw CountMismatchError("'" + path + "': truncated id " + std::to_string(i));
    e.ids.push_back(std::move(id));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CountMismatchError("'" + path + "': trailing bytes after the declared " + std::to_string(n) + " rows");
  }
  return e;
}

void write_ptxe(const EmbeddingMatrix& e, const std::string& path) {
  if (static_cast<std::size_t>(e.vectors.rows()) != e.ids.size()) {
    throw ShapeError("embedding rows and ids differ in length");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embeddings '" + path + "'");
  out.write(kPtxeMagic, 4);
  write_pod(out, kPtxeVersion);
  write_pod(out, static_cast<std::uint64_t>(e.vectors.rows()));
  write_pod(out, static_cast<std::uint64_t>(e.vectors.cols()));
  for (Eigen::Index i = 0; i < e.vectors.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.vectors.cols(); ++j) write_pod(out, e.vectors(i, j));
  }
  for (const auto& id : e.ids) {
    write_pod(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  if (!out) throw DataError("failed writing embeddings '" + path + "'");
}

EmbeddingMatrix load_embeddings(const std::string& path, const LabeledDataset& dataset) {
  EmbeddingMatrix e = read_ptxe(path);
  if (e.size() != dataset.size()) {
    throw CountMismatchError("'" + path + "' has " + std::to_string(e.size()) + " rows, dataset has " +
                             std::to_string(dataset.size()));
  }
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e.ids[i] != dataset.examples[i].id) {
      throw DataError("'" + path + "': row " + std::to_string(i) + " id '" + e.ids[i] +
                      "' does not match dataset id '" + dataset.examples[i].id + "'");
    }
  }
  return e;
}

LabeledMatrix gather(const LabeledDataset& dataset, const EmbeddingMatrix& embeddings,
                     std::span<const std::size_t> rows) {
  LabeledMatrix out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), embeddings.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= dataset.size() || rows[r] >= embeddings.size()) throw ShapeError("gather: row out of range");
    out.features.row(static_cast<Eigen::Index>(r)) =
        embeddings.vectors.row(static_cast<Eigen::Index>(rows[r])).cast<double>();
    out.labels.push_back(dataset.examples[rows[r]].label);
  }
  out.rows.assign(rows.begin(), rows.end());
  return out;
}

LabeledMatrix gather(const LabeledDataset& dataset, const EmbeddingMatrix& embeddings, Split split) {
  const auto rows = dataset.indices(split);
  return gather(dataset, embeddings, rows);
}

namespace {

// Draws from a class pool by walking shuffled permutations; a new permutation
// starts only when the current one is exhausted.
class PoolSampler {
 public:
  PoolSampler(std::vector<std::size_t> pool, std::mt19937_64& rng) : pool_(std::move(pool)), rng_(rng) {
    reshuffle();
  }
  std::size_t next() {
    if (pos_ == pool_.size()) reshuffle();
    return pool_[pos_++];
  }

 private:
  void reshuffle() {
    std::shuffle(pool_.begin(), pool_.end(), rng_);
    pos_ = 0;
  }
  std::vector<std::size_t> pool_;
  std::mt19937_64& rng_;
  std::size_t pos_ = 0;
};

}  // namespace

BatchPlan balanced_batches(std::span<const int> labels, std::size_t batch_size, std::mt19937_64& rng) {
  if (batch_size < 2) throw ConfigError("batch size must be >= 2");
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw ConfigError("balanced batching needs examples of both classes");

  const std::size_t pos_share = (batch_size + 1) / 2;
  const std::size_t neg_share = batch_size / 2;
  const bool pos_major = pos.size() * neg_share >= neg.size() * pos_share;
  const std::size_t major_count = pos_major ? pos.size() : neg.size();
  const std::size_t major_share = pos_major ? pos_share : neg_share;
  const std::size_t num_batches = std::max<std::size_t>(1, major_count / major_share);

  PoolSampler pos_sampler(std::move(pos), rng);
  PoolSampler neg_sampler(std::move(neg), rng);
  BatchPlan plan;
  plan.batches.resize(num_batches);
  for (auto& batch : plan.batches) {
    batch.reserve(batch_size);
    for (std::size_t k = 0; k < pos_share; ++k) batch.push_back(pos_sampler.next());
    for (std::size_t k = 0; k < neg_share; ++k) batch.push_back(neg_sampler.next());
  }
  return plan;
}

BatchPlan balanced_batches(std::span<const int> labels, std::size_t batch_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BatchPlan plan = balanced_batches(labels, batch_size, rng);
  plan.seed = seed;
  return plan;
}

void SyntheticSpec::validate() const {
  if (n < 4) throw ConfigError("synthetic: n must be >= 4");
  if (dim < 1) throw ConfigError("synthetic: dimension must be >= 1");
  if (!(pos_frac > 0.0 && pos_frac < 1.0)) throw ConfigError("synthetic: pos_frac must lie in (0, 1)");
  if (signal_dims < 1 || signal_dims > dim) throw ConfigError("synthetic: signal_dims must lie in [1, dim]");
  if (noise_scale < 0.0) throw ConfigError("synthetic: noise_scale must be >= 0");
  if (clusters < 1) throw ConfigError("synthetic: clusters must be >= 1");
  if (separation <= 0.0) throw ConfigError("synthetic: separation must be > 0");
  if (spread < 0.0) throw ConfigError("synthetic: spread must be >= 0");
  if (train_frac < 0 || dev_frac < 0 || train_frac + dev_frac > 1.0) {
    throw ConfigError("synthetic: split fractions must be non-negative and sum to at most 1");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Cluster offsets: a shared foreground direction of norm `separation` plus a
  // per-cluster direction of norm `spread`, all orthonormal when they fit.
  const Eigen::Index ndir = spec.clusters + 1;
  Matrix raw(ndir, spec.signal_dims);
  for (Eigen::Index c = 0; c < raw.rows(); ++c) {
    for (Eigen::Index j = 0; j < raw.cols(); ++j) raw(c, j) = normal(rng);
  }
  if (ndir <= spec.signal_dims) {
    Eigen::HouseholderQR<Matrix> qr(raw.transpose());
    const Matrix q = qr.householderQ() * Matrix::Identity(spec.signal_dims, ndir);
    raw = q.transpose();
  }
  Matrix centers = Matrix::Zero(spec.clusters, spec.dim);
  const Eigen::RowVectorXd shared = raw.row(0).normalized() * spec.separation;
  for (Eigen::Index c = 0; c < spec.clusters; ++c) {
    centers.row(c).head(spec.signal_dims) = shared + raw.row(c + 1).normalized() * spec.spread;
  }

  const std::size_t n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(spec.n) * spec.pos_frac));
  std::vector<int> labels(spec.n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(std::min(n_pos, spec.n)), 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  SyntheticData out;
  out.centers = centers;
  out.embeddings.vectors.resize(static_cast<Eigen::Index>(spec.n), spec.dim);
  std::uniform_int_distribution<int> pick_cluster(0, spec.clusters - 1);
  for (std::size_t i = 0; i < spec.n; ++i) {
    Example ex;
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%06zu", i);
    ex.id = id;
    ex.label = labels[i];
    Eigen::RowVectorXd x(spec.dim);
    for (Eigen::Index j = 0; j < spec.dim; ++j) x(j) = spec.noise_scale * normal(rng);
    if (ex.label == 1) {
      const int c = pick_cluster(rng);
      x += centers.row(c);
      ex.subcategory = "cluster_" + std::to_string(c);
      ex.text = "synthetic foreground example " + std::to_string(i) + " from cluster " + std::to_string(c);
    } else {
      ex.text = "synthetic background example " + std::to_string(i);
    }
    out.embeddings.vectors.row(static_cast<Eigen::Index>(i)) = x.cast<float>();
    out.embeddings.ids.push_back(ex.id);
    out.dataset.examples.push_back(std::move(ex));
  }
  assign_splits(out.dataset, spec.train_frac, spec.dev_frac, spec.seed ^ 0x5eedULL);
  return out;
}

}  // namespace protex
