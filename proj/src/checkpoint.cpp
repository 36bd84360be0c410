#include "protex/checkpoint.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "protex/errors.hpp"

namespace protex {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

constexpr const char* kMagic = "PTEXCKPT";

void write_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
    out << '\n';
  }
}

// Key/value view of TrainConfig so that writing and reading share one field list.
struct ConfigField {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

[[noreturn]] void corrupt(const std::string& path, const std::string& what) {
  throw CorruptedFileError("checkpoint '" + path + "' is corrupted: " + what);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

long long parse_int(const std::string& s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("bad integer '" + s + "'");
  return v;
}

const std::vector<ConfigField>& config_fields() {
  auto int_field = [](const char* key, int TrainConfig::*member) {
    return ConfigField{key, [member](const TrainConfig& c) { return std::to_string(c.*member); },
                       [member](TrainConfig& c, const std::string& v) { c.*member = static_cast<int>(parse_int(v)); }};
  };
  auto dbl_field = [](const char* key, double TrainConfig::*member) {
    return ConfigField{key, [member](const TrainConfig& c) { return format_double(c.*member); },
                       [member](TrainConfig& c, const std::string& v) { c.*member = parse_double(v); }};
  };
  static const std::vector<ConfigField> fields = {
      {"algorithm", [](const TrainConfig& c) { return to_string(c.algorithm); },
       [](TrainConfig& c, const std::string& v) { c.algorithm = algorithm_from_string(v); }},
      int_field("num_prototypes", &TrainConfig::num_prototypes),
      int_field("neg_prototypes", &TrainConfig::neg_prototypes),
      int_field("num_classes", &TrainConfig::num_classes),
      int_field("latent_dim", &TrainConfig::latent_dim),
      int_field("iterations", &TrainConfig::iterations),
      int_field("delta_epochs", &TrainConfig::delta_epochs),
      int_field("gamma_epochs", &TrainConfig::gamma_epochs),
      int_field("start_class", &TrainConfig::start_class),
      dbl_field("lambda1", &TrainConfig::lambda1),
      dbl_field("lambda2", &TrainConfig::lambda2),
      dbl_field("lambda_interleaved", &TrainConfig::lambda_interleaved),
      dbl_field("lr", &TrainConfig::lr),
      dbl_field("encoder_lr", &TrainConfig::encoder_lr),
      dbl_field("beta1", &TrainConfig::beta1),
      dbl_field("beta2", &TrainConfig::beta2),
      dbl_field("adam_epsilon", &TrainConfig::adam_epsilon),
      dbl_field("weight_decay", &TrainConfig::weight_decay),
      int_field("batch_size", &TrainConfig::batch_size),
      {"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
       [](TrainConfig& c, const std::string& v) { c.seed = std::stoull(v); }},
      {"normalize", [](const TrainConfig& c) { return std::string(c.normalize ? "1" : "0"); },
       [](TrainConfig& c, const std::string& v) { c.normalize = parse_int(v) != 0; }},
      dbl_field("norm_epsilon", &TrainConfig::norm_epsilon),
      int_field("patience", &TrainConfig::patience),
  };
  return fields;
}

class LineReader {
 public:
  LineReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  std::vector<std::string> next() {
    std::string line;
    if (!std::getline(in_, line)) corrupt(path_, "unexpected end of file after line " + std::to_string(lineno_));
    ++lineno_;
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    for (std::string tok; ss >> tok;) tokens.push_back(tok);
    return tokens;
  }
  std::size_t line() const { return lineno_; }

 private:
  std::istream& in_;
  std::string path_;
  std::size_t lineno_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const PrototypeHead& head, const TrainConfig& config,
                     const OptimizerState* optimizer) {
  head.check();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << kMagic << ' ' << kCheckpointVersion << '\n';
  for (const auto& f : config_fields()) out << "config " << f.key << ' ' << f.get(config) << '\n';
  out << "head normalize " << (head.normalize_distances ? 1 : 0) << '\n';
  out << "head epsilon " << format_double(head.epsilon) << '\n';
  out << "proto_class " << head.proto_class.size();
  for (int c : head.proto_class) out << ' ' << c;
  out << '\n';
  write_matrix(out, "projection", head.projection);
  write_matrix(out, "prototypes", head.prototypes);
  write_matrix(out, "linear", head.linear_weights);
  if (optimizer != nullptr) {
    const AdamWParams& p = optimizer->params;
    out << "optimizer " << format_double(p.lr) << ' ' << format_double(p.beta1) << ' ' << format_double(p.beta2)
        << ' ' << format_double(p.epsilon) << ' ' << format_double(p.weight_decay) << '\n';
    const std::pair<const char*, const MomentState*> groups[] = {
        {"projection", &optimizer->projection}, {"prototypes", &optimizer->prototypes}, {"linear", &optimizer->linear}};
    for (const auto& [name, state] : groups) {
      out << "steps " << name << ' ' << state->row_steps.size();
      for (auto s : state->row_steps) out << ' ' << s;
      out << '\n';
      write_matrix(out, std::string("opt.") + name + ".first", state->first);
      write_matrix(out, std::string("opt.") + name + ".second", state->second);
    }
  }
  out << "end\n";
  out.flush();
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  LineReader reader(in, path);

  const auto header = reader.next();
  if (header.size() != 2 || header[0] != kMagic) corrupt(path, "missing PTEXCKPT header");
  long long version = 0;
  try {
    version = parse_int(header[1]);
  } catch (const std::invalid_argument&) {
    corrupt(path, "unreadable format version");
  }
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint '" + path + "' has format version " + std::to_string(version) +
                               ", this build reads version " + std::to_string(kCheckpointVersion));
  }

  Checkpoint ck;
  std::map<std::string, Matrix> matrices;
  std::map<std::string, std::vector<std::int64_t>> steps;
  std::optional<AdamWParams> opt_params;
  bool saw_end = false;
  try {
    const auto& fields = config_fields();
    while (!saw_end) {
      const auto tok = reader.next();
      if (tok.empty()) corrupt(path, "blank line " + std::to_string(reader.line()));
      const std::string& kind = tok[0];
      if (kind == "end") {
        saw_end = true;
      } else if (kind == "config" && tok.size() == 3) {
        auto it = std::find_if(fields.begin(), fields.end(), [&](const ConfigField& f) { return tok[1] == f.key; });
        if (it == fields.end()) corrupt(path, "unknown config key '" + tok[1] + "'");
        it->set(ck.config, tok[2]);
      } else if (kind == "head" && tok.size() == 3 && tok[1] == "normalize") {
        ck.head.normalize_distances = parse_int(tok[2]) != 0;
      } else if (kind == "head" && tok.size() == 3 && tok[1] == "epsilon") {
        ck.head.epsilon = parse_double(tok[2]);
      } else if (kind == "proto_class" && tok.size() >= 2) {
        const auto m = static_cast<std::size_t>(parse_int(tok[1]));
        if (tok.size() != m + 2) corrupt(path, "proto_class length mismatch");
        ck.head.proto_class.clear();
        for (std::size_t j = 0; j < m; ++j) ck.head.proto_class.push_back(static_cast<int>(parse_int(tok[j + 2])));
      } else if (kind == "matrix" && tok.size() == 4) {
        const auto rows = parse_int(tok[2]);
        const auto cols = parse_int(tok[3]);
        if (rows < 0 || cols < 0 || rows * cols > (1LL << 30)) corrupt(path, "implausible matrix shape");
        Matrix m(rows, cols);
        for (long long i = 0; i < rows; ++i) {
          const auto vals = reader.next();
          if (static_cast<long long>(vals.size()) != cols) {
            corrupt(path, "matrix '" + tok[1] + "' row " + std::to_string(i) + " has wrong length");
          }
          for (long long j = 0; j < cols; ++j) m(i, j) = parse_double(vals[static_cast<std::size_t>(j)]);
        }
        matrices[tok[1]] = std::move(m);
      } else if (kind == "optimizer" && tok.size() == 6) {
        opt_params = AdamWParams{parse_double(tok[1]), parse_double(tok[2]), parse_double(tok[3]),
                                 parse_double(tok[4]), parse_double(tok[5])};
      } else if (kind == "steps" && tok.size() >= 3) {
        const auto count = static_cast<std::size_t>(parse_int(tok[2]));
        if (tok.size() != count + 3) corrupt(path, "step list length mismatch");
        std::vector<std::int64_t> s;
        for (std::size_t i = 0; i < count; ++i) s.push_back(parse_int(tok[i + 3]));
        steps[tok[1]] = std::move(s);
      } else {
        corrupt(path, "unrecognized line " + std::to_string(reader.line()));
      }
    }
  } catch (const std::invalid_argument& e) {
    corrupt(path, std::string(e.what()) + " near line " + std::to_string(reader.line()));
  } catch (const std::out_of_range& e) {
    corrupt(path, "value out of range near line " + std::to_string(reader.line()));
  }

  auto take = [&](const std::string& name) {
    auto it = matrices.find(name);
    if (it == matrices.end()) corrupt(path, "missing matrix '" + name + "'");
    return it->second;
  };
  ck.head.projection = take("projection");
  ck.head.prototypes = take("prototypes");
  ck.head.linear_weights = take("linear");
  try {
    ck.head.check();
  } catch (const Error& e) {
    corrupt(path, e.what());
  }

  if (opt_params) {
    OptimizerState opt;
    opt.params = *opt_params;
    const std::pair<const char*, MomentState*> groups[] = {
        {"projection", &opt.projection}, {"prototypes", &opt.prototypes}, {"linear", &opt.linear}};
    for (const auto& [name, state] : groups) {
      state->first = take(std::string("opt.") + name + ".first");
      state->second = take(std::string("opt.") + name + ".second");
      auto it = steps.find(name);
      if (it == steps.end() || static_cast<Eigen::Index>(it->second.size()) != state->first.rows()) {
        corrupt(path, std::string("missing or malformed step counts for '") + name + "'");
      }
      state->row_steps = it->second;
    }
    ck.optimizer = std::move(opt);
  }
  return ck;
}

}  // namespace protex
