#include "protex/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "protex/checkpoint.hpp"
#include "protex/data.hpp"
#include "protex/errors.hpp"
#include "protex/explain.hpp"
#include "protex/metrics.hpp"
#include "protex/train.hpp"

namespace protex::cli {

using nlohmann::json;

namespace {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

json config_to_json(const TrainConfig& c) {
  return {{"algorithm", to_string(c.algorithm)},
          {"num_prototypes", c.num_prototypes},
          {"neg_prototypes", c.neg_prototypes},
          {"num_classes", c.num_classes},
          {"latent_dim", c.latent_dim},
          {"iterations", c.iterations},
          {"delta_epochs", c.delta_epochs},
          {"gamma_epochs", c.gamma_epochs},
          {"start_class", c.start_class},
          {"lambda1", c.lambda1},
          {"lambda2", c.lambda2},
          {"lambda_interleaved", c.lambda_interleaved},
          {"lr", c.lr},
          {"encoder_lr", c.encoder_lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"normalize", c.normalize},
          {"norm_epsilon", c.norm_epsilon},
          {"patience", c.patience}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
    c.num_prototypes = j.at("num_prototypes");
    c.neg_prototypes = j.at("neg_prototypes");
    c.num_classes = j.at("num_classes");
    c.latent_dim = j.at("latent_dim");
    c.iterations = j.at("iterations");
    c.delta_epochs = j.at("delta_epochs");
    c.gamma_epochs = j.at("gamma_epochs");
    c.start_class = j.at("start_class");
    c.lambda1 = j.at("lambda1");
    c.lambda2 = j.at("lambda2");
    c.lambda_interleaved = j.at("lambda_interleaved");
    c.lr = j.at("lr");
    c.encoder_lr = j.value("encoder_lr", -1.0);
    c.beta1 = j.at("beta1");
    c.beta2 = j.at("beta2");
    c.adam_epsilon = j.at("adam_epsilon");
    c.weight_decay = j.at("weight_decay");
    c.batch_size = j.at("batch_size");
    c.seed = j.at("seed");
    c.normalize = j.at("normalize");
    c.norm_epsilon = j.at("norm_epsilon");
    c.patience = j.at("patience");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest config block is incomplete: ") + e.what());
  }
  return c;
}

json loss_to_json(const LossBreakdown& l) {
  return {{"ce", l.ce}, {"p1", l.p1}, {"p2", l.p2}, {"total", l.total}, {"lambda1", l.lambda1}, {"lambda2", l.lambda2}};
}

json report_to_json(const TrainReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"iteration", e.iteration},
                      {"epoch", e.epoch},
                      {"phase", e.phase},
                      {"target_class", e.target_class},
                      {"steps", e.steps},
                      {"loss", loss_to_json(e.mean_loss)}});
  }
  return {{"epochs", epochs},
          {"validation_macro_f1", r.validation_f1},
          {"iterations_run", r.iterations_run},
          {"best_iteration", r.best_iteration},
          {"best_validation_macro_f1", r.best_validation_f1},
          {"stopped_early", r.stopped_early}};
}

json eval_to_json(const std::string& name, const EvalResult& r) {
  json j = {{"model", name},
            {"f1_negative", r.f1_negative},
            {"f1_positive", r.f1_positive},
            {"f1_macro", r.f1_macro},
            {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}}};
  if (!r.subcategory_macro.empty()) j["subcategory_macro_f1"] = r.subcategory_macro;
  return j;
}

json explanation_to_json(const Explanation& e) {
  json protos = json::array();
  for (const auto& p : e.prototypes) {
    json ex = json::array();
    for (const auto& x : p.exemplars) {
      json item = {{"id", x.id}, {"text", x.text}, {"label", x.label}, {"distance", x.distance}};
      if (x.subcategory) item["subcategory"] = *x.subcategory;
      ex.push_back(item);
    }
    protos.push_back({{"prototype", p.index},
                      {"class", p.cls},
                      {"distance", p.distance},
                      {"weights", p.weights},
                      {"contribution", p.contribution},
                      {"exemplars", ex}});
  }
  return {{"id", e.example_id},
          {"predicted", e.predicted},
          {"probabilities", e.probabilities},
          {"prototypes", protos},
          {"decision_distances", e.decision_distances}};
}

std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t flag_value) {
  if (opt->count() > 0) return flag_value;
  if (const char* env = std::getenv("PTEX_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("PTEX_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return 0;
}

struct LoadedData {
  LabeledDataset dataset;
  EmbeddingMatrix embeddings;
};

LoadedData load_inputs(const std::string& data_path, const std::string& emb_path, std::uint64_t split_seed) {
  LoadedData d;
  d.dataset = load_dataset(data_path);
  d.embeddings = load_embeddings(emb_path, d.dataset);
  assign_splits(d.dataset, 0.7, 0.1, split_seed);
  return d;
}

Split parse_split(const std::string& s) {
  auto v = split_from_string(s);
  if (!v) throw ConfigError("split must be train, dev or test");
  return *v;
}

std::vector<std::optional<std::string>> subcategories_of(const LabeledDataset& ds, const LabeledMatrix& m) {
  std::vector<std::optional<std::string>> out;
  for (std::size_t r : m.rows) out.push_back(ds.examples[r].subcategory);
  return out;
}

void check_dims(const PrototypeHead& head, const EmbeddingMatrix& e) {
  if (head.input_dim() != e.dim()) {
    throw DataError("checkpoint expects " + std::to_string(head.input_dim()) + "-dimensional embeddings, got " +
                    std::to_string(e.dim()));
  }
}

std::ostream& open_output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw DataError("cannot write '" + path + "'");
  return file;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data, emb, out, report, manifest, from_manifest, algo = "interleaved";
  std::uint64_t seed = 0;
  bool no_normalize = false;
  TrainConfig config;
  CLI::Option* seed_opt = nullptr;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Train a prototype head");
  TrainConfig& c = a.config;
  cmd->add_option("--data", a.data, "Dataset (JSONL)");
  cmd->add_option("--emb", a.emb, "Embeddings (PTXE)");
  cmd->add_option("--out", a.out, "Checkpoint output path");
  cmd->add_option("--report", a.report, "Training report path (default <out>.report.json)");
  cmd->add_option("--manifest", a.manifest, "Run manifest path (default <out>.manifest.json)");
  cmd->add_option("--from-manifest", a.from_manifest, "Re-run exactly the configuration recorded in a manifest");
  cmd->add_option("--algo", a.algo, "simple | interleaved")->capture_default_str();
  a.seed_opt = cmd->add_option("--seed", a.seed, "Random seed (falls back to PTEX_SEED)");
  cmd->add_option("--num-prototypes", c.num_prototypes)->capture_default_str();
  cmd->add_option("--neg-prototypes", c.neg_prototypes)->capture_default_str();
  cmd->add_option("--classes", c.num_classes)->capture_default_str();
  cmd->add_option("--latent-dim", c.latent_dim, "0 keeps the embedding dimension")->capture_default_str();
  cmd->add_option("--iterations", c.iterations, "Outer iterations k")->capture_default_str();
  cmd->add_option("--delta", c.delta_epochs, "Prototype epochs per iteration")->capture_default_str();
  cmd->add_option("--gamma", c.gamma_epochs, "Classifier epochs per iteration")->capture_default_str();
  cmd->add_option("--start-class", c.start_class)->capture_default_str();
  cmd->add_option("--lambda1", c.lambda1)->capture_default_str();
  cmd->add_option("--lambda2", c.lambda2)->capture_default_str();
  cmd->add_option("--lambda", c.lambda_interleaved)->capture_default_str();
  cmd->add_option("--lr", c.lr)->capture_default_str();
  cmd->add_option("--encoder-lr", c.encoder_lr, "Learning rate of the projection (negative: same as --lr)")
      ->capture_default_str();
  cmd->add_option("--weight-decay", c.weight_decay)->capture_default_str();
  cmd->add_option("--batch-size", c.batch_size)->capture_default_str();
  cmd->add_option("--patience", c.patience)->capture_default_str();
  cmd->add_flag("--no-normalize", a.no_normalize, "Disable instance normalization of distances");
}

int cmd_train(TrainArgs& a) {
  TrainConfig config = a.config;
  std::string data = a.data, emb = a.emb, out = a.out;
  if (!a.from_manifest.empty()) {
    std::ifstream in(a.from_manifest);
    if (!in) throw DataError("cannot open manifest '" + a.from_manifest + "'");
    json m;
    try {
      m = json::parse(in);
      config = config_from_json(m.at("config"));
      data = m.at("inputs").at("data").at("path");
      emb = m.at("inputs").at("embeddings").at("path");
      if (out.empty()) out = m.at("outputs").at("checkpoint");
    } catch (const json::exception& e) {
      throw DataError(std::string("malformed manifest: ") + e.what());
    }
  } else {
    config.algorithm = algorithm_from_string(a.algo);
    config.normalize = !a.no_normalize;
    config.seed = resolve_seed(a.seed_opt, a.seed);
  }
  if (data.empty() || emb.empty() || out.empty()) throw ConfigError("train needs --data, --emb and --out");
  config.validate();
  const std::string report_path = a.report.empty() ? out + ".report.json" : a.report;
  const std::string manifest_path = a.manifest.empty() ? out + ".manifest.json" : a.manifest;

  json manifest = {{"tool", "protex"},
                   {"tool_version", kToolVersion},
                   {"command", "train"},
                   {"seed", config.seed},
                   {"config", config_to_json(config)},
                   {"inputs",
                    {{"data", {{"path", data}, {"sha256", sha256_file(data)}}},
                     {"embeddings", {{"path", emb}, {"sha256", sha256_file(emb)}}}}},
                   {"outputs", {{"checkpoint", out}, {"report", report_path}, {"manifest", manifest_path}}}};
  write_json(manifest_path, manifest);

  const LoadedData in = load_inputs(data, emb, config.seed);
  const LabeledMatrix train_set = gather(in.dataset, in.embeddings, Split::Train);
  const LabeledMatrix dev_set = gather(in.dataset, in.embeddings, Split::Dev);
  if (train_set.empty()) throw DataError("no training examples");

  PrototypeHead head = init_head(config, in.embeddings.dim(), config.seed);
  TrainResult result = train(std::move(head), train_set, dev_set, config);
  save_checkpoint(out, result.head, config, &result.optimizer);
  write_json(report_path, report_to_json(result.report));
  std::cout << "trained " << to_string(config.algorithm) << " for " << result.report.iterations_run
            << " iterations; best validation macro-F1 " << result.report.best_validation_f1 << " (iteration "
            << result.report.best_iteration << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string ckpt, baseline, data, emb, split = "test", preds_out, compare, report;
  std::size_t knn_k = 5;
  std::size_t bootstrap = 10000;
  std::uint64_t seed = 0;
  bool subclass = false;
  CLI::Option* seed_opt = nullptr;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "Evaluate a checkpoint or a baseline");
  cmd->add_option("--ckpt", a.ckpt, "Checkpoint to evaluate");
  cmd->add_option("--baseline", a.baseline, "knn | random (instead of --ckpt)");
  cmd->add_option("--data", a.data)->required();
  cmd->add_option("--emb", a.emb)->required();
  cmd->add_option("--split", a.split)->capture_default_str();
  cmd->add_option("--knn-k", a.knn_k)->capture_default_str();
  a.seed_opt = cmd->add_option("--seed", a.seed, "Seed for the random baseline, split assignment and bootstrap");
  cmd->add_option("--preds-out", a.preds_out, "Write 'id<TAB>label' predictions");
  cmd->add_option("--compare", a.compare, "Predictions file to test against (paired bootstrap)");
  cmd->add_option("--bootstrap", a.bootstrap, "Bootstrap replicates")->capture_default_str();
  cmd->add_option("--report", a.report, "Write the evaluation as JSON");
  cmd->add_flag("--subclass", a.subclass, "Also report macro-F1 per positive subcategory");
}

std::map<std::string, int> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions '" + path + "'");
  std::map<std::string, int> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(lineno, "expected 'id<TAB>label'");
    const std::string label = line.substr(tab + 1);
    if (label != "0" && label != "1") throw ParseError(lineno, "label must be 0 or 1");
    out[line.substr(0, tab)] = label == "1" ? 1 : 0;
  }
  return out;
}

int cmd_eval(EvalArgs& a) {
  if (a.ckpt.empty() == a.baseline.empty()) throw ConfigError("eval needs exactly one of --ckpt or --baseline");
  if (!a.baseline.empty() && a.baseline != "knn" && a.baseline != "random") {
    throw ConfigError("baseline must be knn or random");
  }
  if (a.bootstrap < 1) throw ConfigError("--bootstrap must be >= 1");
  std::uint64_t seed = resolve_seed(a.seed_opt, a.seed);
  std::optional<Checkpoint> ck;
  if (!a.ckpt.empty()) {
    ck = load_checkpoint(a.ckpt);
    if (a.seed_opt->count() == 0 && std::getenv("PTEX_SEED") == nullptr) seed = ck->config.seed;
  }
  const LoadedData in = load_inputs(a.data, a.emb, seed);
  const LabeledMatrix eval_set = gather(in.dataset, in.embeddings, parse_split(a.split));
  if (eval_set.empty()) throw DataError("split '" + a.split + "' is empty");

  std::vector<int> preds;
  std::string name;
  if (ck) {
    check_dims(ck->head, in.embeddings);
    preds = predict_batch(ck->head, eval_set.features).labels;
    name = "prototex-" + to_string(ck->config.algorithm) + (ck->head.normalize_distances ? "+norm" : "-norm");
  } else {
    const LabeledMatrix train_set = gather(in.dataset, in.embeddings, Split::Train);
    if (train_set.empty()) throw DataError("baselines need a non-empty train split");
    if (a.baseline == "knn") {
      preds = knn_classify(train_set.features, train_set.labels, eval_set.features, a.knn_k);
      name = "knn-" + std::to_string(a.knn_k);
    } else {
      const double rate = static_cast<double>(std::count(train_set.labels.begin(), train_set.labels.end(), 1)) /
                          static_cast<double>(train_set.size());
      std::mt19937_64 rng(seed);
      std::bernoulli_distribution coin(rate);
      for (std::size_t i = 0; i < eval_set.size(); ++i) preds.push_back(coin(rng) ? 1 : 0);
      name = "random";
    }
  }

  EvalResult result = f1_scores(preds, eval_set.labels);
  if (a.subclass) {
    const auto subs = subcategories_of(in.dataset, eval_set);
    for (const auto& [s, r] : subclass_f1(preds, eval_set.labels, subs)) result.subcategory_macro[s] = r.f1_macro;
  }
  std::cout << std::fixed << std::setprecision(4) << "model\tneg\tpos\tmacro\n"
            << name << '\t' << result.f1_negative << '\t' << result.f1_positive << '\t' << result.f1_macro << '\n';
  for (const auto& [s, f] : result.subcategory_macro) std::cout << "subclass\t" << s << '\t' << f << '\n';

  json report = eval_to_json(name, result);
  report["split"] = a.split;
  if (!a.preds_out.empty()) {
    std::ofstream out(a.preds_out);
    if (!out) throw DataError("cannot write '" + a.preds_out + "'");
    for (std::size_t i = 0; i < preds.size(); ++i) out << in.dataset.examples[eval_set.rows[i]].id << '\t' << preds[i] << '\n';
  }
  if (!a.compare.empty()) {
    const auto other = read_predictions(a.compare);
    std::vector<int> other_preds;
    for (std::size_t r : eval_set.rows) {
      auto it = other.find(in.dataset.examples[r].id);
      if (it == other.end()) throw DataError("'" + a.compare + "' has no prediction for '" + in.dataset.examples[r].id + "'");
      other_preds.push_back(it->second);
    }
    const double p = bootstrap_significance(preds, other_preds, eval_set.labels, a.bootstrap, seed);
    const double other_macro = f1_scores(other_preds, eval_set.labels).f1_macro;
    std::cout << "compare\t" << a.compare << "\tmacro\t" << other_macro << "\tp-value\t" << p << '\n';
    report["comparison"] = {{"predictions", a.compare}, {"f1_macro", other_macro}, {"p_value", p}, {"replicates", a.bootstrap}};
  }
  if (!a.report.empty()) write_json(a.report, report);
  return kExitOk;
}

// ---------------------------------------------------------------- explain

struct ExplainArgs {
  std::string ckpt, data, emb, id, out, split = "test";
  bool all = false;
  int top_k = 5;
  int exemplars = 1;
};

void add_explain(CLI::App& app, ExplainArgs& a) {
  auto* cmd = app.add_subcommand("explain", "Case-based explanations for predictions");
  cmd->add_option("--ckpt", a.ckpt)->required();
  cmd->add_option("--data", a.data)->required();
  cmd->add_option("--emb", a.emb)->required();
  cmd->add_option("--id", a.id, "Example id to explain");
  cmd->add_flag("--all", a.all, "Explain every example of --split");
  cmd->add_option("--split", a.split)->capture_default_str();
  cmd->add_option("--top-k", a.top_k, "Prototypes per explanation")->capture_default_str();
  cmd->add_option("--exemplars", a.exemplars, "Training exemplars per prototype")->capture_default_str();
  cmd->add_option("--out", a.out, "JSONL output (default stdout)");
}

int cmd_explain(ExplainArgs& a) {
  if (a.top_k < 1) throw ConfigError("--top-k must be >= 1");
  if (a.exemplars < 0) throw ConfigError("--exemplars must be >= 0");
  if (a.all == !a.id.empty()) throw ConfigError("explain needs exactly one of --id or --all");
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const LoadedData in = load_inputs(a.data, a.emb, ck.config.seed);
  check_dims(ck.head, in.embeddings);
  const LabeledMatrix train_set = gather(in.dataset, in.embeddings, Split::Train);
  const ExemplarIndex index(ck.head, in.dataset, train_set, static_cast<std::size_t>(a.exemplars));

  std::vector<std::size_t> rows;
  if (a.all) {
    rows = in.dataset.indices(parse_split(a.split));
  } else {
    auto r = in.dataset.find(a.id);
    if (!r) throw DataError("unknown example id '" + a.id + "'");
    rows.push_back(*r);
  }
  std::ofstream file;
  std::ostream& out = open_output(a.out, file);
  for (std::size_t r : rows) {
    const Eigen::RowVectorXd x = in.embeddings.vectors.row(static_cast<Eigen::Index>(r)).cast<double>();
    const Explanation e = explain_prediction(ck.head, index, x, in.dataset.examples[r].id, static_cast<std::size_t>(a.top_k));
    out << explanation_to_json(e).dump() << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::string ckpt, data, emb, out = "analysis", split = "dev", input;
  int k = 5;
  bool soft_cluster = false;
};

void add_analyze(CLI::App& app, AnalyzeArgs& a) {
  auto* cmd = app.add_subcommand("analyze", "Segregation, association and soft-clustering reports");
  cmd->add_option("--ckpt", a.ckpt)->required();
  cmd->add_option("--data", a.data)->required();
  cmd->add_option("--emb", a.emb)->required();
  cmd->add_option("--k", a.k, "Nearest training examples per prototype")->capture_default_str();
  cmd->add_option("--split", a.split, "Split for the association matrix")->capture_default_str();
  cmd->add_option("--out", a.out, "Output path prefix")->capture_default_str();
  cmd->add_flag("--soft-cluster", a.soft_cluster, "Also emit soft-clustering posteriors for --input");
  cmd->add_option("--input", a.input, "PTXE file of examples for --soft-cluster");
}

int cmd_analyze(AnalyzeArgs& a) {
  if (a.k < 1) throw ConfigError("--k must be >= 1");
  if (a.soft_cluster && a.input.empty()) throw ConfigError("--soft-cluster needs --input");
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const LoadedData in = load_inputs(a.data, a.emb, ck.config.seed);
  check_dims(ck.head, in.embeddings);
  const LabeledMatrix train_set = gather(in.dataset, in.embeddings, Split::Train);

  const auto nearest = nearest_examples_per_prototype(ck.head, train_set.features, static_cast<std::size_t>(a.k));
  const Segregation seg = segregation_metric(nearest);
  {
    std::ofstream out(a.out + ".segregation.tsv");
    if (!out) throw DataError("cannot write '" + a.out + ".segregation.tsv'");
    out << "prototype\tclass";
    for (int r = 1; r <= a.k; ++r) out << "\tnn" << r;
    out << '\n';
    for (std::size_t j = 0; j < nearest.size(); ++j) {
      out << j << '\t' << ck.head.proto_class[j];
      for (std::size_t r : nearest[j]) out << '\t' << in.dataset.examples[train_set.rows[r]].id;
      out << '\n';
    }
    out << "# unique_count\t" << seg.unique_count << "\n# exactly_one_prototype_count\t"
        << seg.exactly_one_prototype_count << '\n';
  }
  std::cout << "segregation\tunique\t" << seg.unique_count << "\texactly_one\t" << seg.exactly_one_prototype_count << '\n';

  const LabeledMatrix assoc_set = gather(in.dataset, in.embeddings, parse_split(a.split));
  const AssociationMatrix assoc = association_matrix(ck.head, assoc_set, subcategories_of(in.dataset, assoc_set));
  {
    std::ofstream out(a.out + ".association.tsv");
    if (!out) throw DataError("cannot write '" + a.out + ".association.tsv'");
    out << "group";
    for (Eigen::Index j = 0; j < assoc.fractions.cols(); ++j) {
      out << "\tp" << j << (ck.head.proto_class[static_cast<std::size_t>(j)] == 0 ? "-neg" : "");
    }
    out << '\n';
    for (std::size_t g = 0; g < assoc.groups.size(); ++g) {
      out << assoc.groups[g];
      for (Eigen::Index j = 0; j < assoc.fractions.cols(); ++j) {
        out << '\t' << format_double(assoc.fractions(static_cast<Eigen::Index>(g), j));
      }
      out << '\n';
    }
  }

  if (a.soft_cluster) {
    const SoftClusterModel model = soft_cluster_build(ck.head, train_set.features, train_set.labels);
    const EmbeddingMatrix queries = read_ptxe(a.input);
    if (queries.dim() != ck.head.input_dim()) throw DataError("--input dimension does not match the checkpoint");
    std::ofstream out(a.out + ".softcluster.jsonl");
    if (!out) throw DataError("cannot write '" + a.out + ".softcluster.jsonl'");
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const Eigen::RowVectorXd x = queries.vectors.row(static_cast<Eigen::Index>(i)).cast<double>();
      const TestPosterior post = soft_cluster_infer(model, ck.head, x);
      out << json{{"id", queries.ids[i]},
                  {"p_positive", post.p_positive},
                  {"theta", std::vector<double>(post.theta.data(), post.theta.data() + post.theta.size())}}
                 .dump()
          << '\n';
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  SyntheticSpec spec;
  std::string out = "synthetic";
  CLI::Option* seed_opt = nullptr;
  std::uint64_t seed = 0;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic asymmetric detection task");
  SyntheticSpec& s = a.spec;
  cmd->add_option("--n", s.n)->capture_default_str();
  cmd->add_option("--dim", s.dim)->capture_default_str();
  cmd->add_option("--pos-frac", s.pos_frac)->capture_default_str();
  cmd->add_option("--signal-dims", s.signal_dims)->capture_default_str();
  cmd->add_option("--noise", s.noise_scale)->capture_default_str();
  cmd->add_option("--clusters", s.clusters)->capture_default_str();
  cmd->add_option("--separation", s.separation)->capture_default_str();
  cmd->add_option("--spread", s.spread)->capture_default_str();
  a.seed_opt = cmd->add_option("--seed", a.seed);
  cmd->add_option("--out", a.out, "Writes <out>.jsonl and <out>.ptxe")->capture_default_str();
}

int cmd_synth(SynthArgs& a) {
  a.spec.seed = resolve_seed(a.seed_opt, a.seed);
  const SyntheticData d = generate_synthetic(a.spec);
  save_dataset(d.dataset, a.out + ".jsonl");
  write_ptxe(d.embeddings, a.out + ".ptxe");
  std::cout << "wrote " << d.dataset.size() << " examples to " << a.out << ".jsonl and " << a.out << ".ptxe\n";
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Prototype-tensor classification head: training, evaluation and explanations"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  TrainArgs train_args;
  EvalArgs eval_args;
  ExplainArgs explain_args;
  AnalyzeArgs analyze_args;
  SynthArgs synth_args;
  add_train(app, train_args);
  add_eval(app, eval_args);
  add_explain(app, explain_args);
  add_analyze(app, analyze_args);
  add_synth(app, synth_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (app.got_subcommand("train")) return cmd_train(train_args);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args);
    if (app.got_subcommand("explain")) return cmd_explain(explain_args);
    if (app.got_subcommand("analyze")) return cmd_analyze(analyze_args);
    if (app.got_subcommand("synth")) return cmd_synth(synth_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("protex");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace protex::cli
