#include "protex/metrics.hpp"

#include <iostream>
#include <random>
#include <set>

#include "protex/errors.hpp"

namespace protex {

namespace {

double f1_from(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

EvalResult from_confusion(const Confusion& c) {
  EvalResult r;
  r.confusion = c;
  r.f1_positive = f1_from(c.tp, c.fp, c.fn);
  r.f1_negative = f1_from(c.tn, c.fn, c.fp);
  r.f1_macro = 0.5 * (r.f1_positive + r.f1_negative);
  return r;
}

void tally(Confusion& c, int pred, int gold) {
  if (gold == 1) {
    (pred == 1 ? c.tp : c.fn)++;
  } else {
    (pred == 1 ? c.fp : c.tn)++;
  }
}

}  // namespace

EvalResult f1_scores(std::span<const int> predictions, std::span<const int> gold) {
  if (predictions.size() != gold.size()) {
    throw ShapeError("f1_scores: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(gold.size()) + " gold labels");
  }
  Confusion c;
  for (std::size_t i = 0; i < gold.size(); ++i) tally(c, predictions[i], gold[i]);
  return from_confusion(c);
}

std::map<std::string, EvalResult> subclass_f1(std::span<const int> predictions, std::span<const int> gold,
                                              std::span<const std::optional<std::string>> subcategories) {
  if (predictions.size() != gold.size() || subcategories.size() != gold.size()) {
    throw ShapeError("subclass_f1: input lengths differ");
  }
  Confusion negatives;
  std::map<std::string, Confusion> groups;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == 0) {
      tally(negatives, predictions[i], 0);
    } else if (subcategories[i]) {
      tally(groups[*subcategories[i]], predictions[i], 1);
    }
  }
  std::map<std::string, EvalResult> out;
  for (auto& [name, c] : groups) {
    if (c.tp + c.fn == 0) {
      std::cerr << "warning: subcategory '" << name << "' has no examples, skipped\n";
      continue;
    }
    Confusion pooled = c;
    pooled.fp = negatives.fp;
    pooled.tn = negatives.tn;
    out.emplace(name, from_confusion(pooled));
  }
  return out;
}

double bootstrap_significance(std::span<const int> preds_a, std::span<const int> preds_b,
                              std::span<const int> gold, std::size_t replicates, std::uint64_t seed) {
  if (preds_a.size() != gold.size() || preds_b.size() != gold.size()) {
    throw ShapeError("bootstrap_significance: input lengths differ");
  }
  if (gold.empty() || replicates == 0) throw ConfigError("bootstrap needs data and at least one replicate");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, gold.size() - 1);
  std::size_t not_better = 0;
  for (std::size_t b = 0; b < replicates; ++b) {
    Confusion ca;
    Confusion cb;
    for (std::size_t k = 0; k < gold.size(); ++k) {
      const std::size_t i = pick(rng);
      tally(ca, preds_a[i], gold[i]);
      tally(cb, preds_b[i], gold[i]);
    }
    if (from_confusion(ca).f1_macro - from_confusion(cb).f1_macro <= 0.0) ++not_better;
  }
  return static_cast<double>(not_better) / static_cast<double>(replicates);
}

}  // namespace protex
