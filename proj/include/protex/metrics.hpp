#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace protex {

struct Confusion {
  std::size_t tp = 0;  // gold 1, predicted 1
  std::size_t fp = 0;  // gold 0, predicted 1
  std::size_t fn = 0;  // gold 1, predicted 0
  std::size_t tn = 0;
};

struct EvalResult {
  double f1_negative = 0.0;
  double f1_positive = 0.0;
  double f1_macro = 0.0;
  Confusion confusion;
  std::map<std::string, double> subcategory_macro;
};

/// Binary per-class and macro F1. A zero denominator makes the affected
/// precision, recall or F1 zero.
EvalResult f1_scores(std::span<const int> predictions, std::span<const int> gold);

/// Macro-F1 per subcategory, each computed over that subcategory's examples
/// pooled with every negative. Subcategories with no examples are skipped.
std::map<std::string, EvalResult> subclass_f1(std::span<const int> predictions, std::span<const int> gold,
                                              std::span<const std::optional<std::string>> subcategories);

/// One-sided paired bootstrap: the fraction of `replicates` resamples (with
/// replacement, drawn from std::mt19937_64(seed)) in which macroF1(a) - macroF1(b) <= 0.
double bootstrap_significance(std::span<const int> preds_a, std::span<const int> preds_b,
                              std::span<const int> gold, std::size_t replicates, std::uint64_t seed);

}  // namespace protex
