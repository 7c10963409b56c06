#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "medmat/harness/data.hpp"
#include "medmat/harness/model.hpp"
#include "medmat/metrics/metrics.hpp"

namespace medmat::harness {

enum class RegionMode { All, Unknown };

RegionMode parse_region_mode(std::string_view text);

struct EvaluationOptions {
  RegionMode region = RegionMode::All;
  int n_samples = 8;
  /// Target masks for GED / Dice: this many equispaced alpha thresholds
  /// when alpha is known, otherwise the annotator masks.
  int target_masks = 8;
  double target_lo = 0.2;
  double target_hi = 0.7;
  std::uint64_t seed = 0;
  bool use_uncertainty = true;

  static EvaluationOptions from(const TrainConfig& config);
};

struct SampleEvaluation {
  std::string id;
  /// Missing when there is no alpha or the scoring region is empty.
  std::optional<metrics::MetricReport> matting;
  double ged = 0.0;
  double dice = 0.0;
  bool degenerate = false;
};

/// Target mask set used for GED and Dice.
std::vector<BinaryMask> target_masks(const Sample& sample, const EvaluationOptions& options);

SampleEvaluation evaluate_sample(const Model& model, const Sample& sample, const EvaluationOptions& options);
std::vector<SampleEvaluation> evaluate(const Model& model, std::span<const Sample> data,
                                       const EvaluationOptions& options);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t count = 0;
};
Stat stat_of(std::span<const double> values);

struct MetricSummary {
  Stat sad, mse, grad, conn, ged, dice;
};
MetricSummary summarize(std::span<const SampleEvaluation> rows);

/// CSV with a leading '#' note on the pair scheme and scaling, one row per
/// sample (NA for missing matting metrics) and a final mean±std row.
std::string metrics_csv(std::span<const SampleEvaluation> rows);
void write_metrics_csv(const std::filesystem::path& path, std::span<const SampleEvaluation> rows);

/// Shuffled, near-equal partition of [0, n) into `folds` test splits.
std::vector<std::vector<std::size_t>> fold_splits(std::size_t n, int folds, std::uint64_t seed);

struct FoldResult {
  std::vector<SampleEvaluation> rows;
  MetricSummary summary;
};

struct CrossValidation {
  std::vector<FoldResult> folds;
  /// Mean and spread of the per-fold means.
  MetricSummary aggregate;
};

CrossValidation cross_validate(const TrainConfig& config, std::span<const Sample> data,
                               const EvaluationOptions& options);
MetricSummary aggregate_folds(std::span<const FoldResult> folds);

}  // namespace medmat::harness
