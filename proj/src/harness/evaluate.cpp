#include "medmat/harness/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "medmat/core/error.hpp"
#include "medmat/fusion/fusion.hpp"
#include "medmat/harness/train.hpp"

namespace medmat::harness {

RegionMode parse_region_mode(std::string_view text) {
  if (text == "all") return RegionMode::All;
  if (text == "unknown") return RegionMode::Unknown;
  throw ConfigError(fmt::format("region mode must be 'all' or 'unknown', got '{}'", text));
}

EvaluationOptions EvaluationOptions::from(const TrainConfig& config) {
  EvaluationOptions o;
  o.n_samples = config.n_samples;
  o.target_masks = config.eval_targets;
  o.target_lo = config.pseudo_lo;
  o.target_hi = config.pseudo_hi;
  o.seed = config.seed;
  o.use_uncertainty = config.use_uncertainty;
  return o;
}

std::vector<BinaryMask> target_masks(const Sample& sample, const EvaluationOptions& options) {
  if (sample.alpha && sample.alpha->max() > 0.0) {
    return fusion::equispaced_masks(*sample.alpha, options.target_masks, options.target_lo, options.target_hi);
  }
  if (sample.masks.empty()) throw ArityError(fmt::format("sample {} has no target masks", sample.id));
  return sample.masks;
}

SampleEvaluation evaluate_sample(const Model& model, const Sample& sample, const EvaluationOptions& options) {
  const Prediction p = infer(model, sample.image, options.n_samples, options.seed, options.use_uncertainty);
  SampleEvaluation row;
  row.id = sample.id;
  const std::vector<BinaryMask> predicted = maskgen::binarize(p.scores);
  const std::vector<BinaryMask> targets = target_masks(sample, options);
  row.ged = metrics::ged(predicted, targets);
  row.dice = metrics::adapted_dice(predicted, targets);
  if (!sample.alpha) {
    row.degenerate = true;
    return row;
  }
  metrics::Region region;
  if (options.region == RegionMode::Unknown) region = sample.trimap.region(TrimapLabel::Unknown);
  try {
    row.matting = metrics::matting_report(p.alpha, *sample.alpha, region);
  } catch (const DegenerateInputError&) {
    row.degenerate = true;
  }
  return row;
}

std::vector<SampleEvaluation> evaluate(const Model& model, std::span<const Sample> data,
                                       const EvaluationOptions& options) {
  std::vector<SampleEvaluation> rows;
  rows.reserve(data.size());
  for (const Sample& s : data) rows.push_back(evaluate_sample(model, s, options));
  return rows;
}

Stat stat_of(std::span<const double> values) {
  Stat s;
  s.count = values.size();
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

MetricSummary summarize(std::span<const SampleEvaluation> rows) {
  std::vector<double> sad, mse, grad, conn, ged, dice;
  for (const SampleEvaluation& r : rows) {
    ged.push_back(r.ged);
    dice.push_back(r.dice);
    if (!r.matting) continue;
    sad.push_back(r.matting->sad);
    mse.push_back(r.matting->mse);
    grad.push_back(r.matting->grad);
    conn.push_back(r.matting->conn);
  }
  return {stat_of(sad), stat_of(mse), stat_of(grad), stat_of(conn), stat_of(ged), stat_of(dice)};
}

namespace {

std::string cell(double v) { return fmt::format("{:.9g}", v); }

std::string cell(const Stat& s) { return s.count == 0 ? "NA" : fmt::format("{:.6g}±{:.6g}", s.mean, s.std); }

}  // namespace

std::string metrics_csv(std::span<const SampleEvaluation> rows) {
  std::string out =
      "# ged: ordered pairs including self-pairs, d = 1 - IoU; sad, grad, conn scaled by 1e-3\n"
      "sample_id,sad,mse,grad,conn,ged,dice\n";
  for (const SampleEvaluation& r : rows) {
    if (r.matting) {
      out += fmt::format("{},{},{},{},{},{},{}\n", r.id, cell(r.matting->sad), cell(r.matting->mse),
                         cell(r.matting->grad), cell(r.matting->conn), cell(r.ged), cell(r.dice));
    } else {
      out += fmt::format("{},NA,NA,NA,NA,{},{}\n", r.id, cell(r.ged), cell(r.dice));
    }
  }
  const MetricSummary s = summarize(rows);
  out += fmt::format("mean±std,{},{},{},{},{},{}\n", cell(s.sad), cell(s.mse), cell(s.grad), cell(s.conn),
                     cell(s.ged), cell(s.dice));
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const SampleEvaluation> rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NotFoundError(fmt::format("cannot write metrics: {}", path.string()));
  out << metrics_csv(rows);
}

std::vector<std::vector<std::size_t>> fold_splits(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError(fmt::format("cross-validation needs folds >= 2, got {}", folds));
  if (n < static_cast<std::size_t>(folds)) {
    throw ConfigError(fmt::format("{} samples cannot fill {} folds", n, folds));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> splits(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < n; ++i) splits[i % splits.size()].push_back(order[i]);
  for (auto& split : splits) std::sort(split.begin(), split.end());
  return splits;
}

MetricSummary aggregate_folds(std::span<const FoldResult> folds) {
  auto column = [&](Stat MetricSummary::*field) {
    std::vector<double> means;
    for (const FoldResult& f : folds) {
      if ((f.summary.*field).count > 0) means.push_back((f.summary.*field).mean);
    }
    return stat_of(means);
  };
  return {column(&MetricSummary::sad),  column(&MetricSummary::mse), column(&MetricSummary::grad),
          column(&MetricSummary::conn), column(&MetricSummary::ged), column(&MetricSummary::dice)};
}

CrossValidation cross_validate(const TrainConfig& config, std::span<const Sample> data,
                               const EvaluationOptions& options) {
  CrossValidation cv;
  for (const std::vector<std::size_t>& test : fold_splits(data.size(), config.folds, config.seed)) {
    std::vector<Sample> train_set, test_set;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (std::binary_search(test.begin(), test.end(), i)) {
        test_set.push_back(data[i]);
      } else {
        train_set.push_back(data[i]);
      }
    }
    const TrainResult trained = train(config, train_set);
    FoldResult fold;
    fold.rows = evaluate(trained.model, test_set, options);
    fold.summary = summarize(fold.rows);
    cv.folds.push_back(std::move(fold));
  }
  cv.aggregate = aggregate_folds(cv.folds);
  return cv;
}

}  // namespace medmat::harness
