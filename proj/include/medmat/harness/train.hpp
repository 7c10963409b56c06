#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "medmat/harness/data.hpp"
#include "medmat/harness/model.hpp"

namespace medmat::harness {

/// Linear warm-up from 0 to base_lr over warmup_steps, then cosine decay
/// to 0 at total_steps.
double lr_schedule(long step, long total_steps, double base_lr, long warmup_steps);

/// Per-epoch means over the training samples.
struct EpochLog {
  int epoch = 0;
  double lr = 0.0;  // at the epoch's last update
  double ce = 0.0;
  double kl = 0.0;
  double seg = 0.0;
  double l_alpha = 0.0;
  double l_grad = 0.0;
  double matt = 0.0;
  double total = 0.0;
  double gamma_raw = 0.0;  // oaws_gamma(epoch) before clamping to [0, 1]
  double gamma = 0.0;
  double sigma1 = 0.0;  // after the epoch's last update
  double sigma2 = 0.0;
};

struct TrainOptions {
  /// Receives config.ini, train_log.csv and checkpoint.cbor; nothing is
  /// written when unset.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

/// Mini-batch Adam over the joint objective. Samples need a ground-truth
/// alpha. Throws DivergenceError on a non-finite loss after writing
/// divergence.json to the output directory.
TrainResult train(const TrainConfig& config, std::span<const Sample> data, const TrainOptions& options = {});

/// CSV header and row text for the training log.
std::string train_log_header();
std::string train_log_row(const EpochLog& e);

}  // namespace medmat::harness
