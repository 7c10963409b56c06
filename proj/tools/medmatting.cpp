#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "medmat/core/error.hpp"
#include "medmat/core/io.hpp"
#include "medmat/core/runtime.hpp"
#include "medmat/harness/config.hpp"
#include "medmat/harness/data.hpp"
#include "medmat/harness/evaluate.hpp"
#include "medmat/harness/model.hpp"
#include "medmat/harness/train.hpp"

namespace fs = std::filesystem;
using namespace medmat;
using namespace medmat::harness;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value config file (defaults to the synthetic preset)");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--out", c.out, "output directory");
}

TrainConfig resolve(const Common& c) {
  TrainConfig config = c.config.empty() ? preset("synthetic") : load_config(c.config);
  if (c.seed) config.seed = *c.seed;
  config.validate();
  return config;
}

std::vector<Sample> data_or_synthetic(const std::string& manifest, const TrainConfig& config) {
  if (!manifest.empty()) return load_samples(manifest, config.dilation_radius);
  return synth_dataset(SynthOptions::from(config), config.seed);
}

void print_summary(const MetricSummary& s) {
  auto line = [](const char* name, const Stat& st) {
    fmt::print("  {:<5} {:.6g} ± {:.6g} (n={})\n", name, st.mean, st.std, st.count);
  };
  line("sad", s.sad);
  line("mse", s.mse);
  line("grad", s.grad);
  line("conn", s.conn);
  line("ged", s.ged);
  line("dice", s.dice);
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Uncertainty-guided matting for medical segmentation"};
  app.require_subcommand(1);

  Common synth_opts;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset (PNGs + manifest.tsv)");
  add_common(synth, synth_opts);

  Common prep_opts;
  std::string prep_manifest;
  auto* prepare = app.add_subcommand("prepare", "resize a dataset to input_size and rebuild trimaps");
  add_common(prepare, prep_opts);
  prepare->add_option("--data", prep_manifest, "input manifest")->required();

  Common train_opts;
  std::string train_manifest;
  auto* train_cmd = app.add_subcommand("train", "train and write config.ini, train_log.csv, checkpoint.cbor");
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--data", train_manifest, "manifest; synthesises data from the config when omitted");

  Common eval_opts;
  std::string eval_checkpoint, eval_manifest, eval_region = "all";
  auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint and write metrics.csv");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--checkpoint", eval_checkpoint)->required();
  eval_cmd->add_option("--data", eval_manifest, "manifest; synthesises data from the checkpoint config when omitted");
  eval_cmd->add_option("--region", eval_region, "all | unknown")->check(CLI::IsMember({"all", "unknown"}));

  Common pred_opts;
  std::string pred_checkpoint, pred_manifest;
  std::vector<std::string> pred_images;
  auto* predict = app.add_subcommand("predict", "write alpha and uncertainty PNGs per input");
  add_common(predict, pred_opts);
  predict->add_option("--checkpoint", pred_checkpoint)->required();
  predict->add_option("--data", pred_manifest, "manifest of inputs");
  predict->add_option("--image", pred_images, "input image(s)");

  Common xval_opts;
  std::string xval_manifest;
  auto* xval = app.add_subcommand("xval", "k-fold cross-validation");
  add_common(xval, xval_opts);
  xval->add_option("--data", xval_manifest, "manifest; synthesises data from the config when omitted");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const TrainConfig config = resolve(synth_opts);
      const auto samples = synth_dataset(SynthOptions::from(config), config.seed);
      write_samples(synth_opts.out, samples);
      fmt::print("wrote {} samples to {}\n", samples.size(), synth_opts.out);
    } else if (*prepare) {
      const TrainConfig config = resolve(prep_opts);
      std::vector<Sample> samples;
      for (const Sample& s : load_samples(prep_manifest, config.dilation_radius)) {
        samples.push_back(resize_sample(s, config.input_size, config.dilation_radius));
      }
      write_samples(prep_opts.out, samples);
      fmt::print("prepared {} samples at {}x{} in {}\n", samples.size(), config.input_size, config.input_size,
                 prep_opts.out);
    } else if (*train_cmd) {
      const TrainConfig config = resolve(train_opts);
      const auto data = data_or_synthetic(train_manifest, config);
      TrainOptions options;
      options.out_dir = train_opts.out;
      options.on_epoch = [](const EpochLog& e) {
        fmt::print("epoch {:4d}  lr {:.3e}  seg {:.5f}  matt {:.5f}  alpha {:.5f}  total {:.5f}\n", e.epoch, e.lr,
                   e.seg, e.matt, e.l_alpha, e.total);
      };
      train(config, data, options);
      fmt::print("checkpoint written to {}\n", (fs::path(train_opts.out) / "checkpoint.cbor").string());
    } else if (*eval_cmd) {
      TrainConfig config;
      const Model model = load_checkpoint(eval_checkpoint, &config);
      if (eval_opts.seed) config.seed = *eval_opts.seed;
      const auto data = data_or_synthetic(eval_manifest, config);
      EvaluationOptions options = EvaluationOptions::from(config);
      options.region = parse_region_mode(eval_region);
      const auto rows = evaluate(model, data, options);
      const fs::path csv = fs::path(eval_opts.out) / "metrics.csv";
      write_metrics_csv(csv, rows);
      print_summary(summarize(rows));
      fmt::print("metrics written to {}\n", csv.string());
    } else if (*predict) {
      TrainConfig config;
      const Model model = load_checkpoint(pred_checkpoint, &config);
      if (pred_opts.seed) config.seed = *pred_opts.seed;
      std::vector<std::pair<std::string, Image>> inputs;
      if (!pred_manifest.empty()) {
        for (Sample& s : load_samples(pred_manifest, config.dilation_radius)) inputs.emplace_back(s.id, s.image);
      }
      for (const std::string& path : pred_images) inputs.emplace_back(fs::path(path).stem().string(), io::load_image(path));
      if (inputs.empty()) throw ArityError("predict needs --data or --image");
      const double umax = maskgen::max_entropy(config.backbone.class_count);
      for (const auto& [id, image] : inputs) {
        const Prediction p = infer(model, image, config.n_samples, config.seed, config.use_uncertainty);
        io::save_alpha(fs::path(pred_opts.out) / fmt::format("{}_alpha.png", id), p.alpha);
        io::save_scaled(fs::path(pred_opts.out) / fmt::format("{}_uncertainty.png", id), p.umap.values, umax);
      }
      fmt::print("wrote predictions for {} inputs to {}\n", inputs.size(), pred_opts.out);
    } else if (*xval) {
      const TrainConfig config = resolve(xval_opts);
      const auto data = data_or_synthetic(xval_manifest, config);
      const CrossValidation cv = cross_validate(config, data, EvaluationOptions::from(config));
      for (std::size_t f = 0; f < cv.folds.size(); ++f) {
        write_metrics_csv(fs::path(xval_opts.out) / fmt::format("fold{}_metrics.csv", f), cv.folds[f].rows);
      }
      fmt::print("aggregate over {} folds (mean ± std of fold means):\n", cv.folds.size());
      print_summary(cv.aggregate);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
