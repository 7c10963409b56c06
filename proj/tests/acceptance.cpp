// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// fails. Criterion 7 trains six small models and dominates the runtime.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "medmat/core/entropy.hpp"
#include "medmat/core/error.hpp"
#include "medmat/core/runtime.hpp"
#include "medmat/fusion/fusion.hpp"
#include "medmat/harness/evaluate.hpp"
#include "medmat/harness/train.hpp"
#include "medmat/losses/losses.hpp"
#include "medmat/metrics/metrics.hpp"
#include "support/oracles.hpp"
#include "support/table.hpp"

using namespace medmat;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Collects failed checks with a short reason for the summary line.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  bool ok() const { return failures.empty(); }
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string join_failures(const Check& c) {
  std::string s;
  for (std::size_t i = 0; i < c.failures.size() && i < 3; ++i) s += (i ? "; " : "") + c.failures[i];
  if (c.failures.size() > 3) s += fmt::format("; +{} more", c.failures.size() - 3);
  return s;
}

Outcome finish(const Check& c, double elapsed, double budget, const std::string& summary) {
  Check all = c;
  all.expect(elapsed < budget, fmt::format("runtime {:.2f}s over {:.0f}s budget", elapsed, budget));
  return {all.ok(), all.ok() ? fmt::format("{} ({:.2f}s)", summary, elapsed)
                             : fmt::format("{} ({:.2f}s) -- {}", summary, elapsed, join_failures(all))};
}

// ----------------------------------------------------------- criterion 1

Outcome entropy_correctness() {
  const auto t0 = Clock::now();
  Check c;
  const auto table = oracle::load_entropy_table(MEDMAT_TEST_DATA "/entropy_oracle.txt");
  c.expect(table.alpha.size() == 1000, "alpha table size");
  double worst_alpha = 0.0;
  for (const auto& row : table.alpha) {
    worst_alpha = std::max(worst_alpha, std::abs(alpha_entropy(AlphaMatte(Plane<double>(1, 1, row.alpha)))[0] - row.entropy));
  }
  double worst_u = 0.0;
  for (const auto& row : table.uncertainty) {
    maskgen::ScoreMapSet s;
    for (int k = 0; k < row.samples; ++k) {
      Tensor m({row.classes, 1, 1});
      for (int j = 0; j < row.classes; ++j) m[j] = row.probabilities[k * row.classes + j];
      s.maps.push_back(m);
    }
    worst_u = std::max(worst_u, std::abs(maskgen::uncertainty_map(s).values[0] - row.entropy));
  }
  c.expect(worst_alpha <= 1e-10, fmt::format("alpha entropy error {:.3g}", worst_alpha));
  c.expect(worst_u <= 1e-10, fmt::format("uncertainty map error {:.3g}", worst_u));

  const double at_half = alpha_entropy(AlphaMatte(Plane<double>(1, 1, 0.5)))[0];
  c.expect(std::abs(at_half - std::numbers::ln2) <= 1e-15, "alpha entropy maximum");
  double worst_max = 0.0;
  for (int classes = 2; classes <= 5; ++classes) {
    const maskgen::ScoreMapSet uniform{{Tensor({classes, 2, 2}, 1.0 / classes)}};
    const maskgen::UncertaintyMap m = maskgen::uncertainty_map(uniform);
    for (double v : m.values.values()) {
      worst_max = std::max(worst_max, std::abs(v - maskgen::max_entropy(classes)));
    }
  }
  c.expect(worst_max <= 1e-14, "uncertainty maximum");
  return finish(c, seconds_since(t0), 1.0,
                fmt::format("max |err| alpha {:.2e}, umap {:.2e} over {}+{} oracle pixels", worst_alpha, worst_u,
                            table.alpha.size(), table.uncertainty.size()));
}

// ----------------------------------------------------------- criterion 2

Outcome oaws_schedule() {
  const auto t0 = Clock::now();
  Check c;
  const losses::OawsSchedule s{0.05, 0.03, 0.50};
  c.expect(losses::oaws_gamma(0, s) == s.t + 0.5, "gamma(0) != t + 0.5");
  double worst_slack = INFINITY;
  for (int n = 0; n <= 500; ++n) {
    const double g = losses::oaws_gamma(n, s);
    const double bound = 0.5 * std::exp(-s.a * n);
    worst_slack = std::min(worst_slack, bound - std::abs(g - s.t));
    c.expect(std::abs(g - s.t) <= bound, fmt::format("envelope violated at n={}", n));
    c.expect(g >= 0.0 && g <= 1.0, fmt::format("gamma({}) outside [0,1]", n));
  }
  return finish(c, seconds_since(t0), 1.0, fmt::format("gamma(0)=1 exact, min envelope slack {:.2e}", worst_slack));
}

// ----------------------------------------------------------- criterion 3

Outcome loss_oracles() {
  const auto t0 = Clock::now();
  Check c;
  auto close = [&](double got, double want, const char* what) {
    c.expect(std::abs(got - want) <= 1e-9, fmt::format("{}: {} vs {}", what, got, want));
  };
  Tensor score({2, 1, 2});
  score(0, 0, 0) = 0.9, score(1, 0, 0) = 0.1, score(0, 0, 1) = 0.2, score(1, 0, 1) = 0.8;
  close(losses::ce_loss(score, BinaryMask(1, 2)), 0.8573992140459633379, "ce");
  close(losses::kl_loss({{1.0}, {0.0}}, {{0.0}, {0.0}}), 0.5, "kl");
  Plane<double> p(2, 2, 0.5), g(2, 2, 0.25);
  g(1, 1) = 1.0;
  close(losses::alpha_l1(AlphaMatte(p), AlphaMatte(g)), 0.3125, "alpha_l1");
  Plane<double> ramp(5, 5), flat(5, 5, 0.3);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) ramp(y, x) = 0.2 * x;
  }
  close(losses::grad_loss(AlphaMatte(ramp), UncertaintyField(Plane<double>(5, 5, 0.5)), AlphaMatte(flat)), 1.28,
        "grad_loss");
  close(losses::seg_loss(0.3, 0.02, {}), 0.5, "seg_loss");
  close(losses::matt_loss(0.1, 0.4, {1, 10, 2, 0.5}), 0.4, "matt_loss");
  close(losses::uws_total(0.0, 0.0, losses::UwsState{}), 2.772588722239781238, "uws at sigma=4");
  close(losses::uws_total(0.6, 0.8, losses::UwsState::from_sigmas(1.0, 1.0)), 1.0, "uws at sigma=1");
  close(losses::oaws_gamma(10, {}), 0.1997695989631874075, "gamma(10)");
  close(losses::oaws_total(2.0, 4.0, 0.25), 3.5, "oaws_total");

  // Finite differences on 8x8 instances.
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto random = [&](Shape s, double lo, double hi) {
    Tensor t(s);
    for (double& v : t.values()) v = lo + (hi - lo) * (u(rng) + 1.0) / 2.0;
    return t;
  };
  const BinaryMask mask = oracle::random_mask(8, 8, rng);
  const AlphaMatte gt = oracle::random_alpha(8, 8, rng);
  Plane<double> up(8, 8);
  for (double& v : up.values()) v = 0.3 * (u(rng) + 1.0);
  const UncertaintyField umap(up);
  Tensor logits = random({2, 8, 8}, -2, 2), pred = random({1, 8, 8}, 0, 1);
  Tensor mq = random({6, 1, 1}, -1, 1), lq = random({6, 1, 1}, -1, 1), mp = random({6, 1, 1}, -1, 1),
         lp = random({6, 1, 1}, -1, 1);
  Tensor seg({1, 1, 1}, 0.7), matt({1, 1, 1}, 0.3), log_sigma = losses::UwsState::from_sigmas(0.8, 1.7).log_sigma;
  double worst = 0.0;
  auto fd = [&](const std::function<nn::Var(nn::Tape&)>& f, const std::vector<Tensor*>& in, int probes) {
    worst = std::max(worst, oracle::check_gradients(f, in, probes, 11).max_relative_error);
  };
  fd([&](nn::Tape& t) { return losses::ce_loss(nn::softmax_channels(t.parameter(logits)), mask); }, {&logits}, 32);
  fd([&](nn::Tape& t) {
       return losses::kl_loss({t.parameter(mq), t.parameter(lq)}, {t.parameter(mp), t.parameter(lp)});
     },
     {&mq, &lq, &mp, &lp}, 6);
  fd([&](nn::Tape& t) { return losses::alpha_l1(t.parameter(pred), gt); }, {&pred}, 32);
  fd([&](nn::Tape& t) { return losses::grad_loss(t.parameter(pred), umap, gt); }, {&pred}, 32);
  fd([&](nn::Tape& t) { return losses::seg_loss(t.parameter(seg), t.parameter(matt), {}); }, {&seg, &matt}, 1);
  fd([&](nn::Tape& t) { return losses::matt_loss(t.parameter(seg), t.parameter(matt), {}); }, {&seg, &matt}, 1);
  fd([&](nn::Tape& t) { return losses::uws_total(t.parameter(seg), t.parameter(matt), t.parameter(log_sigma)); },
     {&seg, &matt, &log_sigma}, 2);
  fd([&](nn::Tape& t) { return losses::oaws_total(t.parameter(seg), t.parameter(matt), 0.3); }, {&seg, &matt}, 1);
  c.expect(worst <= 1e-3, fmt::format("finite-difference relative error {:.3g}", worst));
  return finish(c, seconds_since(t0), 30.0, fmt::format("10 closed forms within 1e-9, FD rel err {:.2e}", worst));
}

// ----------------------------------------------------------- criterion 4

Outcome metric_oracles() {
  const auto t0 = Clock::now();
  Check c;
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> density(0.05, 0.95);
  double worst_ged = 0.0, worst_dice = 0.0, worst_elem = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<BinaryMask> a, b;
    for (int k = 0; k < 4; ++k) a.push_back(oracle::random_mask(8, 8, rng, density(rng)));
    for (int k = 0; k < 4; ++k) b.push_back(oracle::random_mask(8, 8, rng, density(rng)));
    worst_ged = std::max(worst_ged, std::abs(metrics::ged(a, b) - oracle::ged(a, b)));
    worst_dice = std::max(worst_dice, std::abs(metrics::adapted_dice(a, b) - oracle::adapted_dice(a, b)));

    const AlphaMatte p = oracle::random_alpha(8, 8, rng), g = oracle::random_alpha(8, 8, rng);
    double s = 0.0, q = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      s += std::abs(p[i] - g[i]);
      q += (p[i] - g[i]) * (p[i] - g[i]);
    }
    worst_elem = std::max({worst_elem, std::abs(metrics::sad(p, g) - s), std::abs(metrics::mse(p, g) - q / 64.0)});
  }
  c.expect(worst_ged <= 1e-12, fmt::format("GED error {:.3g}", worst_ged));
  c.expect(worst_dice <= 1e-12, fmt::format("adapted Dice error {:.3g}", worst_dice));
  c.expect(worst_elem <= 1e-9, fmt::format("SAD/MSE error {:.3g}", worst_elem));
  return finish(c, seconds_since(t0), 30.0,
                fmt::format("100 trials: GED {:.1e}, Dice {:.1e}, SAD/MSE {:.1e}", worst_ged, worst_dice, worst_elem));
}

// ----------------------------------------------------------- criterion 5

Outcome fusion_properties() {
  const auto t0 = Clock::now();
  Check c;
  std::mt19937_64 rng(5555);
  std::uniform_int_distribution<int> count(2, 5), extent(8, 24);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = count(rng), h = extent(rng), w = extent(rng);
    std::vector<BinaryMask> masks;
    for (int k = 0; k < n; ++k) masks.push_back(oracle::random_mask(h, w, rng, 0.2 + 0.15 * k));
    BinaryMask previous;
    for (int radius = 0; radius <= 3; ++radius) {
      const Trimap t = fusion::build_trimap(masks, radius);
      c.expect(t.count(TrimapLabel::Foreground) + t.count(TrimapLabel::Background) + t.count(TrimapLabel::Unknown) ==
                   t.size(),
               "trimap is not a partition");
      for (std::size_t i = 0; i < t.size(); ++i) {
        int ones = 0;
        for (const auto& m : masks) ones += m[i];
        if (t[i] == TrimapLabel::Foreground) c.expect(ones == n, "foreground without consensus");
        if (t[i] == TrimapLabel::Background) c.expect(ones == 0, "background without consensus");
        if (ones != 0 && ones != n) c.expect(t[i] == TrimapLabel::Unknown, "disagreement outside unknown");
      }
      const BinaryMask unknown = t.region(TrimapLabel::Unknown);
      if (radius > 0) {
        for (std::size_t i = 0; i < unknown.size(); ++i) {
          if (previous[i]) c.expect(unknown[i] == 1, "unknown band shrank with radius");
        }
      }
      previous = unknown;
    }
  }
  for (int trial = 0; trial < 100; ++trial) {
    const AlphaMatte alpha = oracle::random_alpha(16, 16, rng);
    const fusion::PseudoMaskSampler sampler{0.2, 0.7, rng()};
    const double tau = fusion::draw_threshold(alpha, sampler);
    c.expect(tau >= 0.2 * alpha.max() && tau <= 0.7 * alpha.max(), "threshold outside range");
    const BinaryMask m = fusion::sample_pseudo_mask(alpha, sampler);
    for (std::size_t i = 0; i < m.size(); ++i) c.expect((m[i] == 1) == (alpha[i] >= tau), "not a level set");
    const auto nested = fusion::equispaced_masks(alpha, 8);
    for (std::size_t k = 1; k < nested.size(); ++k) {
      for (std::size_t i = 0; i < alpha.size(); ++i) {
        if (nested[k][i]) c.expect(nested[k - 1][i] == 1, "masks not nested");
      }
    }
  }
  return finish(c, seconds_since(t0), 30.0, "100 annotation sets x 4 radii, 100 mattes");
}

// ----------------------------------------------------------- criterion 6

Outcome architecture_contracts() {
  const auto t0 = Clock::now();
  Check c;
  harness::TrainConfig config = harness::preset("tiny");
  config.seed = 77;
  const harness::Model a = harness::build_model(config), b = harness::build_model(config);
  const Image image = harness::synth_dataset(1, 32, 3)[0].image;

  const maskgen::ScoreMapSet scores = a.maskgen.sample_masks(image, 8, 5);
  try {
    scores.validate(1e-5);
  } catch (const Error& e) {
    c.expect(false, std::string("score maps: ") + e.what());
  }

  harness::Model randomized = harness::build_model(config);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : randomized.matting.output_conv().weight.values()) v = u(rng);
  const harness::Prediction pred = harness::infer(randomized, image, 8, 5);
  for (double v : pred.alpha.values()) c.expect(v >= 0.0 && v <= 1.0, "alpha outside [0,1]");

  // Zero-initialised tails make a fresh network output sigmoid(0) = 0.5.
  double worst_init = 0.0;
  const harness::Prediction fresh = harness::infer(a, image, 8, 5);
  for (double v : fresh.alpha.values()) worst_init = std::max(worst_init, std::abs(v - 0.5));
  nn::Rng block_rng(1);
  const mattingnet::ResidualBlock block(6, block_rng);
  Tensor x({6, 8, 8});
  for (double& v : x.values()) v = u(rng);
  nn::Tape tape(false);
  const Tensor y = block(tape, tape.constant(x)).value();
  for (std::size_t i = 0; i < x.size(); ++i) worst_init = std::max(worst_init, std::abs(y[i] - x[i]));
  c.expect(worst_init <= 1e-5, fmt::format("identity at init off by {:.3g}", worst_init));

  const harness::Prediction pa = harness::infer(a, image, 8, 5), pb = harness::infer(b, image, 8, 5);
  c.expect(pa.alpha == pb.alpha, "alpha differs across identical seeds");
  bool same_scores = pa.scores.count() == pb.scores.count();
  for (int i = 0; same_scores && i < pa.scores.count(); ++i) same_scores = pa.scores.maps[i] == pb.scores.maps[i];
  c.expect(same_scores, "score maps differ across identical seeds");
  return finish(c, seconds_since(t0), 60.0,
                fmt::format("row-stochastic, alpha in [0,1], init identity err {:.1e}, deterministic", worst_init));
}

// ----------------------------------------------------------- criterion 7

struct OverfitRun {
  harness::Strategy strategy;
  bool use_uncertainty;
  std::uint64_t seed;
  double alpha_l1 = 0.0;
  double dice = 0.0;
  double sad = 0.0;
  double matt_first = 0.0;
  double matt_last = 0.0;
  double seconds = 0.0;
};

harness::TrainConfig overfit_config(harness::Strategy strategy, bool use_uncertainty, std::uint64_t seed) {
  harness::TrainConfig c = harness::preset("tiny");
  c.strategy = strategy;
  c.use_uncertainty = use_uncertainty;
  c.seed = seed;
  c.synth_count = 64;
  c.input_size = 32;
  c.epochs = 200;
  c.augment.enabled = false;
  return c;
}

OverfitRun overfit(harness::Strategy strategy, bool use_uncertainty, std::uint64_t seed, const fs::path& dir) {
  const auto t0 = Clock::now();
  const harness::TrainConfig config = overfit_config(strategy, use_uncertainty, seed);
  const auto data = harness::synth_dataset(harness::SynthOptions::from(config), config.seed);
  harness::TrainOptions options;
  options.out_dir = dir;
  const harness::TrainResult trained = harness::train(config, data, options);

  OverfitRun r{strategy, use_uncertainty, seed};
  const harness::EvaluationOptions eval = harness::EvaluationOptions::from(config);
  double l1 = 0.0;
  for (const harness::Sample& s : data) {
    const harness::Prediction p = harness::infer(trained.model, s.image, eval.n_samples, eval.seed, use_uncertainty);
    l1 += losses::alpha_l1(p.alpha, *s.alpha);
  }
  r.alpha_l1 = l1 / static_cast<double>(data.size());
  const auto rows = harness::evaluate(trained.model, data, eval);
  harness::write_metrics_csv(dir / "metrics.csv", rows);
  const harness::MetricSummary summary = harness::summarize(rows);
  r.dice = summary.dice.mean;
  r.sad = summary.sad.mean;
  r.matt_first = trained.log.front().matt;
  r.matt_last = trained.log.back().matt;
  r.seconds = seconds_since(t0);
  return r;
}

Outcome overfit_sanity(const fs::path& work) {
  const auto t0 = Clock::now();
  Check c;
  const std::pair<harness::Strategy, std::uint64_t> plan[] = {
      {harness::Strategy::None, 1}, {harness::Strategy::Uws, 2}, {harness::Strategy::Oaws, 3}};
  int improved = 0;
  for (const auto& [strategy, seed] : plan) {
    OverfitRun runs[2];
    for (bool use : {true, false}) {
      const std::string name = fmt::format("{}_seed{}_{}", harness::to_string(strategy), seed, use ? "umap" : "zeroed");
      OverfitRun r = overfit(strategy, use, seed, work / "overfit" / name);
      fmt::print("  {:<20} alpha_l1 {:.4f}  dice {:.4f}  sad(x1e-3) {:.6f}  matt {:.4f} -> {:.4f} ({:.3f}x)  {:.0f}s\n",
                 name, r.alpha_l1, r.dice, r.sad, r.matt_first, r.matt_last, r.matt_last / r.matt_first, r.seconds);
      std::fflush(stdout);
      runs[use ? 0 : 1] = r;
    }
    const OverfitRun& on = runs[0];
    c.expect(on.alpha_l1 < 0.05, fmt::format("{} alpha_l1 {:.4f}", harness::to_string(strategy), on.alpha_l1));
    c.expect(on.dice > 0.85, fmt::format("{} dice {:.4f}", harness::to_string(strategy), on.dice));
    if (on.sad <= runs[1].sad) ++improved;
  }
  c.expect(improved >= 2, fmt::format("umap helped SAD on {}/3 seeds", improved));
  return finish(c, seconds_since(t0), 1200.0,
                fmt::format("3 strategies within thresholds; umap SAD <= zeroed on {}/3 seeds", improved));
}

// ----------------------------------------------------------- criterion 8

Outcome reproducibility(const fs::path& work) {
  const auto t0 = Clock::now();
  Check c;
  harness::TrainConfig config = harness::preset("tiny");
  config.seed = 8;
  config.synth_count = 16;
  config.epochs = 10;
  config.strategy = harness::Strategy::Oaws;
  std::string csv[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = work / "repro" / fmt::format("run{}", run);
    const auto data = harness::synth_dataset(harness::SynthOptions::from(config), config.seed);
    harness::TrainOptions options;
    options.out_dir = dir;
    harness::train(config, data, options);
    const harness::Model model = harness::load_checkpoint(dir / "checkpoint.cbor");
    harness::write_metrics_csv(dir / "metrics.csv",
                               harness::evaluate(model, data, harness::EvaluationOptions::from(config)));
    std::ifstream in(dir / "metrics.csv", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    csv[run] = ss.str();
  }
  c.expect(!csv[0].empty(), "empty metrics CSV");
  c.expect(csv[0] == csv[1], "metric CSVs differ");
  return finish(c, seconds_since(t0), 600.0, fmt::format("two runs, {}-byte CSVs identical", csv[0].size()));
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"acceptance checks"};
  std::string work = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--work-dir", work, "scratch directory for training runs");
  app.add_option("--only", only, "run just these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"entropy correctness", entropy_correctness},
      {"OAWS schedule", oaws_schedule},
      {"loss oracles", loss_oracles},
      {"metric oracles", metric_oracles},
      {"fusion properties", fusion_properties},
      {"architecture contracts", architecture_contracts},
      {"overfit sanity", [&] { return overfit_sanity(work); }},
      {"reproducibility", [&] { return reproducibility(work); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (int i = 0; i < 8; ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    fmt::print("{} criterion {}: {} -- {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
