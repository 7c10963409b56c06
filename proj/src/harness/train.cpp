#include "medmat/harness/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

#include "json.hpp"
#include "medmat/core/error.hpp"
#include "medmat/fusion/fusion.hpp"
#include "medmat/nn/ops.hpp"
#include "medmat/nn/optim.hpp"

namespace medmat::harness {

namespace fs = std::filesystem;

double lr_schedule(long step, long total_steps, double base_lr, long warmup_steps) {
  if (total_steps < 1 || warmup_steps < 0 || warmup_steps > total_steps) {
    throw DomainError(fmt::format("bad schedule: total {} warmup {}", total_steps, warmup_steps));
  }
  if (step < 0 || step > total_steps) {
    throw DomainError(fmt::format("schedule step {} outside [0, {}]", step, total_steps));
  }
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps == warmup_steps) return base_lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

std::string train_log_header() {
  return "epoch,lr,ce,kl,seg,l_alpha,l_grad,matt,total,gamma_raw,gamma,sigma1,sigma2";
}

std::string train_log_row(const EpochLog& e) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}", e.epoch, e.lr, e.ce, e.kl, e.seg, e.l_alpha, e.l_grad,
                     e.matt, e.total, e.gamma_raw, e.gamma, e.sigma1, e.sigma2);
}

namespace {

constexpr std::uint64_t kTrainSeedSalt = 0x747261696e696e67ULL;

struct StepLosses {
  double ce, kl, seg, l_alpha, l_grad, matt, total;
};

bool finite(const StepLosses& l) {
  for (double v : {l.ce, l.kl, l.seg, l.l_alpha, l.l_grad, l.matt, l.total}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

[[noreturn]] void diverged(const TrainOptions& options, const TrainConfig& config, const Sample& sample, int epoch,
                           long step, const StepLosses& l, double lr, const Model& model) {
  if (options.out_dir) {
    nlohmann::json dump = {{"epoch", epoch},     {"step", step},           {"sample", sample.id},
                           {"ce", l.ce},         {"kl", l.kl},             {"l_alpha", l.l_alpha},
                           {"l_grad", l.l_grad}, {"total", l.total},       {"lr", lr},
                           {"sigma1", model.uws.sigma1()}, {"sigma2", model.uws.sigma2()},
                           {"config", format_config(config)}};
    // json refuses NaN; render every number as text to keep the dump legible.
    for (auto& [key, value] : dump.items()) {
      if (value.is_number_float()) value = fmt::format("{}", value.get<double>());
    }
    fs::create_directories(*options.out_dir);
    std::ofstream(*options.out_dir / "divergence.json") << dump.dump(2) << '\n';
  }
  throw DivergenceError(fmt::format("non-finite loss at epoch {} step {} sample {} (ce {} kl {} alpha {} grad {})",
                                    epoch, step, sample.id, l.ce, l.kl, l.l_alpha, l.l_grad));
}

}  // namespace

TrainResult train(const TrainConfig& config, std::span<const Sample> data, const TrainOptions& options) {
  config.validate();
  if (data.empty()) throw ArityError("training needs at least one sample");
  for (const Sample& s : data) {
    if (!s.alpha) throw ConfigError(fmt::format("sample {} has no ground-truth alpha", s.id));
  }

  TrainResult result{build_model(config), {}};
  Model& model = result.model;
  const nn::ParamList params = model.parameters();
  nn::GradientBuffer grads(params);
  nn::Adam adam({config.momentum, 0.999, 1e-8, config.weight_decay});
  Rng rng(config.seed ^ kTrainSeedSalt);

  const long n = static_cast<long>(data.size());
  const long batch = std::min<long>(config.batch_size, n);
  const long steps_per_epoch = (n + batch - 1) / batch;
  const long total_steps = steps_per_epoch * config.epochs;
  const long warmup_steps = std::min(total_steps, steps_per_epoch * config.warmup_epochs);
  const int latent_dim = config.backbone.latent_dim;

  std::ofstream log_file;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    save_config(*options.out_dir / "config.ini", config);
    log_file.open(*options.out_dir / "train_log.csv");
    log_file << train_log_header() << '\n';
  }

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  long step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.gamma_raw = losses::oaws_gamma(epoch, config.oaws);
    log.gamma = std::clamp(log.gamma_raw, 0.0, 1.0);
    std::shuffle(order.begin(), order.end(), rng);

    for (long begin = 0; begin < n; begin += batch) {
      const long end = std::min(n, begin + batch);
      grads.zero();
      const double lr = lr_schedule(step + 1, total_steps, config.base_lr, warmup_steps);
      for (long k = begin; k < end; ++k) {
        const Sample& original = data[order[static_cast<std::size_t>(k)]];
        const Sample sample = config.augment.enabled ? augment(original, config.augment, rng) : original;
        const AlphaMatte& gt = *sample.alpha;
        const BinaryMask pseudo = fusion::sample_pseudo_mask(gt, {config.pseudo_lo, config.pseudo_hi, rng()});
        const std::vector<double> noise = maskgen::ProbUnet::draw_noise(latent_dim, rng);
        const std::uint64_t umap_seed = rng();

        nn::Tape tape;
        const nn::Var image = tape.constant(maskgen::image_input(sample.image, config.backbone));
        const nn::Var features = model.maskgen.features(tape, image);
        const maskgen::LatentVars prior = model.maskgen.prior(tape, image);
        const maskgen::LatentVars posterior = model.maskgen.posterior(tape, image, tape.constant(pseudo.to_tensor()));
        const nn::Var score = model.maskgen.decode(tape, features, maskgen::ProbUnet::reparameterize(posterior, noise));
        const nn::Var ce = losses::ce_loss(score, pseudo);
        const nn::Var kl = losses::kl_loss(posterior, prior);
        const nn::Var seg = losses::seg_loss(ce, kl, config.weights);

        // The uncertainty map is an input to the matting network, not a
        // path for gradients.
        const maskgen::UncertaintyMap umap = maskgen::uncertainty_map(
            model.maskgen.sample_masks(features.value(), prior.values(), config.n_samples, umap_seed));
        const Tensor umap_input =
            config.use_uncertainty ? umap.values.to_tensor() : Tensor({1, gt.height(), gt.width()});
        const nn::Var alpha = model.matting.forward(tape, image, features, tape.constant(umap_input));
        const nn::Var l_alpha = losses::alpha_l1(alpha, gt);
        const nn::Var l_grad = losses::grad_loss(alpha, umap.values, gt, config.grad_region_threshold);
        const nn::Var matt = losses::matt_loss(l_alpha, l_grad, config.weights);

        nn::Var total;
        switch (config.strategy) {
          case Strategy::None: total = nn::add(seg, matt); break;
          case Strategy::Uws: total = losses::uws_total(seg, matt, tape.parameter(model.uws.log_sigma)); break;
          case Strategy::Oaws: total = losses::oaws_total(seg, matt, log.gamma); break;
        }

        const StepLosses l{ce.value()[0],     kl.value()[0],   seg.value()[0],  l_alpha.value()[0],
                           l_grad.value()[0], matt.value()[0], total.value()[0]};
        if (!finite(l)) diverged(options, config, sample, epoch, step, l, lr, model);
        log.ce += l.ce;
        log.kl += l.kl;
        log.seg += l.seg;
        log.l_alpha += l.l_alpha;
        log.l_grad += l.l_grad;
        log.matt += l.matt;
        log.total += l.total;

        tape.backward(total);
        grads.accumulate(tape, params);
      }
      grads.scale(1.0 / static_cast<double>(end - begin));
      adam.step(params, grads.grads(), lr);
      log.lr = lr;
      ++step;
    }

    const double inv = 1.0 / static_cast<double>(n);
    for (double* v : {&log.ce, &log.kl, &log.seg, &log.l_alpha, &log.l_grad, &log.matt, &log.total}) *v *= inv;
    log.sigma1 = model.uws.sigma1();
    log.sigma2 = model.uws.sigma2();
    result.log.push_back(log);
    if (log_file.is_open()) log_file << train_log_row(log) << '\n' << std::flush;
    if (options.on_epoch) options.on_epoch(log);
  }

  if (options.out_dir) save_checkpoint(*options.out_dir / "checkpoint.cbor", model, config);
  return result;
}

}  // namespace medmat::harness
