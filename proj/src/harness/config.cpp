#include "medmat/harness/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "medmat/core/error.hpp"

namespace medmat::harness {

namespace pt = boost::property_tree;

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::None: return "none";
    case Strategy::Uws: return "uws";
    case Strategy::Oaws: return "oaws";
  }
  return "none";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "none") return Strategy::None;
  if (text == "uws") return Strategy::Uws;
  if (text == "oaws") return Strategy::Oaws;
  throw ConfigError(fmt::format("unknown strategy '{}' (expected none, uws or oaws)", text));
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (input_size < 8) throw ConfigError("input_size must be >= 8");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be nonnegative");
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (eval_targets < 1) throw ConfigError("eval_targets must be >= 1");
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (annotators < 2) throw ConfigError("annotators must be >= 2");
  if (synth_count < 1) throw ConfigError("synth_count must be >= 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be nonnegative");
  if (dilation_radius < 0) throw ConfigError("dilation_radius must be nonnegative");
  if (!(grad_region_threshold >= 0.0)) throw ConfigError("grad_region_threshold must be nonnegative");
  if (!(augment.flip_probability >= 0.0 && augment.flip_probability <= 1.0)) {
    throw ConfigError("flip_probability must lie in [0, 1]");
  }
  weights.validate();
  oaws.validate();
  fusion::PseudoMaskSampler{pseudo_lo, pseudo_hi, 0}.validate();
  backbone.validate();
  matting.validate();
  const int factor = 1 << (backbone.depth - 1);
  if (input_size % factor != 0) {
    throw ConfigError(fmt::format("input_size {} not divisible by 2^(depth-1) = {}", input_size, factor));
  }
}

TrainConfig preset(std::string_view name) {
  TrainConfig c;
  if (name == "synthetic") return c;
  if (name == "tiny") {
    c.dataset = "synthetic";
    c.backbone.depth = 3;
    c.backbone.base_channels = 8;
    c.backbone.convs_per_stage = 1;
    c.matting.unit_channels = {8, 8, 8};
    c.matting.blocks_per_unit = 1;
    c.matting.attention_reduction = 4;
    return c;
  }
  // Per-dataset rows; all share Adam, weight decay 5e-5, momentum 0.9 and
  // loss weights [1, 10, 1, 1].
  if (name == "lidc") {
    c.dataset = "lidc";
    c.base_lr = 5e-4;
    c.epochs = 80;
    c.batch_size = 32;
    c.input_size = 128;
    return c;
  }
  if (name == "isic") {
    c.dataset = "isic";
    c.base_lr = 1e-4;
    c.epochs = 100;
    c.batch_size = 8;
    c.input_size = 256;
    c.backbone.in_channels = 3;
    return c;
  }
  if (name == "brain") {
    c.dataset = "brain";
    c.base_lr = 1e-4;
    c.epochs = 150;
    c.batch_size = 4;
    c.input_size = 128;
    return c;
  }
  throw ConfigError(fmt::format("unknown preset '{}'", name));
}

namespace {

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  if (!(in >> value) || !(in >> std::ws).eof()) throw ConfigError(fmt::format("bad value '{}' for {}", text, key));
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(fmt::format("bad boolean '{}' for {}", text, key));
}

std::vector<int> parse_ints(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_value<int>(key, item));
  if (out.empty()) throw ConfigError(fmt::format("{} needs at least one value", key));
  return out;
}

using Setter = std::function<void(TrainConfig&, const std::string&)>;

template <typename T>
Setter number(T TrainConfig::*field) {
  return [field](TrainConfig& c, const std::string& v) { c.*field = parse_value<T>("", v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset", [](TrainConfig& c, const std::string& v) { c.dataset = v; }},
      {"base_lr", number(&TrainConfig::base_lr)},
      {"epochs", number(&TrainConfig::epochs)},
      {"input_size", number(&TrainConfig::input_size)},
      {"batch_size", number(&TrainConfig::batch_size)},
      {"weight_decay", number(&TrainConfig::weight_decay)},
      {"momentum", number(&TrainConfig::momentum)},
      {"warmup_epochs", number(&TrainConfig::warmup_epochs)},
      {"mu", [](TrainConfig& c, const std::string& v) { c.weights.mu = parse_value<double>("mu", v); }},
      {"upsilon", [](TrainConfig& c, const std::string& v) { c.weights.upsilon = parse_value<double>("upsilon", v); }},
      {"zeta", [](TrainConfig& c, const std::string& v) { c.weights.zeta = parse_value<double>("zeta", v); }},
      {"xi", [](TrainConfig& c, const std::string& v) { c.weights.xi = parse_value<double>("xi", v); }},
      {"strategy", [](TrainConfig& c, const std::string& v) { c.strategy = parse_strategy(v); }},
      {"oaws_a", [](TrainConfig& c, const std::string& v) { c.oaws.a = parse_value<double>("oaws_a", v); }},
      {"oaws_b", [](TrainConfig& c, const std::string& v) { c.oaws.b = parse_value<double>("oaws_b", v); }},
      {"oaws_t", [](TrainConfig& c, const std::string& v) { c.oaws.t = parse_value<double>("oaws_t", v); }},
      {"oaws_phase",
       [](TrainConfig& c, const std::string& v) {
         if (v == "quadratic") {
           c.oaws.phase = losses::OawsPhase::Quadratic;
         } else if (v == "linear") {
           c.oaws.phase = losses::OawsPhase::Linear;
         } else {
           throw ConfigError(fmt::format("oaws_phase must be quadratic or linear, got '{}'", v));
         }
       }},
      {"grad_region_threshold", number(&TrainConfig::grad_region_threshold)},
      {"n_samples", number(&TrainConfig::n_samples)},
      {"eval_targets", number(&TrainConfig::eval_targets)},
      {"folds", number(&TrainConfig::folds)},
      {"seed", number(&TrainConfig::seed)},
      {"use_uncertainty",
       [](TrainConfig& c, const std::string& v) { c.use_uncertainty = parse_bool("use_uncertainty", v); }},
      {"pseudo_lo", number(&TrainConfig::pseudo_lo)},
      {"pseudo_hi", number(&TrainConfig::pseudo_hi)},
      {"augment", [](TrainConfig& c, const std::string& v) { c.augment.enabled = parse_bool("augment", v); }},
      {"flip_probability",
       [](TrainConfig& c, const std::string& v) { c.augment.flip_probability = parse_value<double>("", v); }},
      {"max_rotation_deg",
       [](TrainConfig& c, const std::string& v) { c.augment.max_rotation_deg = parse_value<double>("", v); }},
      {"elastic_sigma",
       [](TrainConfig& c, const std::string& v) { c.augment.elastic_sigma = parse_value<double>("", v); }},
      {"elastic_magnitude",
       [](TrainConfig& c, const std::string& v) { c.augment.elastic_magnitude = parse_value<double>("", v); }},
      {"synth_count", number(&TrainConfig::synth_count)},
      {"annotators", number(&TrainConfig::annotators)},
      {"noise_sigma", number(&TrainConfig::noise_sigma)},
      {"dilation_radius", number(&TrainConfig::dilation_radius)},
      {"in_channels", [](TrainConfig& c, const std::string& v) { c.backbone.in_channels = parse_value<int>("", v); }},
      {"depth", [](TrainConfig& c, const std::string& v) { c.backbone.depth = parse_value<int>("", v); }},
      {"base_channels",
       [](TrainConfig& c, const std::string& v) { c.backbone.base_channels = parse_value<int>("", v); }},
      {"latent_dim", [](TrainConfig& c, const std::string& v) { c.backbone.latent_dim = parse_value<int>("", v); }},
      {"convs_per_stage",
       [](TrainConfig& c, const std::string& v) { c.backbone.convs_per_stage = parse_value<int>("", v); }},
      {"fcomb_layers", [](TrainConfig& c, const std::string& v) { c.backbone.fcomb_layers = parse_value<int>("", v); }},
      {"unit_channels",
       [](TrainConfig& c, const std::string& v) {
         c.matting.unit_channels = parse_ints("unit_channels", v);
         c.matting.unit_count = static_cast<int>(c.matting.unit_channels.size());
       }},
      {"blocks_per_unit",
       [](TrainConfig& c, const std::string& v) { c.matting.blocks_per_unit = parse_value<int>("", v); }},
      {"attention_reduction",
       [](TrainConfig& c, const std::string& v) { c.matting.attention_reduction = parse_value<int>("", v); }},
  };
  return table;
}

}  // namespace

TrainConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config parse error: {}", e.message()));
  }
  TrainConfig config = preset(tree.get<std::string>("preset", "synthetic"));
  for (const auto& [key, node] : tree) {
    if (!node.empty()) throw ConfigError(fmt::format("config sections are not supported ([{}])", key));
    if (key == "preset") continue;
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(fmt::format("unknown config key '{}'", key));
    try {
      it->second(config, node.data());
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}: {}", key, e.what()));
    }
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError(fmt::format("config file not found: {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string format_config(const TrainConfig& c) {
  std::string out;
  auto put = [&out](std::string_view key, const auto& value) { out += fmt::format("{} = {}\n", key, value); };
  put("dataset", c.dataset);
  put("base_lr", c.base_lr);
  put("epochs", c.epochs);
  put("input_size", c.input_size);
  put("batch_size", c.batch_size);
  put("weight_decay", c.weight_decay);
  put("momentum", c.momentum);
  put("warmup_epochs", c.warmup_epochs);
  put("mu", c.weights.mu);
  put("upsilon", c.weights.upsilon);
  put("zeta", c.weights.zeta);
  put("xi", c.weights.xi);
  put("strategy", to_string(c.strategy));
  put("oaws_a", c.oaws.a);
  put("oaws_b", c.oaws.b);
  put("oaws_t", c.oaws.t);
  put("oaws_phase", c.oaws.phase == losses::OawsPhase::Quadratic ? "quadratic" : "linear");
  put("grad_region_threshold", c.grad_region_threshold);
  put("n_samples", c.n_samples);
  put("eval_targets", c.eval_targets);
  put("folds", c.folds);
  put("seed", c.seed);
  put("use_uncertainty", c.use_uncertainty);
  put("pseudo_lo", c.pseudo_lo);
  put("pseudo_hi", c.pseudo_hi);
  put("augment", c.augment.enabled);
  put("flip_probability", c.augment.flip_probability);
  put("max_rotation_deg", c.augment.max_rotation_deg);
  put("elastic_sigma", c.augment.elastic_sigma);
  put("elastic_magnitude", c.augment.elastic_magnitude);
  put("synth_count", c.synth_count);
  put("annotators", c.annotators);
  put("noise_sigma", c.noise_sigma);
  put("dilation_radius", c.dilation_radius);
  put("in_channels", c.backbone.in_channels);
  put("depth", c.backbone.depth);
  put("base_channels", c.backbone.base_channels);
  put("latent_dim", c.backbone.latent_dim);
  put("convs_per_stage", c.backbone.convs_per_stage);
  put("fcomb_layers", c.backbone.fcomb_layers);
  put("unit_channels", fmt::format("{}", fmt::join(c.matting.unit_channels, ",")));
  put("blocks_per_unit", c.matting.blocks_per_unit);
  put("attention_reduction", c.matting.attention_reduction);
  return out;
}

void save_config(const std::filesystem::path& path, const TrainConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw NotFoundError(fmt::format("cannot write config: {}", path.string()));
  out << format_config(config);
}

}  // namespace medmat::harness
