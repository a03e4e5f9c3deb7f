#include "zsda/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "zsda/errors.hpp"

namespace zsda {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.contains(key)) throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + where + key + "'");
  }
}

std::size_t read_count(const json& obj, const char* key, std::size_t fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError("'" + where + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

DatasetSource parse_dataset(const json& j, const std::filesystem::path& base_dir, std::uint64_t seed) {
  DatasetSource src;
  const std::string w = "dataset.";
  if (!j.is_object()) throw ConfigError("dataset must be an object");
  if (j.contains("generator")) {
    const std::string gen = j.at("generator").is_string() ? j.at("generator").get<std::string>() : "";
    if (gen == "rotated_gaussians") {
      check_keys(j, "dataset", {"generator", "angles", "n_per_domain", "classes", "noise", "seed",
                                "anchor_spacing", "normalize"});
      RotatedGaussiansSpec s;
      s.seed = seed;
      read(j, "angles", s.angles_deg, w);
      s.n_per_domain = read_count(j, "n_per_domain", s.n_per_domain, w);
      s.classes = read_count(j, "classes", s.classes, w);
      read(j, "noise", s.noise, w);
      read(j, "seed", s.seed, w);
      if (j.contains("anchor_spacing")) {
        double a = 0;
        read(j, "anchor_spacing", a, w);
        s.anchor_spacing_deg = a;
      }
      src.rotated = s;
    } else if (gen == "slope_regression") {
      check_keys(j, "dataset", {"generator", "slopes", "n_per_domain", "noise", "dim", "shift", "seed",
                                "normalize"});
      SlopeRegressionSpec s;
      s.seed = seed;
      read(j, "slopes", s.slopes, w);
      s.n_per_domain = read_count(j, "n_per_domain", s.n_per_domain, w);
      read(j, "noise", s.noise, w);
      s.dim = read_count(j, "dim", s.dim, w);
      read(j, "shift", s.shift, w);
      read(j, "seed", s.seed, w);
      src.slope = s;
    } else {
      throw ConfigError("unknown dataset generator '" + gen + "'");
    }
  } else {
    check_keys(j, "dataset", {"path", "normalize"});
    read(j, "path", src.path, w);
    if (src.path.empty()) throw ConfigError("dataset needs either a path or a generator");
    std::filesystem::path p(src.path);
    if (p.is_relative() && !base_dir.empty()) src.path = (base_dir / p).string();
  }
  read(j, "normalize", src.normalize, w);
  return src;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides,
                              const std::filesystem::path& base_dir) {
  json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded()) throw ConfigError("config is not valid JSON");
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& o : overrides) apply_override(root, o);

  check_keys(root, "", {"dataset", "methods", "train", "inference", "targets", "train_fraction", "trials",
                        "seed", "keep_traces", "k_values", "source_fractions", "held_out", "model"});
  ExperimentConfig cfg;
  ExperimentSpec& spec = cfg.experiment;
  read(root, "seed", spec.seed, "");
  // Generators without their own seed follow the experiment seed.
  if (root.contains("dataset")) cfg.dataset = parse_dataset(root.at("dataset"), base_dir, spec.seed);

  if (root.contains("methods")) {
    std::vector<std::string> names;
    read(root, "methods", names, "");
    spec.methods.clear();
    for (const auto& n : names) spec.methods.push_back(parse_method(n));
  }
  if (root.contains("train")) {
    const json& t = root.at("train");
    check_keys(t, "train", {"K", "L_train", "lr", "minibatch", "max_epochs", "min_selection_epoch",
                            "likelihood_rescale", "encode_full_set", "hidden", "encoder_hidden",
                            "encoder_layers", "h_layers", "validation_samples"});
    TrainConfig& tc = spec.train;
    const std::string w = "train.";
    tc.latent_dim = read_count(t, "K", tc.latent_dim, w);
    tc.train_samples = read_count(t, "L_train", tc.train_samples, w);
    read(t, "lr", tc.lr, w);
    tc.minibatch = read_count(t, "minibatch", tc.minibatch, w);
    tc.max_epochs = read_count(t, "max_epochs", tc.max_epochs, w);
    tc.min_selection_epoch = read_count(t, "min_selection_epoch", tc.min_selection_epoch, w);
    read(t, "likelihood_rescale", tc.likelihood_rescale, w);
    read(t, "encode_full_set", tc.encode_full_set, w);
    tc.hidden = read_count(t, "hidden", tc.hidden, w);
    tc.encoder_hidden = read_count(t, "encoder_hidden", tc.encoder_hidden, w);
    tc.encoder_layers = read_count(t, "encoder_layers", tc.encoder_layers, w);
    tc.h_layers = read_count(t, "h_layers", tc.h_layers, w);
    tc.validation_samples = read_count(t, "validation_samples", tc.validation_samples, w);
  }
  if (root.contains("inference")) {
    const json& i = root.at("inference");
    check_keys(i, "inference", {"L_test", "mode"});
    spec.inference.samples = read_count(i, "L_test", spec.inference.samples, "inference.");
    std::string mode = "stochastic";
    read(i, "mode", mode, "inference.");
    if (mode == "stochastic") {
      spec.inference.mode = PredictionMode::stochastic;
    } else if (mode == "posterior_mean") {
      spec.inference.mode = PredictionMode::posterior_mean;
    } else {
      throw ConfigError("unknown inference mode '" + mode + "'");
    }
  }
  read(root, "targets", spec.targets, "");
  read(root, "train_fraction", spec.train_fraction, "");
  spec.trials = read_count(root, "trials", spec.trials, "");
  read(root, "keep_traces", spec.keep_traces, "");
  read(root, "k_values", cfg.k_values, "");
  read(root, "source_fractions", cfg.source_fractions, "");
  read(root, "held_out", cfg.held_out, "");
  read(root, "model", cfg.model_path, "");
  if (!cfg.model_path.empty() && !base_dir.empty() && std::filesystem::path(cfg.model_path).is_relative()) {
    cfg.model_path = (base_dir / cfg.model_path).string();
  }
  spec.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides, path.parent_path());
}

DomainDataset materialize(const DatasetSource& source) {
  DomainDataset ds;
  if (source.rotated) {
    ds = gen_rotated_gaussians(*source.rotated);
  } else if (source.slope) {
    ds = gen_slope_regression(*source.slope);
  } else if (!source.path.empty()) {
    ds = load_text(source.path);
  } else {
    throw ConfigError("no dataset configured");
  }
  return source.normalize ? l2_normalize(ds) : ds;
}

}  // namespace zsda
