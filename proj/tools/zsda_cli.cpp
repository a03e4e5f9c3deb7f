#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "zsda/config.hpp"
#include "zsda/errors.hpp"
#include "zsda/harness.hpp"
#include "zsda/inference.hpp"
#include "zsda/io_util.hpp"
#include "zsda/model_io.hpp"
#include "zsda/report.hpp"

namespace fs = std::filesystem;
using namespace zsda;

namespace {

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

// Failures that mean the invocation itself is wrong (exit 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ExperimentConfig load(const Options& opt) {
  if (opt.config.empty()) throw UsageError("--config is required");
  if (!fs::exists(opt.config)) throw UsageError("config file not found: " + opt.config);
  std::vector<std::string> overrides = opt.overrides;
  if (opt.seed) overrides.push_back("seed=" + std::to_string(*opt.seed));
  ExperimentConfig cfg = load_config(opt.config, overrides);
  cfg.experiment.threads = threads_from_env();
  return cfg;
}

DomainDataset dataset_of(const ExperimentConfig& cfg) {
  const auto& src = cfg.dataset;
  if (!src.rotated && !src.slope) {
    if (src.path.empty()) throw UsageError("config has no dataset");
    if (!fs::exists(src.path)) throw UsageError("dataset file not found: " + src.path);
  }
  return materialize(src);
}

fs::path out_dir(const Options& opt) {
  fs::path dir(opt.out);
  fs::create_directories(dir);
  return dir;
}

void write_report(const MetricsReport& report, const fs::path& dir, bool traces) {
  fs::create_directories(dir);
  write_file_atomic(dir / "metrics.csv", report.to_csv());
  write_file_atomic(dir / "summary.json", report.summary_json());
  if (!traces) return;
  fs::create_directories(dir / "traces");
  for (const auto& t : report.traces) {
    const std::string name = t.target + "_" + to_string(t.method) + "_" + std::to_string(t.trial) + ".csv";
    write_file_atomic(dir / "traces" / name, t.trace.to_csv());
  }
}

std::string k_label(std::size_t k) { return "k" + std::to_string(k); }

std::string fraction_label(double f) { return "fraction_" + format_double(f); }

// One table row per (sweep value, method): mean and standard error over trials, where a
// trial's value is the equal-weight mean over its target domains.
void write_sweep(const std::string& stem, const std::string& title, const std::string& x_name,
                 const std::vector<double>& xs, const std::vector<MetricsReport>& reports,
                 const fs::path& dir) {
  std::ostringstream csv;
  csv << x_name << ",method,mean,stderr,trials\n";
  std::vector<SweepSeries> series;
  for (Method m : {Method::proposed, Method::baseline}) {
    SweepSeries s{to_string(m), {}, {}};
    bool any = false;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      std::vector<std::string> targets;
      for (const auto& r : reports[i].records)
        if (r.method == m && std::find(targets.begin(), targets.end(), r.target) == targets.end())
          targets.push_back(r.target);
      if (targets.empty()) {
        s.mean.push_back(std::nan(""));
        s.stderr_.push_back(std::nan(""));
        continue;
      }
      any = true;
      // Average across targets within each trial, then across trials.
      std::vector<double> per_trial;
      for (std::size_t t = 0;; ++t) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& r : reports[i].records)
          if (r.method == m && r.trial == t) { sum += r.value; ++n; }
        if (n == 0) break;
        per_trial.push_back(sum / static_cast<double>(n));
      }
      const auto [mean, sd] = mean_std(per_trial);
      const double se = sd / std::sqrt(static_cast<double>(per_trial.size()));
      s.mean.push_back(mean);
      s.stderr_.push_back(se);
      csv << format_double(xs[i]) << ',' << to_string(m) << ',' << format_double(mean) << ','
          << format_double(se) << ',' << per_trial.size() << '\n';
    }
    if (any) series.push_back(std::move(s));
  }
  const std::string metric = reports.empty() ? "metric" : to_string(reports.front().metric);
  write_file_atomic(dir / (stem + ".csv"), csv.str());
  write_file_atomic(dir / (stem + ".svg"), sweep_svg(title, x_name, metric, xs, series));
}

int cmd_gen(const Options& opt) {
  const auto cfg = load(opt);
  if (!cfg.dataset.rotated && !cfg.dataset.slope) throw UsageError("gen needs a dataset generator");
  const auto ds = materialize(cfg.dataset);
  const auto path = out_dir(opt) / "dataset.txt";
  save_text(ds, path);
  std::cout << "wrote " << path.string() << " (" << ds.domain_count() << " domains, " << ds.total_points()
            << " points)\n";
  return 0;
}

int cmd_train(const Options& opt) {
  const auto cfg = load(opt);
  const auto ds = dataset_of(cfg);
  const auto& spec = cfg.experiment;
  const auto sp = trial_split(ds, spec, cfg.held_out, spec.seed);
  if (sp.train.domain_count() == 0) throw UsageError("no source domains left after holding out");
  const auto model = fit_proposed(sp, spec, spec.seed);
  const auto dir = out_dir(opt);
  save_model(model, dir / "model.txt");
  write_file_atomic(dir / "trace.csv", model.trace.to_csv());
  std::cout << "wrote " << (dir / "model.txt").string() << " (best epoch " << model.trace.best_epoch << ")\n";
  if (sp.test.domain_count() > 0) {
    const auto scores = score_proposed(model, sp.test, spec.inference);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      std::cout << "held-out domain " << sp.test.domains[i].id << ": "
                << (ds.task.is_classification() ? "accuracy " : "rmse ") << format_double(scores[i]) << '\n';
    }
  }
  return 0;
}

int cmd_run(const Options& opt) {
  const auto cfg = load(opt);
  const auto ds = dataset_of(cfg);
  const auto report = run_loo(ds, cfg.experiment);
  const auto dir = out_dir(opt);
  write_report(report, dir, cfg.experiment.keep_traces);
  for (const auto& row : report.summary()) {
    std::cout << row.target << ' ' << to_string(row.method) << ' ' << format_double(row.mean) << " +- "
              << format_double(row.stddev) << '\n';
  }
  return 0;
}

int cmd_sweep_k(const Options& opt) {
  const auto cfg = load(opt);
  const auto ds = dataset_of(cfg);
  const auto reports = sweep_k(ds, cfg.experiment, cfg.k_values);
  const auto dir = out_dir(opt);
  std::vector<double> xs;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    xs.push_back(static_cast<double>(cfg.k_values[i]));
    write_report(reports[i], dir / k_label(cfg.k_values[i]), cfg.experiment.keep_traces);
  }
  write_sweep("sweep_k", "Metric versus latent dimension", "K", xs, reports, dir);
  std::cout << "wrote " << (dir / "sweep_k.csv").string() << '\n';
  return 0;
}

int cmd_sweep_sources(const Options& opt) {
  const auto cfg = load(opt);
  const auto ds = dataset_of(cfg);
  const auto reports = sweep_sources(ds, cfg.experiment, cfg.source_fractions);
  const auto dir = out_dir(opt);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    write_report(reports[i], dir / fraction_label(cfg.source_fractions[i]), cfg.experiment.keep_traces);
  }
  write_sweep("sweep_sources", "Metric versus share of source domains", "source_fraction",
              cfg.source_fractions, reports, dir);
  std::cout << "wrote " << (dir / "sweep_sources.csv").string() << '\n';
  return 0;
}

int cmd_export_latents(const Options& opt, const std::string& model_flag) {
  const auto cfg = load(opt);
  const std::string model_path = model_flag.empty() ? cfg.model_path : model_flag;
  if (model_path.empty()) throw UsageError("no model given (use --model or the config's \"model\")");
  if (!fs::exists(model_path)) throw UsageError("model file not found: " + model_path);
  const auto ds = dataset_of(cfg);
  const auto model = load_model(model_path);
  if (model.encoder.input_dim() != ds.dim || model.predictor.task != ds.task) {
    throw ShapeError("model expects " + to_string(model.predictor.task.kind) + " with M=" +
                     std::to_string(model.encoder.input_dim()) + ", dataset is " + to_string(ds.task.kind) +
                     " with M=" + std::to_string(ds.dim));
  }
  const auto posts = export_posteriors(model.encoder, ds.domains);
  const auto dir = out_dir(opt);
  write_file_atomic(dir / "latents.csv", latents_csv(posts));
  std::cout << "wrote " << (dir / "latents.csv").string() << '\n';
  if (model.encoder.latent_dim() == 2) {
    const std::set<int> sources(model.source_ids.begin(), model.source_ids.end());
    std::set<int> held_out;
    for (const auto& d : ds.domains)
      if (!sources.contains(d.id)) held_out.insert(d.id);
    write_file_atomic(dir / "latents.svg", latents_svg(posts, held_out));
    std::cout << "wrote " << (dir / "latents.svg").string() << '\n';
  } else {
    std::cout << "notice: latents.svg needs K=2 (model has K=" << model.encoder.latent_dim()
              << "); wrote CSV only\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot domain adaptation with latent domain vectors"};
  app.require_subcommand(1);
  Options opt;
  std::string model_flag;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON experiment config")->required();
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", opt.seed, "Experiment seed (overrides the config)");
    sub->add_option("--set", opt.overrides, "Override a config key: dotted.key=value (repeatable)");
  };
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset file");
  auto* tr = app.add_subcommand("train", "Train one model on the non-held-out domains");
  auto* run = app.add_subcommand("run", "Leave-one-domain-out experiment");
  auto* sk = app.add_subcommand("sweep-k", "Repeat the experiment over latent dimensions");
  auto* ss = app.add_subcommand("sweep-sources", "Repeat the experiment over source-domain shares");
  auto* ex = app.add_subcommand("export-latents", "Write per-domain latent posteriors");
  for (auto* s : {gen, tr, run, sk, ss, ex}) add_common(s);
  ex->add_option("--model", model_flag, "Model file (overrides the config's \"model\")");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen(opt);
    if (*tr) return cmd_train(opt);
    if (*run) return cmd_run(opt);
    if (*sk) return cmd_sweep_k(opt);
    if (*ss) return cmd_sweep_sources(opt);
    if (*ex) return cmd_export_latents(opt, model_flag);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "error: model/dataset mismatch: " << e.what() << '\n';
    return 1;
  } catch (const EmptyInputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: parse failure: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "error: invalid dataset: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
