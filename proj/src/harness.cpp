#include "zsda/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "zsda/errors.hpp"
#include "zsda/io_util.hpp"

namespace zsda {

std::string to_string(Method m) { return m == Method::proposed ? "proposed" : "baseline"; }
std::string to_string(MetricKind k) { return k == MetricKind::accuracy ? "accuracy" : "rmse"; }

Method parse_method(const std::string& s) {
  if (s == "proposed") return Method::proposed;
  if (s == "baseline") return Method::baseline;
  throw ConfigError("unknown method '" + s + "'");
}

void ExperimentSpec::validate() const {
  if (trials == 0) throw ConfigError("trials must be at least 1");
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (inference.samples == 0) throw ConfigError("inference samples must be at least 1");
  train.validate();
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {std::nan(""), std::nan("")};
  double s = 0.0;
  for (double v : values) s += v;
  const double m = s / static_cast<double>(values.size());
  if (values.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

// ---- report ---------------------------------------------------------------------------

std::vector<double> MetricsReport::trial_values(const std::string& target, Method m) const {
  std::vector<double> out;
  for (const auto& r : records)
    if (r.target == target && r.method == m) out.push_back(r.value);
  return out;
}

std::vector<SummaryRow> MetricsReport::summary() const {
  std::vector<std::pair<std::string, Method>> keys;
  for (const auto& r : records) {
    auto key = std::make_pair(r.target, r.method);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  std::vector<SummaryRow> out;
  for (const auto& [target, method] : keys) {
    const auto vals = trial_values(target, method);
    const auto [m, s] = mean_std(vals);
    out.push_back({target, method, m, s, vals.size()});
  }
  return out;
}

double MetricsReport::mean_over_targets(Method m) const {
  std::vector<double> means;
  for (const auto& row : summary())
    if (row.method == m) means.push_back(row.mean);
  return mean_std(means).first;
}

void MetricsReport::write_csv(std::ostream& out) const {
  out << "target,method,trial,metric,value\n";
  for (const auto& r : records) {
    out << r.target << ',' << to_string(r.method) << ',' << r.trial << ',' << to_string(metric)
        << ',' << format_double(r.value) << '\n';
  }
}

std::string MetricsReport::to_csv() const {
  std::ostringstream ss;
  write_csv(ss);
  return ss.str();
}

std::string MetricsReport::summary_json() const {
  nlohmann::ordered_json j;
  j["metric"] = to_string(metric);
  j["metadata"] = metadata;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : summary()) {
    rows.push_back({{"target", row.target},
                    {"method", to_string(row.method)},
                    {"mean", row.mean},
                    {"std", row.stddev},
                    {"trials", row.trials}});
  }
  j["rows"] = rows;
  nlohmann::ordered_json overall;
  for (Method m : {Method::proposed, Method::baseline}) {
    const double v = mean_over_targets(m);
    if (!std::isnan(v)) overall[to_string(m)] = v;
  }
  j["mean_over_targets"] = overall;
  return j.dump(2) + "\n";
}

// ---- per-trial pieces -------------------------------------------------------------------

std::uint64_t trial_seed(const ExperimentSpec& spec, const std::string& target, std::size_t trial) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over the target label
  for (unsigned char c : target) h = (h ^ c) * 1099511628211ULL;
  return derive_seed(derive_seed(spec.seed, h), trial);
}

DatasetSplit trial_split(const DomainDataset& ds, const ExperimentSpec& spec,
                         const std::vector<int>& held_out, std::uint64_t seed) {
  return split(ds, SplitSpec{held_out, spec.train_fraction, derive_seed(seed, 1)});
}

TrainedModel fit_proposed(const DatasetSplit& s, const ExperimentSpec& spec, std::uint64_t seed) {
  TrainConfig cfg = spec.train;
  cfg.seed = derive_seed(seed, 2);
  return train(s.train, cfg, s.val);
}

TrainedBaseline fit_baseline(const DatasetSplit& s, const ExperimentSpec& spec, std::uint64_t seed) {
  TrainConfig cfg = spec.train;
  cfg.seed = derive_seed(seed, 2);
  return train_baseline(pool(s.train), pool(s.val), s.train.task, cfg);
}

std::vector<double> score_proposed(const TrainedModel& model, const DomainDataset& targets,
                                   const InferenceConfig& cfg) {
  std::vector<double> out;
  for (const auto& d : targets.domains) {
    InferenceConfig icfg = cfg;
    icfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(d.id)));
    const auto preds = predict_domain(model.encoder, model.predictor, d.x, d.x, icfg);
    out.push_back(targets.task.is_classification() ? accuracy(preds, d.y) : rmse(preds, d.y));
  }
  return out;
}

std::vector<double> score_baseline(const TrainedBaseline& model, const DomainDataset& targets) {
  std::vector<double> out;
  for (const auto& d : targets.domains) {
    const auto preds = predict_baseline(model.params, d.x);
    out.push_back(targets.task.is_classification() ? accuracy(preds, d.y) : rmse(preds, d.y));
  }
  return out;
}

std::size_t threads_from_env() {
  const char* v = std::getenv("ZSDA_THREADS");
  if (!v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  return (end && *end == '\0' && n > 0) ? static_cast<std::size_t>(n) : 1;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first failure (lowest job
// index) is rethrown after all workers stop.
void run_jobs(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i; !failed && (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        failed = true;
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Job {
  std::vector<int> held_out;
  std::string target;
  Method method;
  std::size_t trial;
  std::uint64_t seed;
};

std::string describe(const Job& j) {
  return "target " + j.target + ", method " + to_string(j.method) + ", trial " + std::to_string(j.trial);
}

// Trains and scores each job; per job the value is the mean over its target domains.
void execute(const DomainDataset& ds, const ExperimentSpec& spec, const std::vector<Job>& jobs,
             MetricsReport& report) {
  std::vector<double> values(jobs.size());
  std::vector<TrainingTrace> traces(jobs.size());
  run_jobs(jobs.size(), spec.threads, [&](std::size_t i) {
    const Job& job = jobs[i];
    try {
      const DatasetSplit s = trial_split(ds, spec, job.held_out, job.seed);
      std::vector<double> scores;
      if (job.method == Method::proposed) {
        auto model = fit_proposed(s, spec, job.seed);
        InferenceConfig icfg = spec.inference;
        icfg.seed = derive_seed(job.seed, 3);
        scores = score_proposed(model, s.test, icfg);
        traces[i] = std::move(model.trace);
      } else {
        auto model = fit_baseline(s, spec, job.seed);
        scores = score_baseline(model, s.test);
        traces[i] = std::move(model.trace);
      }
      values[i] = mean_std(scores).first;
    } catch (const std::exception& e) {
      throw TrainingError(describe(job) + ": " + e.what());
    }
  });
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    report.records.push_back({jobs[i].target, jobs[i].method, jobs[i].trial, values[i]});
    if (spec.keep_traces) {
      report.traces.push_back({jobs[i].target, jobs[i].method, jobs[i].trial, std::move(traces[i])});
    }
  }
}

MetricsReport make_report(const DomainDataset& ds, const ExperimentSpec& spec) {
  MetricsReport r;
  r.metric = ds.task.is_classification() ? MetricKind::accuracy : MetricKind::rmse;
  r.metadata["K"] = std::to_string(spec.train.latent_dim);
  r.metadata["trials"] = std::to_string(spec.trials);
  r.metadata["seed"] = std::to_string(spec.seed);
  r.metadata["hyperparameter_selection"] = "global (one configuration for all targets)";
  return r;
}

}  // namespace

MetricsReport run_loo(const DomainDataset& ds, const ExperimentSpec& spec) {
  spec.validate();
  ds.validate();
  if (ds.domain_count() < 2) throw ConfigError("leave-one-domain-out needs at least two domains");
  std::vector<int> targets = spec.targets.empty() ? ds.ids() : spec.targets;
  for (int t : targets) {
    if (!ds.find(t)) throw ConfigError("target domain " + std::to_string(t) + " not in dataset");
  }
  std::vector<Job> jobs;
  for (int t : targets)
    for (Method m : spec.methods)
      for (std::size_t trial = 0; trial < spec.trials; ++trial) {
        const std::string label = std::to_string(t);
        jobs.push_back({{t}, label, m, trial, trial_seed(spec, label, trial)});
      }
  MetricsReport report = make_report(ds, spec);
  report.metadata["protocol"] = "leave-one-domain-out";
  execute(ds, spec, jobs, report);
  return report;
}

std::vector<MetricsReport> sweep_k(const DomainDataset& ds, const ExperimentSpec& spec,
                                   std::span<const std::size_t> k_values) {
  for (auto k : k_values)
    if (k < 1 || k > 64) throw ConfigError("K values must lie in 1..64");
  const bool with_baseline =
      std::find(spec.methods.begin(), spec.methods.end(), Method::baseline) != spec.methods.end();
  const bool with_proposed =
      std::find(spec.methods.begin(), spec.methods.end(), Method::proposed) != spec.methods.end();

  MetricsReport baseline;
  if (with_baseline) {
    ExperimentSpec b = spec;
    b.methods = {Method::baseline};
    baseline = run_loo(ds, b);
  }
  std::vector<MetricsReport> out;
  for (auto k : k_values) {
    ExperimentSpec p = spec;
    p.train.latent_dim = k;
    MetricsReport r;
    if (with_proposed) {
      p.methods = {Method::proposed};
      r = run_loo(ds, p);
    } else {
      r = make_report(ds, p);
    }
    r.metadata["K"] = std::to_string(k);
    r.records.insert(r.records.end(), baseline.records.begin(), baseline.records.end());
    r.traces.insert(r.traces.end(), baseline.traces.begin(), baseline.traces.end());
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<int> choose_sources(const DomainDataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("source fraction must lie in (0, 1)");
  const std::size_t d = ds.domain_count();
  const auto n = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(d)));
  if (n == 0) throw ConfigError("source fraction " + std::to_string(fraction) + " selects no source domains");
  if (n >= d) throw ConfigError("source fraction " + std::to_string(fraction) + " leaves no target domains");
  auto ids = ds.ids();
  Rng rng(seed);
  rng.shuffle(std::span(ids));
  ids.resize(n);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<MetricsReport> sweep_sources(const DomainDataset& ds, const ExperimentSpec& spec,
                                         std::span<const double> fractions) {
  spec.validate();
  ds.validate();
  std::vector<MetricsReport> out;
  for (double f : fractions) {
    std::vector<Job> jobs;
    for (std::size_t trial = 0; trial < spec.trials; ++trial) {
      const std::uint64_t seed = trial_seed(spec, "sources:" + format_double(f), trial);
      const auto sources = choose_sources(ds, f, derive_seed(seed, 5));
      std::set<int> src(sources.begin(), sources.end());
      std::vector<int> held;
      for (int id : ds.ids())
        if (!src.contains(id)) held.push_back(id);
      for (Method m : spec.methods) jobs.push_back({held, "all", m, trial, seed});
    }
    MetricsReport report = make_report(ds, spec);
    report.metadata["protocol"] = "source-fraction";
    report.metadata["source_fraction"] = format_double(f);
    execute(ds, spec, jobs, report);
    out.push_back(std::move(report));
  }
  return out;
}

}  // namespace zsda
