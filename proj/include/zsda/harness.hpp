#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "zsda/baseline.hpp"
#include "zsda/data.hpp"
#include "zsda/inference.hpp"
#include "zsda/objective.hpp"

namespace zsda {

enum class Method { proposed, baseline };
enum class MetricKind { accuracy, rmse };

std::string to_string(Method m);
std::string to_string(MetricKind k);
Method parse_method(const std::string& s);

struct ExperimentSpec {
  std::vector<Method> methods{Method::proposed, Method::baseline};
  TrainConfig train;
  InferenceConfig inference;
  std::vector<int> targets;  // held-out domains for run_loo; empty means every domain
  double train_fraction = 0.8;
  std::size_t trials = 10;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool keep_traces = false;

  void validate() const;
};

struct TrialRecord {
  std::string target;  // domain id, or "all" when a trial covers several target domains
  Method method;
  std::size_t trial;
  double value;
};

struct TraceRecord {
  std::string target;
  Method method;
  std::size_t trial;
  TrainingTrace trace;
};

struct SummaryRow {
  std::string target;
  Method method;
  double mean;
  double stddev;  // sample standard deviation (n - 1); 0 for a single trial
  std::size_t trials;
};

struct MetricsReport {
  MetricKind metric = MetricKind::accuracy;
  std::vector<TrialRecord> records;
  std::vector<TraceRecord> traces;
  std::map<std::string, std::string> metadata;

  // Grouped by (target, method) in first-appearance order, recomputed from records.
  std::vector<SummaryRow> summary() const;
  // Equal-weight mean of per-target means for one method.
  double mean_over_targets(Method m) const;
  std::vector<double> trial_values(const std::string& target, Method m) const;

  void write_csv(std::ostream& out) const;  // target,method,trial,metric,value
  std::string to_csv() const;
  std::string summary_json() const;
};

// Mean and sample standard deviation, accumulated left to right.
std::pair<double, double> mean_std(std::span<const double> values);

// Per-trial pieces, exposed so callers can inspect trained parameters.
std::uint64_t trial_seed(const ExperimentSpec& spec, const std::string& target, std::size_t trial);
DatasetSplit trial_split(const DomainDataset& ds, const ExperimentSpec& spec,
                         const std::vector<int>& held_out, std::uint64_t seed);
TrainedModel fit_proposed(const DatasetSplit& split, const ExperimentSpec& spec, std::uint64_t seed);
TrainedBaseline fit_baseline(const DatasetSplit& split, const ExperimentSpec& spec, std::uint64_t seed);
// Per target domain metric, in the order of `targets.domains`.
std::vector<double> score_proposed(const TrainedModel& model, const DomainDataset& targets,
                                   const InferenceConfig& cfg);
std::vector<double> score_baseline(const TrainedBaseline& model, const DomainDataset& targets);

// Leave-one-domain-out: each target domain is held out in turn, both methods are trained
// on the remaining domains for every trial and scored on the held-out domain.
MetricsReport run_loo(const DomainDataset& ds, const ExperimentSpec& spec);

// One report per K. The baseline does not depend on K and is trained once; its records
// are copied into every report.
std::vector<MetricsReport> sweep_k(const DomainDataset& ds, const ExperimentSpec& spec,
                                   std::span<const std::size_t> k_values);

// Sources are a random share (seeded per trial) of the domains, the rest are targets.
// Each trial records the equal-weight mean metric over its target domains.
std::vector<MetricsReport> sweep_sources(const DomainDataset& ds, const ExperimentSpec& spec,
                                         std::span<const double> fractions);
// Domain ids used as sources by sweep_sources for one trial.
std::vector<int> choose_sources(const DomainDataset& ds, double fraction, std::uint64_t seed);

// Worker count from ZSDA_THREADS (unset or invalid: 1).
std::size_t threads_from_env();

}  // namespace zsda
