#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "zsda/data.hpp"
#include "zsda/harness.hpp"

namespace zsda {

struct DatasetSource {
  std::string path;  // canonical text file; resolved relative to the config file
  std::optional<RotatedGaussiansSpec> rotated;
  std::optional<SlopeRegressionSpec> slope;
  bool normalize = false;
};

// Everything a CLI invocation needs. JSON layout:
//
//   {
//     "dataset": {"path": "data.txt", "normalize": false}
//              | {"generator": "rotated_gaussians", "angles": [...], "n_per_domain": 200,
//                 "classes": 3, "noise": 0.25, "seed": 0, "anchor_spacing": 60}
//              | {"generator": "slope_regression", "slopes": [...], "n_per_domain": 100,
//                 "noise": 0.1, "dim": 2, "shift": 0.0, "seed": 0},
//       (a generator without "seed" uses the top-level seed)
//     "methods": ["proposed", "baseline"],
//     "train": {"K", "L_train", "lr", "minibatch", "max_epochs", "min_selection_epoch",
//               "likelihood_rescale", "encode_full_set", "hidden", "encoder_hidden",
//               "encoder_layers", "h_layers", "validation_samples"},
//     "inference": {"L_test", "mode": "stochastic" | "posterior_mean"},
//     "targets": [...], "train_fraction": 0.8, "trials": 10, "seed": 0, "keep_traces": false,
//     "k_values": [...], "source_fractions": [...], "held_out": [...], "model": "model.txt"
//   }
//
// Unknown keys anywhere are rejected with ConfigError.
struct ExperimentConfig {
  DatasetSource dataset;
  ExperimentSpec experiment;
  std::vector<std::size_t> k_values{2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<double> source_fractions{0.1, 0.15, 0.25, 0.5};
  std::vector<int> held_out;
  std::string model_path;
};

// `overrides` are "dotted.key=value" strings applied to the parsed JSON before
// interpretation; the value is read as JSON when possible, otherwise as a string.
ExperimentConfig parse_config(const std::string& json_text,
                              const std::vector<std::string>& overrides = {},
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

DomainDataset materialize(const DatasetSource& source);

}  // namespace zsda
