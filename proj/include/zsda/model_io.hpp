#pragma once

#include <filesystem>
#include <iosfwd>

#include "zsda/objective.hpp"

namespace zsda {

// Text container for a trained model (format version 1):
//
//   zsda-model 1
//   task classification <C>        | task regression
//   sources <id> <id> ...
//   param <name> <rows> <cols>
//   <row 0 values, space separated>
//   ...
//   end
//
// Values use the shortest round-trip decimal form, so a reload is bit-exact. Parameter
// names follow EncoderParams::params() / PredictorParams::params().
void write_model(const TrainedModel& model, std::ostream& out);
TrainedModel read_model(std::istream& in);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace zsda
