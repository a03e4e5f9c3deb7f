#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "zsda/encoder.hpp"

namespace zsda {

// Per-domain posterior table: id, mu_1..mu_K, logvar_1..logvar_K.
std::string latents_csv(std::span<const LatentPosterior> posteriors);

// Static SVG of 2-D posterior means with 1-sigma and 2-sigma axis-aligned ellipses.
// Shapes are drawn in data coordinates (the group transform maps them to the canvas),
// so an ellipse's rx/ry attributes are k * exp(0.5 logvar) for k = 1, 2. Source domains
// are blue, held-out domains red. Throws ShapeError unless K == 2.
std::string latents_svg(std::span<const LatentPosterior> posteriors, const std::set<int>& held_out);

struct SweepSeries {
  std::string name;
  std::vector<double> mean;
  std::vector<double> stderr_;
};

// Static line chart with standard-error bars.
std::string sweep_svg(const std::string& title, const std::string& x_label,
                      const std::string& y_label, std::span<const double> xs,
                      std::span<const SweepSeries> series);

}  // namespace zsda
