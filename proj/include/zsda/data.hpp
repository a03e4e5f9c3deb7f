#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zsda/matrix.hpp"
#include "zsda/task.hpp"

namespace zsda {

struct Domain {
  int id = 0;
  Matrix x;               // N_d x M
  std::vector<double> y;  // N_d targets

  std::size_t size() const noexcept { return y.size(); }
  Domain subset(std::span<const std::size_t> rows) const;
};

struct DomainDataset {
  TaskSpec task;
  std::size_t dim = 0;
  std::vector<Domain> domains;

  std::size_t domain_count() const noexcept { return domains.size(); }
  std::size_t total_points() const noexcept;
  std::vector<int> ids() const;
  const Domain* find(int id) const;
  // Throws SchemaError when shapes, labels or ids are inconsistent.
  void validate() const;
};

// Source data with domain identity removed, as consumed by the no-adaptation baseline.
struct PooledData {
  Matrix x;
  std::vector<double> y;

  std::size_t size() const noexcept { return y.size(); }
};
PooledData pool(const DomainDataset& ds);

// ---- text format -----------------------------------------------------------------------
// line 1: "task=classification C=<int> M=<int>" or "task=regression M=<int>"
// lines 2+: "<domain-id>,<label>,<x1>,...,<xM>"; '#' lines are comments.
// Class labels are 1..C on disk. Domains appear in order of first occurrence.
DomainDataset parse_text(std::istream& in);
DomainDataset load_text(const std::filesystem::path& path);
void write_text(const DomainDataset& ds, std::ostream& out);
void save_text(const DomainDataset& ds, const std::filesystem::path& path);

// Scales every feature vector to unit Euclidean norm; zero vectors stay zero.
DomainDataset l2_normalize(const DomainDataset& ds);

// ---- splits -------------------------------------------------------------------------------

struct SplitSpec {
  std::vector<int> held_out;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct DatasetSplit {
  DomainDataset train;
  DomainDataset val;
  DomainDataset test;
};

// Held-out domains go to `test` whole; every other domain is shuffled (seeded) and cut
// into round(fraction * N_d) training points and the rest for validation.
DatasetSplit split(const DomainDataset& ds, const SplitSpec& spec);

// Keeps only the listed domains, in dataset order.
DomainDataset select_domains(const DomainDataset& ds, std::span<const int> ids);

// ---- synthetic families ----------------------------------------------------------------

// Class c of the domain at angle theta is drawn from N(R(theta) m_c, noise^2 I) in R^2,
// with anchors m_c = (cos(c s), sin(c s)) on the unit circle. The anchor spacing s
// defaults to 360/C degrees (anchors spread over the whole circle). Domain ids are
// 0..D-1 in the order of `angles_deg`.
struct RotatedGaussiansSpec {
  std::vector<double> angles_deg;
  std::size_t n_per_domain = 200;
  std::size_t classes = 3;
  double noise = 0.25;
  std::uint64_t seed = 0;
  std::optional<double> anchor_spacing_deg;
};
DomainDataset gen_rotated_gaussians(const RotatedGaussiansSpec& spec);

// Per domain with slope a_d: x ~ U[-1,1]^M + shift * a_d * u and y = a_d (w . x) + eps,
// eps ~ N(0, noise^2), with w = (1,..,1)/sqrt(M) and u a fixed unit vector orthogonal
// to w. shift = 0 gives identically distributed features in every domain.
struct SlopeRegressionSpec {
  std::vector<double> slopes;
  std::size_t n_per_domain = 100;
  double noise = 0.1;
  std::size_t dim = 2;
  double shift = 0.0;
  std::uint64_t seed = 0;
};
DomainDataset gen_slope_regression(const SlopeRegressionSpec& spec);
std::vector<double> slope_direction(std::size_t dim);
std::vector<double> slope_shift_direction(std::size_t dim);

}  // namespace zsda
