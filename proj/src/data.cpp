#include "zsda/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "zsda/errors.hpp"
#include "zsda/io_util.hpp"
#include "zsda/rng.hpp"

namespace zsda {

Domain Domain::subset(std::span<const std::size_t> rows) const {
  Domain d;
  d.id = id;
  d.x = x.select_rows(rows);
  d.y.reserve(rows.size());
  for (auto r : rows) d.y.push_back(y.at(r));
  return d;
}

std::size_t DomainDataset::total_points() const noexcept {
  std::size_t n = 0;
  for (const auto& d : domains) n += d.size();
  return n;
}

std::vector<int> DomainDataset::ids() const {
  std::vector<int> out;
  out.reserve(domains.size());
  for (const auto& d : domains) out.push_back(d.id);
  return out;
}

const Domain* DomainDataset::find(int id) const {
  for (const auto& d : domains)
    if (d.id == id) return &d;
  return nullptr;
}

void DomainDataset::validate() const {
  if (dim == 0) throw SchemaError("feature dimension must be positive");
  if (task.is_classification() && task.classes < 2) {
    throw SchemaError("classification requires C >= 2");
  }
  std::set<int> seen;
  for (const auto& d : domains) {
    if (!seen.insert(d.id).second) throw SchemaError("duplicate domain id " + std::to_string(d.id));
    if (d.size() == 0) throw SchemaError("domain " + std::to_string(d.id) + " is empty");
    if (d.x.rows() != d.y.size() || d.x.cols() != dim) {
      throw SchemaError("domain " + std::to_string(d.id) + " has features " + d.x.shape_string() +
                        " for " + std::to_string(d.y.size()) + " targets, M=" + std::to_string(dim));
    }
    if (!d.x.all_finite()) throw SchemaError("non-finite feature in domain " + std::to_string(d.id));
    for (double v : d.y) {
      if (!std::isfinite(v)) throw SchemaError("non-finite target in domain " + std::to_string(d.id));
      if (task.is_classification() &&
          (v < 0 || v != std::floor(v) || v >= static_cast<double>(task.classes))) {
        throw SchemaError("class label out of range in domain " + std::to_string(d.id));
      }
    }
  }
}

PooledData pool(const DomainDataset& ds) {
  std::vector<Matrix> blocks;
  PooledData out;
  for (const auto& d : ds.domains) {
    blocks.push_back(d.x);
    out.y.insert(out.y.end(), d.y.begin(), d.y.end());
  }
  out.x = blocks.empty() ? Matrix(0, ds.dim) : vstack(blocks);
  return out;
}

// ---- text format ----------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

struct Header {
  TaskSpec task;
  std::size_t dim = 0;
};

Header parse_header(std::string_view line, std::size_t lineno) {
  std::map<std::string, std::string> kv;
  std::istringstream ss{std::string(line)};
  std::string tok;
  while (ss >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) throw ParseError(lineno, "malformed header token '" + tok + "'");
    if (!kv.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second) {
      throw ParseError(lineno, "duplicate header key '" + tok.substr(0, eq) + "'");
    }
  }
  auto get_count = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(lineno, "header missing " + key);
    std::size_t v = 0;
    if (!parse_number(it->second, v) || v == 0) throw ParseError(lineno, "bad value for " + key);
    return v;
  };
  auto task = kv.find("task");
  if (task == kv.end()) throw ParseError(lineno, "header missing task");
  Header h;
  if (task->second == "classification") {
    if (kv.size() != 3) throw ParseError(lineno, "classification header takes task, C and M");
    h.task = TaskSpec::classification(get_count("C"));
    if (h.task.classes < 2) throw ParseError(lineno, "C must be at least 2");
  } else if (task->second == "regression") {
    if (kv.size() != 2) throw ParseError(lineno, "regression header takes task and M");
    h.task = TaskSpec::regression();
  } else {
    throw ParseError(lineno, "unknown task '" + task->second + "'");
  }
  h.dim = get_count("M");
  return h;
}

}  // namespace

DomainDataset parse_text(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<Header> header;
  struct Accum {
    std::vector<double> x;
    std::vector<double> y;
  };
  std::vector<int> order;
  std::map<int, Accum> acc;

  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    if (!header) {
      header = parse_header(sv, lineno);
      continue;
    }
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      auto comma = sv.find(',', start);
      fields.push_back(sv.substr(start, comma == std::string_view::npos ? sv.npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != header->dim + 2) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected " +
                        std::to_string(header->dim + 2) + " fields, found " +
                        std::to_string(fields.size()));
    }
    int id = 0;
    if (!parse_number(fields[0], id)) throw ParseError(lineno, "bad domain id");
    double label = 0.0;
    if (header->task.is_classification()) {
      long c = 0;
      if (!parse_number(fields[1], c)) throw ParseError(lineno, "bad class label");
      if (c < 1 || c > static_cast<long>(header->task.classes)) {
        throw ParseError(lineno, "class label " + std::to_string(c) + " outside 1.." +
                                     std::to_string(header->task.classes));
      }
      label = static_cast<double>(c - 1);
    } else if (!parse_number(fields[1], label) || !std::isfinite(label)) {
      throw ParseError(lineno, "bad target value");
    }
    auto [it, inserted] = acc.try_emplace(id);
    if (inserted) order.push_back(id);
    for (std::size_t j = 0; j < header->dim; ++j) {
      double v = 0.0;
      if (!parse_number(fields[j + 2], v) || !std::isfinite(v)) {
        throw ParseError(lineno, "bad feature value in column " + std::to_string(j + 1));
      }
      it->second.x.push_back(v);
    }
    it->second.y.push_back(label);
  }
  if (!header) throw ParseError(lineno, "missing header line");

  DomainDataset ds;
  ds.task = header->task;
  ds.dim = header->dim;
  for (int id : order) {
    auto& a = acc.at(id);
    const std::size_t n = a.y.size();
    ds.domains.push_back(Domain{id, Matrix(n, ds.dim, std::move(a.x)), std::move(a.y)});
  }
  ds.validate();
  return ds;
}

DomainDataset load_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset '" + path.string() + "'");
  return parse_text(in);
}

void write_text(const DomainDataset& ds, std::ostream& out) {
  if (ds.task.is_classification()) {
    out << "task=classification C=" << ds.task.classes << " M=" << ds.dim << '\n';
  } else {
    out << "task=regression M=" << ds.dim << '\n';
  }
  for (const auto& d : ds.domains) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      out << d.id << ',';
      if (ds.task.is_classification()) {
        out << static_cast<long>(d.y[i]) + 1;
      } else {
        out << format_double(d.y[i]);
      }
      for (double v : d.x.row_span(i)) out << ',' << format_double(v);
      out << '\n';
    }
  }
}

void save_text(const DomainDataset& ds, const std::filesystem::path& path) {
  std::ostringstream ss;
  write_text(ds, ss);
  write_file_atomic(path, ss.str());
}

DomainDataset l2_normalize(const DomainDataset& ds) {
  DomainDataset out = ds;
  for (auto& d : out.domains) {
    for (std::size_t i = 0; i < d.x.rows(); ++i) {
      auto row = d.x.row_span(i);
      double ss = 0.0;
      for (double v : row) ss += v * v;
      if (ss == 0.0) continue;
      const double norm = std::sqrt(ss);
      for (auto& v : row) v /= norm;
    }
  }
  return out;
}

// ---- splits -------------------------------------------------------------------------------

DatasetSplit split(const DomainDataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw SplitError("train fraction must lie in (0, 1)");
  }
  std::set<int> held(spec.held_out.begin(), spec.held_out.end());
  for (int id : held) {
    if (!ds.find(id)) throw SplitError("held-out domain " + std::to_string(id) + " not in dataset");
  }
  DatasetSplit out;
  for (auto* part : {&out.train, &out.val, &out.test}) {
    part->task = ds.task;
    part->dim = ds.dim;
  }
  for (std::size_t di = 0; di < ds.domains.size(); ++di) {
    const Domain& d = ds.domains[di];
    if (held.contains(d.id)) {
      out.test.domains.push_back(d);
      continue;
    }
    const std::size_t n_train =
        static_cast<std::size_t>(std::lround(spec.train_fraction * static_cast<double>(d.size())));
    if (n_train == 0 || n_train >= d.size()) {
      throw SplitError("fraction " + std::to_string(spec.train_fraction) + " leaves domain " +
                       std::to_string(d.id) + " (N=" + std::to_string(d.size()) +
                       ") with an empty side");
    }
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(d.id))));
    rng.shuffle(std::span(idx));
    std::span<const std::size_t> all(idx);
    out.train.domains.push_back(d.subset(all.first(n_train)));
    out.val.domains.push_back(d.subset(all.subspan(n_train)));
  }
  return out;
}

DomainDataset select_domains(const DomainDataset& ds, std::span<const int> ids) {
  std::set<int> keep(ids.begin(), ids.end());
  DomainDataset out{ds.task, ds.dim, {}};
  for (const auto& d : ds.domains)
    if (keep.contains(d.id)) out.domains.push_back(d);
  return out;
}

// ---- generators ---------------------------------------------------------------------------

DomainDataset gen_rotated_gaussians(const RotatedGaussiansSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("rotated gaussians need at least two classes");
  if (spec.n_per_domain < spec.classes) {
    throw std::invalid_argument("n_per_domain must be at least the class count");
  }
  if (spec.angles_deg.empty()) throw std::invalid_argument("at least one angle is required");
  if (!(spec.noise >= 0.0)) throw std::invalid_argument("noise must be non-negative");
  const double deg = std::numbers::pi / 180.0;
  const double spacing = spec.anchor_spacing_deg.value_or(360.0 / static_cast<double>(spec.classes));
  DomainDataset ds{TaskSpec::classification(spec.classes), 2, {}};
  Rng rng(spec.seed);
  for (std::size_t d = 0; d < spec.angles_deg.size(); ++d) {
    Domain dom;
    dom.id = static_cast<int>(d);
    dom.x = Matrix(spec.n_per_domain, 2);
    dom.y.resize(spec.n_per_domain);
    for (std::size_t i = 0; i < spec.n_per_domain; ++i) {
      const std::size_t c = i % spec.classes;
      const double a = (spec.angles_deg[d] + spacing * static_cast<double>(c)) * deg;
      dom.x(i, 0) = std::cos(a) + spec.noise * rng.normal();
      dom.x(i, 1) = std::sin(a) + spec.noise * rng.normal();
      dom.y[i] = static_cast<double>(c);
    }
    ds.domains.push_back(std::move(dom));
  }
  return ds;
}

std::vector<double> slope_direction(std::size_t dim) {
  return std::vector<double>(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
}

std::vector<double> slope_shift_direction(std::size_t dim) {
  std::vector<double> u(dim, 0.0);
  if (dim >= 2) {
    u[0] = std::numbers::sqrt2 / 2.0;
    u[1] = -std::numbers::sqrt2 / 2.0;
  }
  return u;
}

DomainDataset gen_slope_regression(const SlopeRegressionSpec& spec) {
  if (spec.slopes.size() < 2) throw std::invalid_argument("slope regression needs at least two domains");
  if (spec.dim == 0 || spec.n_per_domain == 0) throw std::invalid_argument("dim and n_per_domain must be positive");
  if (spec.shift != 0.0 && spec.dim < 2) throw std::invalid_argument("domain shift needs dim >= 2");
  if (!(spec.noise >= 0.0)) throw std::invalid_argument("noise must be non-negative");
  const auto w = slope_direction(spec.dim);
  const auto u = slope_shift_direction(spec.dim);
  DomainDataset ds{TaskSpec::regression(), spec.dim, {}};
  Rng rng(spec.seed);
  for (std::size_t d = 0; d < spec.slopes.size(); ++d) {
    const double a = spec.slopes[d];
    Domain dom;
    dom.id = static_cast<int>(d);
    dom.x = Matrix(spec.n_per_domain, spec.dim);
    dom.y.resize(spec.n_per_domain);
    for (std::size_t i = 0; i < spec.n_per_domain; ++i) {
      double wx = 0.0;
      for (std::size_t j = 0; j < spec.dim; ++j) {
        const double v = rng.uniform(-1.0, 1.0) + spec.shift * a * u[j];
        dom.x(i, j) = v;
        wx += w[j] * v;
      }
      const double eps = spec.noise * rng.normal();
      dom.y[i] = a * wx + eps;
    }
    ds.domains.push_back(std::move(dom));
  }
  return ds;
}

}  // namespace zsda
