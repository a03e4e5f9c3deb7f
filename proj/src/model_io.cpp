#include "zsda/model_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "zsda/errors.hpp"
#include "zsda/io_util.hpp"

namespace zsda {

namespace {

constexpr const char* kMagic = "zsda-model";
constexpr int kVersion = 1;

void write_param(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "param " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
    out << '\n';
  }
}

double parse_value(const std::string& tok, std::size_t lineno) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) throw ParseError(lineno, "bad value '" + tok + "'");
  return v;
}

}  // namespace

void write_model(const TrainedModel& model, std::ostream& out) {
  out << kMagic << ' ' << kVersion << '\n';
  const TaskSpec& task = model.predictor.task;
  if (task.is_classification()) {
    out << "task classification " << task.classes << '\n';
  } else {
    out << "task regression\n";
  }
  out << "sources";
  for (int id : model.source_ids) out << ' ' << id;
  out << '\n';
  EncoderParams enc = model.encoder;
  PredictorParams pred = model.predictor;
  for (const auto& p : enc.params()) write_param(out, p.name, *p.value);
  for (const auto& p : pred.params()) write_param(out, p.name, *p.value);
  out << "end\n";
}

TrainedModel read_model(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) throw ParseError(lineno, "unexpected end of model file");
    ++lineno;
    return line;
  };

  {
    std::istringstream ss(next_line());
    std::string magic;
    int version = 0;
    if (!(ss >> magic >> version) || magic != kMagic) throw ParseError(lineno, "not a zsda model file");
    if (version != kVersion) throw ParseError(lineno, "unsupported model version " + std::to_string(version));
  }

  TrainedModel model;
  {
    std::istringstream ss(next_line());
    std::string key, kind;
    ss >> key >> kind;
    if (key != "task") throw ParseError(lineno, "expected task line");
    if (kind == "classification") {
      std::size_t c = 0;
      if (!(ss >> c) || c < 2) throw ParseError(lineno, "bad class count");
      model.predictor.task = TaskSpec::classification(c);
    } else if (kind == "regression") {
      model.predictor.task = TaskSpec::regression();
    } else {
      throw ParseError(lineno, "unknown task '" + kind + "'");
    }
  }
  {
    std::istringstream ss(next_line());
    std::string key;
    ss >> key;
    if (key != "sources") throw ParseError(lineno, "expected sources line");
    int id;
    while (ss >> id) model.source_ids.push_back(id);
  }

  std::map<std::string, Matrix> params;
  while (true) {
    std::istringstream ss(next_line());
    std::string key, name;
    ss >> key;
    if (key == "end") break;
    std::size_t rows = 0, cols = 0;
    if (key != "param" || !(ss >> name >> rows >> cols)) throw ParseError(lineno, "expected param header");
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      std::istringstream row(next_line());
      std::string tok;
      std::size_t c = 0;
      while (row >> tok) {
        if (c >= cols) throw ParseError(lineno, "too many values for " + name);
        m(r, c++) = parse_value(tok, lineno);
      }
      if (c != cols) throw ParseError(lineno, "too few values for " + name);
    }
    if (!params.emplace(name, std::move(m)).second) throw ParseError(lineno, "duplicate parameter " + name);
  }

  auto take = [&](const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw SchemaError("model file lacks parameter " + name);
    Matrix m = std::move(it->second);
    params.erase(it);
    return m;
  };
  auto take_dense = [&](const std::string& prefix) {
    Dense d{take(prefix + ".weight"), take(prefix + ".bias")};
    if (d.bias.rows() != 1 || d.bias.cols() != d.weight.cols()) {
      throw SchemaError("inconsistent shapes for " + prefix);
    }
    return d;
  };
  for (std::size_t l = 0; params.contains("encoder.eta." + std::to_string(l) + ".weight"); ++l) {
    model.encoder.eta.push_back(take_dense("encoder.eta." + std::to_string(l)));
  }
  model.encoder.rho_mu = take_dense("encoder.rho_mu");
  model.encoder.rho_logvar = take_dense("encoder.rho_logvar");
  for (std::size_t l = 0; params.contains("predictor.h." + std::to_string(l) + ".weight"); ++l) {
    model.predictor.h.push_back(take_dense("predictor.h." + std::to_string(l)));
  }
  model.predictor.g = take_dense("predictor.g");
  if (!params.empty()) throw SchemaError("unknown parameter " + params.begin()->first);
  if (model.predictor.h.empty()) throw SchemaError("model has no feature network");
  if (model.predictor.g.out() != model.predictor.outputs() * model.predictor.width() ||
      model.predictor.g.in() != model.encoder.latent_dim() ||
      model.encoder.input_dim() != model.predictor.input_dim()) {
    throw SchemaError("model parameter shapes are inconsistent");
  }
  return model;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ostringstream ss;
  write_model(model, ss);
  write_file_atomic(path, ss.str());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model '" + path.string() + "'");
  return read_model(in);
}

}  // namespace zsda
