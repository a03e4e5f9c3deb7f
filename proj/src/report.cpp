#include "zsda/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "zsda/errors.hpp"
#include "zsda/io_util.hpp"

namespace zsda {

std::string latents_csv(std::span<const LatentPosterior> posteriors) {
  std::ostringstream out;
  const std::size_t k = posteriors.empty() ? 0 : posteriors.front().dim();
  out << "domain";
  for (std::size_t i = 1; i <= k; ++i) out << ",mu_" << i;
  for (std::size_t i = 1; i <= k; ++i) out << ",logvar_" << i;
  out << '\n';
  for (const auto& p : posteriors) {
    out << p.domain_id;
    for (double v : p.mu) out << ',' << format_double(v);
    for (double v : p.logvar) out << ',' << format_double(v);
    out << '\n';
  }
  return out.str();
}

namespace {

constexpr double kCanvas = 600.0;
constexpr double kMargin = 50.0;

struct Bounds {
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity();
  double y0 = std::numeric_limits<double>::infinity();
  double y1 = -std::numeric_limits<double>::infinity();

  void add(double x, double y) {
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  void pad() {
    if (x1 - x0 < 1e-9) { x0 -= 0.5; x1 += 0.5; }
    if (y1 - y0 < 1e-9) { y0 -= 0.5; y1 += 0.5; }
  }
};

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

}  // namespace

std::string latents_svg(std::span<const LatentPosterior> posteriors, const std::set<int>& held_out) {
  Bounds b;
  for (const auto& p : posteriors) {
    if (p.dim() != 2) throw ShapeError("latent scatter plot requires K = 2");
    const auto s = p.stddev();
    b.add(p.mu[0] - 2 * s[0], p.mu[1] - 2 * s[1]);
    b.add(p.mu[0] + 2 * s[0], p.mu[1] + 2 * s[1]);
  }
  if (posteriors.empty()) b.add(0, 0);
  b.pad();
  // Uniform scale keeps circles round; y is flipped so larger values point up.
  const double inner = kCanvas - 2 * kMargin;
  const double scale = inner / std::max(b.x1 - b.x0, b.y1 - b.y0);
  const double tx = kMargin - b.x0 * scale;
  const double ty = kMargin + b.y1 * scale;
  const double marker = 4.0 / scale;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCanvas << "\" height=\"" << kCanvas
      << "\" viewBox=\"0 0 " << kCanvas << ' ' << kCanvas << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kMargin << "\" y=\"30\" font-family=\"sans-serif\" font-size=\"14\">"
         "Latent domain posteriors (blue: source, red: held out)</text>\n";
  out << "<g transform=\"translate(" << num(tx) << ' ' << num(ty) << ") scale(" << num(scale) << ' '
      << num(-scale) << ")\">\n";
  for (const auto& p : posteriors) {
    const bool target = held_out.contains(p.domain_id);
    const char* line = target ? "#d62728" : "#17becf";
    const char* dot = target ? "#d62728" : "#1f77b4";
    const auto s = p.stddev();
    for (int k : {1, 2}) {
      out << "<ellipse class=\"sigma" << k << "\" data-domain=\"" << p.domain_id << "\" cx=\""
          << num(p.mu[0]) << "\" cy=\"" << num(p.mu[1]) << "\" rx=\"" << num(k * s[0]) << "\" ry=\""
          << num(k * s[1]) << "\" fill=\"none\" stroke=\"" << line
          << "\" stroke-width=\"1\" vector-effect=\"non-scaling-stroke\"/>\n";
    }
    out << "<circle class=\"mean\" data-domain=\"" << p.domain_id << "\" cx=\"" << num(p.mu[0])
        << "\" cy=\"" << num(p.mu[1]) << "\" r=\"" << num(marker) << "\" fill=\"" << dot << "\"/>\n";
  }
  out << "</g>\n";
  for (const auto& p : posteriors) {
    out << "<text x=\"" << num(tx + p.mu[0] * scale + 6) << "\" y=\"" << num(ty - p.mu[1] * scale - 6)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << p.domain_id << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string sweep_svg(const std::string& title, const std::string& x_label,
                      const std::string& y_label, std::span<const double> xs,
                      std::span<const SweepSeries> series) {
  Bounds b;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (const auto& s : series) {
      if (i >= s.mean.size() || std::isnan(s.mean[i])) continue;
      const double e = i < s.stderr_.size() && !std::isnan(s.stderr_[i]) ? s.stderr_[i] : 0.0;
      b.add(xs[i], s.mean[i] - e);
      b.add(xs[i], s.mean[i] + e);
    }
  }
  if (xs.empty()) b.add(0, 0);
  b.pad();
  const double inner = kCanvas - 2 * kMargin;
  auto px = [&](double x) { return kMargin + (x - b.x0) / (b.x1 - b.x0) * inner; };
  auto py = [&](double y) { return kCanvas - kMargin - (y - b.y0) / (b.y1 - b.y0) * inner; };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCanvas << "\" height=\"" << kCanvas
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kMargin << "\" y=\"30\" font-family=\"sans-serif\" font-size=\"14\">" << title
      << "</text>\n";
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kCanvas - kMargin << "\" x2=\"" << kCanvas - kMargin
      << "\" y2=\"" << kCanvas - kMargin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\""
      << kCanvas - kMargin << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kCanvas / 2 << "\" y=\"" << kCanvas - 12
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << x_label << "</text>\n";
  out << "<text x=\"14\" y=\"" << kCanvas / 2 << "\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 14 " << kCanvas / 2 << ")\" text-anchor=\"middle\">" << y_label
      << "</text>\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out << "<text x=\"" << num(px(xs[i])) << "\" y=\"" << kCanvas - kMargin + 16
        << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">" << num(xs[i])
        << "</text>\n";
  }
  out << "<text x=\"" << kMargin - 4 << "\" y=\"" << num(py(b.y0)) << "\" font-family=\"sans-serif\" "
      << "font-size=\"10\" text-anchor=\"end\">" << num(b.y0) << "</text>\n";
  out << "<text x=\"" << kMargin - 4 << "\" y=\"" << num(py(b.y1)) << "\" font-family=\"sans-serif\" "
      << "font-size=\"10\" text-anchor=\"end\">" << num(b.y1) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = colors[si % 4];
    out << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t i = 0; i < xs.size() && i < s.mean.size(); ++i) {
      out << (i ? " " : "") << num(px(xs[i])) << ',' << num(py(s.mean[i]));
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < xs.size() && i < s.mean.size(); ++i) {
      const double e = i < s.stderr_.size() ? s.stderr_[i] : 0.0;
      out << "<line stroke=\"" << color << "\" x1=\"" << num(px(xs[i])) << "\" x2=\"" << num(px(xs[i]))
          << "\" y1=\"" << num(py(s.mean[i] - e)) << "\" y2=\"" << num(py(s.mean[i] + e)) << "\"/>\n";
      out << "<circle fill=\"" << color << "\" cx=\"" << num(px(xs[i])) << "\" cy=\""
          << num(py(s.mean[i])) << "\" r=\"3\"/>\n";
    }
    out << "<text x=\"" << kCanvas - kMargin - 100 << "\" y=\"" << kMargin + 16 * (si + 1)
        << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color << "\">" << s.name
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace zsda
