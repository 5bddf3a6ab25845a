#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "notesearch/errors.hpp"

namespace notesearch::tools {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  if (std::abs(v) >= 100 || v == std::floor(v)) {
    std::snprintf(buf, sizeof(buf), "%.0f", v);
  } else {
    std::snprintf(buf, sizeof(buf), "%.2g", v);
  }
  return buf;
}

// Round an axis maximum up to 1, 2 or 5 times a power of ten.
double nice_max(double v) {
  if (v <= 0) return 1.0;
  const double p = std::pow(10.0, std::floor(std::log10(v)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (v <= m * p) return m * p;
  }
  return 10.0 * p;
}

class Svg {
 public:
  Svg(const std::string& title) {
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
         << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    text(kWidth / 2, 22, title, "middle", 14);
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double w = 1) {
    out_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
         << "\" stroke=\"" << stroke << "\" stroke-width=\"" << w << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill) {
    out_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
         << "\" fill=\"" << fill << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    out_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << r << "\" fill=\"" << fill << "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    out_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) out_ << num(x) << "," << num(y) << " ";
    out_ << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, const char* anchor = "middle", int size = 12) {
    out_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor << "\" font-size=\""
         << size << "\">" << s << "</text>\n";
  }
  void y_axis(double max, const std::string& name) {
    line(kLeft, kTop, kLeft, kTop + kPlotH, "black");
    line(kLeft, kTop + kPlotH, kLeft + kPlotW, kTop + kPlotH, "black");
    for (int i = 0; i <= 5; ++i) {
      const double v = max * i / 5.0;
      const double y = kTop + kPlotH - kPlotH * i / 5.0;
      line(kLeft - 4, y, kLeft, y, "black");
      line(kLeft, y, kLeft + kPlotW, y, "#e5e5e5");
      text(kLeft - 8, y + 4, label(v), "end");
    }
    out_ << "<text transform=\"translate(18," << num(kTop + kPlotH / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
         << name << "</text>\n";
  }
  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  std::ostringstream out_;
};

}  // namespace

std::string latency_svg(const nlohmann::json& report) {
  const auto& levels = report.at("levels");
  if (levels.empty()) throw InvalidArgument("latency report has no levels");
  const char* stages[] = {"embed", "search", "hydrate"};
  const char* colors[] = {"#4c78a8", "#f58518", "#54a24b"};
  double top = 0.0;
  for (const auto& l : levels) {
    double stacked = 0.0;
    for (const char* s : stages) stacked += l.at(s).at("median_ms").get<double>();
    top = std::max({top, stacked, l.at("total").at("p95_ms").get<double>()});
  }
  const double ymax = nice_max(top * 1.05);
  Svg svg("Median latency by stage per concurrency level");
  svg.y_axis(ymax, "milliseconds");
  const double slot = kPlotW / static_cast<double>(levels.size());
  const double bar = slot * 0.6;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& l = levels[i];
    const double x = kLeft + slot * static_cast<double>(i) + (slot - bar) / 2;
    double base = 0.0;
    for (int s = 0; s < 3; ++s) {
      const double v = l.at(stages[s]).at("median_ms").get<double>();
      const double h = kPlotH * v / ymax;
      svg.rect(x, kTop + kPlotH - kPlotH * base / ymax - h, bar, h, colors[s]);
      base += v;
    }
    const double p95 = kTop + kPlotH - kPlotH * l.at("total").at("p95_ms").get<double>() / ymax;
    svg.line(x, p95, x + bar, p95, "black", 2);
    svg.text(x + bar / 2, kTop + kPlotH + 18, std::to_string(l.at("level").get<int>()));
  }
  svg.text(kLeft + kPlotW / 2, kHeight - 20, "concurrent users");
  for (int s = 0; s < 3; ++s) {
    svg.rect(kLeft + 10 + 90.0 * s, kTop + 4, 10, 10, colors[s]);
    svg.text(kLeft + 24 + 90.0 * s, kTop + 13, stages[s], "start");
  }
  svg.line(kLeft + 280, kTop + 9, kLeft + 295, kTop + 9, "black", 2);
  svg.text(kLeft + 300, kTop + 13, "p95 total", "start");
  return svg.finish();
}

std::string k_sweep_svg(const nlohmann::json& report) {
  const auto& runs = report.at("runs");
  if (runs.empty()) throw InvalidArgument("sweep report has no runs");
  std::vector<double> ks;
  for (const auto& r : runs) ks.push_back(r.at("k").get<double>());
  const double kmax = *std::max_element(ks.begin(), ks.end());
  const double kmin = *std::min_element(ks.begin(), ks.end());
  const auto xpos = [&](double k) {
    if (kmax == kmin) return kLeft + kPlotW / 2;
    return kLeft + kPlotW * (k - kmin) / (kmax - kmin);
  };
  const auto ypos = [&](double acc) { return kTop + kPlotH - kPlotH * acc; };
  Svg svg("Accuracy by retrieval depth");
  svg.y_axis(1.0, "accuracy");
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : runs) {
    const double x = xpos(r.at("k").get<double>());
    const double lo = r.at("wilson_ci").at("low").get<double>();
    const double hi = r.at("wilson_ci").at("high").get<double>();
    svg.line(x, ypos(lo), x, ypos(hi), "#888888", 1.5);
    svg.line(x - 4, ypos(lo), x + 4, ypos(lo), "#888888", 1.5);
    svg.line(x - 4, ypos(hi), x + 4, ypos(hi), "#888888", 1.5);
    pts.emplace_back(x, ypos(r.at("accuracy").get<double>()));
    svg.text(x, kTop + kPlotH + 18, label(r.at("k").get<double>()));
  }
  svg.polyline(pts, "#4c78a8");
  for (const auto& [x, y] : pts) svg.circle(x, y, 4, "#4c78a8");
  svg.text(kLeft + kPlotW / 2, kHeight - 20, "chunks retrieved (k)");
  return svg.finish();
}

}  // namespace notesearch::tools
