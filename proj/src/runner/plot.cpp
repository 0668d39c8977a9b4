#include "slotbench/runner/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "slotbench/errors.hpp"

namespace slotbench::runner::plot {
namespace {

const char* const kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c"};

std::string color(std::size_t i) { return kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))]; }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}

  void rect(double x, double y, double w, double h, const std::string& fill, const std::string& extra = "") {
    body_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h << "\" fill=\"" << fill
          << "\" " << extra << "/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, const std::string& extra = "") {
    body_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2 << "\" stroke=\""
          << stroke << "\" " << extra << "/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& extra = "") {
    body_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-family=\"sans-serif\" font-size=\"11\" " << extra << ">"
          << escape(s) << "</text>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << fill
          << "\" fill-opacity=\"0.8\"/>\n";
  }
  void path(const std::vector<std::pair<double, double>>& pts, const std::string& attrs) {
    if (pts.empty()) return;
    body_ << "<path d=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) body_ << (i ? " L" : "M") << pts[i].first << ' ' << pts[i].second;
    body_ << "\" " << attrs << "/>\n";
  }

  void save(const std::filesystem::path& p) const {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw StorageError("cannot write " + p.string());
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\" viewBox=\"0 0 "
      << w_ << ' ' << h_ << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << body_.str() << "</svg>\n";
  }

 private:
  double w_, h_;
  std::ostringstream body_;
};

struct Axis {
  double lo, hi, p0, p1;  // data range mapped to pixel range
  double operator()(double v) const { return hi == lo ? (p0 + p1) / 2 : p0 + (v - lo) / (hi - lo) * (p1 - p0); }
};

std::pair<double, double> padded(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (hi - lo < 1e-12) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void y_ticks(Svg& svg, const Axis& y, double x0, double x1) {
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    svg.line(x0, y(v), x1, y(v), "#dddddd");
    svg.text(x0 - 4, y(v) + 4, num(v), "text-anchor=\"end\"");
  }
}

void x_ticks(Svg& svg, const Axis& x, double y0) {
  for (int i = 0; i <= 4; ++i) {
    const double v = x.lo + (x.hi - x.lo) * i / 4.0;
    svg.text(x(v), y0 + 14, num(v), "text-anchor=\"middle\"");
  }
}

}  // namespace

void write_svg(const std::filesystem::path& path, const BarChart& chart) {
  const double left = 60, top = 30, plot_h = 220, bar_w = 36, gap = 18;
  const double plot_w = std::max(200.0, chart.bars.size() * (bar_w + gap) + gap);
  const double bottom = 110;
  Svg svg(left + plot_w + 20, top + plot_h + bottom);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& b : chart.bars) {
    lo = std::min({lo, b.value, b.lo, 0.0});
    hi = std::max({hi, b.value, b.hi});
  }
  if (chart.baseline) {
    lo = std::min(lo, *chart.baseline);
    hi = std::max(hi, *chart.baseline);
  }
  auto [plo, phi] = padded(lo, hi);
  Axis y{chart.y_min.value_or(plo), chart.y_max.value_or(phi), top + plot_h, top};

  svg.text(left, 16, chart.title, "font-weight=\"bold\"");
  svg.text(14, top + plot_h / 2, chart.y_label, "transform=\"rotate(-90 14 " + num(top + plot_h / 2) + ")\"");
  y_ticks(svg, y, left, left + plot_w);
  for (std::size_t i = 0; i < chart.bars.size(); ++i) {
    const auto& b = chart.bars[i];
    const double x = left + gap + i * (bar_w + gap);
    const double zero = y(std::clamp(0.0, y.lo, y.hi));
    const double top_px = y(b.value);
    svg.rect(x, std::min(zero, top_px), bar_w, std::abs(zero - top_px), color(i));
    const double cx = x + bar_w / 2;
    svg.line(cx, y(b.lo), cx, y(b.hi), "black");
    svg.line(cx - 6, y(b.lo), cx + 6, y(b.lo), "black");
    svg.line(cx - 6, y(b.hi), cx + 6, y(b.hi), "black");
    const double ly = top + plot_h + 12;
    svg.text(cx, ly, b.label,
             "text-anchor=\"end\" transform=\"rotate(-40 " + num(cx) + " " + num(ly) + ")\"");
  }
  if (chart.baseline) {
    svg.line(left, y(*chart.baseline), left + plot_w, y(*chart.baseline), "#333333", "stroke-dasharray=\"5,4\"");
    svg.text(left + plot_w - 4, y(*chart.baseline) - 4, "random guess", "text-anchor=\"end\"");
  }
  svg.line(left, top + plot_h, left + plot_w, top + plot_h, "black");
  svg.line(left, top, left, top + plot_h, "black");
  svg.save(path);
}

void write_svg(const std::filesystem::path& path, const Heatmap& map) {
  const double cell = 54, left = 150, top = 40;
  const double w = left + map.cols.size() * cell + 20;
  const double h = top + map.rows.size() * cell + 90;
  Svg svg(w, h);
  svg.text(10, 20, map.title, "font-weight=\"bold\"");
  for (std::size_t r = 0; r < map.rows.size(); ++r) {
    svg.text(left - 6, top + r * cell + cell / 2 + 4, map.rows[r], "text-anchor=\"end\"");
    for (std::size_t c = 0; c < map.cols.size(); ++c) {
      const double x = left + c * cell, yy = top + r * cell;
      const auto& v = map.values.at(r).at(c);
      std::string fill = "#eeeeee";
      if (v) {
        // Diverging blue-white-red.
        const double t = std::clamp(*v, -1.0, 1.0);
        const int fade = static_cast<int>(255 * (1 - std::abs(t)));
        char buf[16];
        if (t >= 0) {
          std::snprintf(buf, sizeof(buf), "#ff%02x%02x", fade, fade);
        } else {
          std::snprintf(buf, sizeof(buf), "#%02x%02xff", fade, fade);
        }
        fill = buf;
      }
      svg.rect(x, yy, cell, cell, fill, "stroke=\"white\"");
      svg.text(x + cell / 2, yy + cell / 2 + 4, v ? num(*v) : "n/a", "text-anchor=\"middle\"");
    }
  }
  for (std::size_t c = 0; c < map.cols.size(); ++c) {
    const double x = left + c * cell + cell / 2, ly = top + map.rows.size() * cell + 12;
    svg.text(x, ly, map.cols[c], "text-anchor=\"end\" transform=\"rotate(-40 " + num(x) + " " + num(ly) + ")\"");
  }
  svg.save(path);
}

void write_svg(const std::filesystem::path& path, const LinePlot& plot) {
  const double left = 60, top = 30, pw = 360, ph = 220;
  Svg svg(left + pw + 150, top + ph + 50);
  auto tx = [&](double v) { return plot.log2_x ? std::log2(v) : v; };
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : plot.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xlo = std::min(xlo, tx(s.x[i]));
      xhi = std::max(xhi, tx(s.x[i]));
      ylo = std::min({ylo, s.y[i], i < s.lo.size() ? s.lo[i] : s.y[i]});
      yhi = std::max({yhi, s.y[i], i < s.hi.size() ? s.hi[i] : s.y[i]});
    }
  }
  auto [a, b] = padded(xlo, xhi);
  auto [c, d] = padded(ylo, yhi);
  Axis x{a, b, left, left + pw}, y{c, d, top + ph, top};
  svg.text(left, 16, plot.title, "font-weight=\"bold\"");
  y_ticks(svg, y, left, left + pw);
  if (plot.log2_x) {
    std::vector<double> xs;
    for (const auto& s : plot.series) xs.insert(xs.end(), s.x.begin(), s.x.end());
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    for (double v : xs) svg.text(x(tx(v)), top + ph + 14, num(v), "text-anchor=\"middle\"");
  } else {
    x_ticks(svg, x, top + ph);
  }
  svg.text(left + pw / 2, top + ph + 32, plot.x_label, "text-anchor=\"middle\"");
  svg.text(14, top + ph / 2, plot.y_label, "transform=\"rotate(-90 14 " + num(top + ph / 2) + ")\"");
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    if (s.lo.size() == s.x.size() && s.hi.size() == s.x.size()) {
      std::vector<std::pair<double, double>> band;
      for (std::size_t i = 0; i < s.x.size(); ++i) band.emplace_back(x(tx(s.x[i])), y(s.hi[i]));
      for (std::size_t i = s.x.size(); i-- > 0;) band.emplace_back(x(tx(s.x[i])), y(s.lo[i]));
      svg.path(band, "fill=\"" + color(k) + "\" fill-opacity=\"0.2\" stroke=\"none\"");
    }
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) pts.emplace_back(x(tx(s.x[i])), y(s.y[i]));
    svg.path(pts, "fill=\"none\" stroke=\"" + color(k) + "\" stroke-width=\"2\"");
    for (const auto& [px, py] : pts) svg.circle(px, py, 3, color(k));
    svg.rect(left + pw + 14, top + 10 + k * 18, 12, 12, color(k));
    svg.text(left + pw + 30, top + 20 + k * 18, s.name);
  }
  svg.line(left, top + ph, left + pw, top + ph, "black");
  svg.line(left, top, left, top + ph, "black");
  svg.save(path);
}

void write_svg(const std::filesystem::path& path, const std::vector<ScatterPanel>& panels) {
  const double pw = 220, ph = 180, left = 50, top = 30, gap = 70;
  const std::size_t per_row = 3;
  const std::size_t rows = (panels.size() + per_row - 1) / per_row;
  Svg svg(per_row * (pw + left + gap) + 140, std::max<std::size_t>(rows, 1) * (ph + top + 50));
  std::vector<std::string> legend;
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double ox = (p % per_row) * (pw + left + gap) + left, oy = (p / per_row) * (ph + top + 50) + top;
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
    for (const auto& s : panel.series) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        xlo = std::min(xlo, s.x[i]);
        xhi = std::max(xhi, s.x[i]);
        ylo = std::min(ylo, s.y[i]);
        yhi = std::max(yhi, s.y[i]);
      }
    }
    auto [a, b] = padded(xlo, xhi);
    auto [c, d] = padded(ylo, yhi);
    Axis x{a, b, ox, ox + pw}, y{c, d, oy + ph, oy};
    svg.text(ox, oy - 8, panel.title, "font-weight=\"bold\"");
    y_ticks(svg, y, ox, ox + pw);
    x_ticks(svg, x, oy + ph);
    svg.text(ox + pw / 2, oy + ph + 30, panel.x_label, "text-anchor=\"middle\"");
    svg.text(ox - 40, oy + ph / 2, panel.y_label,
             "text-anchor=\"middle\" transform=\"rotate(-90 " + num(ox - 40) + " " + num(oy + ph / 2) + ")\"");
    for (std::size_t k = 0; k < panel.series.size(); ++k) {
      const auto& s = panel.series[k];
      auto it = std::find(legend.begin(), legend.end(), s.name);
      const std::size_t ci = it == legend.end() ? legend.size() : static_cast<std::size_t>(it - legend.begin());
      if (it == legend.end()) legend.push_back(s.name);
      for (std::size_t i = 0; i < s.x.size(); ++i) svg.circle(x(s.x[i]), y(s.y[i]), 3.5, color(ci));
    }
    svg.line(ox, oy + ph, ox + pw, oy + ph, "black");
    svg.line(ox, oy, ox, oy + ph, "black");
  }
  const double lx = per_row * (pw + left + gap);
  for (std::size_t k = 0; k < legend.size(); ++k) {
    svg.rect(lx, top + k * 18, 12, 12, color(k));
    svg.text(lx + 16, top + 10 + k * 18, legend[k]);
  }
  svg.save(path);
}

}  // namespace slotbench::runner::plot
