#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace slotbench::runner::plot {

struct Bar {
  std::string label;
  double value = 0.0;
  double lo = 0.0;  // error bar
  double hi = 0.0;
};

struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<Bar> bars;
  std::optional<double> baseline;  // dashed reference line
  std::optional<double> y_min;
  std::optional<double> y_max;
};

struct Heatmap {
  std::string title;
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<std::vector<std::optional<double>>> values;  // [-1, 1]; empty cell when undefined
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> lo;  // shaded band
  std::vector<double> hi;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log2_x = false;
  std::vector<Series> series;
};

struct ScatterPanel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;  // x, y only
};

void write_svg(const std::filesystem::path& path, const BarChart& chart);
void write_svg(const std::filesystem::path& path, const Heatmap& map);
void write_svg(const std::filesystem::path& path, const LinePlot& plot);
void write_svg(const std::filesystem::path& path, const std::vector<ScatterPanel>& panels);

}  // namespace slotbench::runner::plot
