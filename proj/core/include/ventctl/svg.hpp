#pragma once

// Minimal SVG line charts for trajectories and training curves.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ventctl {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 720;
  int height = 420;
};

/// Non-finite points are skipped. Output depends only on the inputs.
void write_line_chart(std::ostream& os, const ChartSpec& spec, std::span<const Series> series);

}  // namespace ventctl
