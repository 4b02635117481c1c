#pragma once

#include <string>
#include <vector>

#include "ovp/image.hpp"

namespace ovp::plot {

struct Series {
  std::string label;
  std::vector<double> values;
  float color[3] = {0.1f, 0.3f, 0.9f};
};

// Frame-wise metric curves rendered to a raster: axes, ticks, digit labels,
// one polyline per series, and a dashed vertical marker (e.g. the training
// horizon), if marker_x >= 0.
Image line_chart(const std::vector<Series>& series, int width, int height,
                 int marker_x = -1);

void save_chart(const std::string& path, const std::vector<Series>& series,
                int marker_x = -1);

}  // namespace ovp::plot
