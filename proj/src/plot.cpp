#include "ovp/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ovp::plot {

namespace {

// 3x5 digit font, visual top row first.
const char* glyph(char c) {
  switch (c) {
    case '0': return "111101101101111";
    case '1': return "010110010010111";
    case '2': return "111001111100111";
    case '3': return "111001111001111";
    case '4': return "101101111001001";
    case '5': return "111100111001111";
    case '6': return "111100111101111";
    case '7': return "111001001010010";
    case '8': return "111101111101111";
    case '9': return "111101111001111";
    case '.': return "000000000000010";
    case '-': return "000000111000000";
    case '+': return "000010111010000";
    case 'e': return "011101110100011";
    default: return "000000000000000";
  }
}

void put_px(Image& img, int x, int y, const float* rgb) {
  if (x < 0 || x >= img.w || y < 0 || y >= img.h) return;
  for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c];
}

void draw_line(Image& img, double x0, double y0, double x1, double y1,
               const float* rgb) {
  double dx = x1 - x0, dy = y1 - y0;
  int steps = static_cast<int>(std::max(std::abs(dx), std::abs(dy))) + 1;
  for (int s = 0; s <= steps; ++s) {
    double t = static_cast<double>(s) / steps;
    put_px(img, static_cast<int>(std::lround(x0 + t * dx)),
           static_cast<int>(std::lround(y0 + t * dy)), rgb);
  }
}

// Glyphs are given top-down; image rows display bottom-up.
void draw_text(Image& img, int x, int y, const std::string& text,
               const float* rgb) {
  for (std::size_t k = 0; k < text.size(); ++k) {
    const char* g = glyph(text[k]);
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 3; ++c)
        if (g[r * 3 + c] == '1')
          put_px(img, x + static_cast<int>(k) * 4 + c, y + (4 - r), rgb);
  }
}

std::string format_tick(double v) {
  char buf[32];
  double av = std::abs(v);
  if (v == 0.0)
    std::snprintf(buf, sizeof(buf), "0");
  else if (av >= 0.01 && av < 10000.0)
    std::snprintf(buf, sizeof(buf), "%.4g", v);
  else
    std::snprintf(buf, sizeof(buf), "%.1e", v);
  return buf;
}

}  // namespace

Image line_chart(const std::vector<Series>& series, int width, int height,
                 int marker_x) {
  Image img(3, height, width);
  std::fill(img.data.begin(), img.data.end(), 1.0f);
  const float black[3] = {0.f, 0.f, 0.f};
  const float gray[3] = {0.75f, 0.75f, 0.75f};

  int ml = 46, mr = 8, mb = 18, mt = 8;  // margins
  int x0 = ml, x1 = width - mr, y0 = mb, y1 = height - mt;

  std::size_t max_len = 0;
  double lo = 0.0, hi = 1.0;
  bool any = false;
  for (const Series& s : series) {
    max_len = std::max(max_len, s.values.size());
    for (double v : s.values) {
      if (!any) {
        lo = hi = v;
        any = true;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!any || hi == lo) {
    hi = (any ? hi : 1.0) + 1e-12;
    lo = (any ? lo : 0.0) - 1e-12;
  }
  double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  auto to_x = [&](double i) {
    double span = max_len > 1 ? static_cast<double>(max_len - 1) : 1.0;
    return x0 + (x1 - x0) * (i / span);
  };
  auto to_y = [&](double v) { return y0 + (y1 - y0) * ((v - lo) / (hi - lo)); };

  // axes
  draw_line(img, x0, y0, x1, y0, black);
  draw_line(img, x0, y0, x0, y1, black);
  // y ticks
  for (int k = 0; k <= 4; ++k) {
    double v = lo + (hi - lo) * k / 4.0;
    int y = static_cast<int>(std::lround(to_y(v)));
    draw_line(img, x0 - 3, y, x0, y, black);
    draw_line(img, x0, y, x1, y, gray);
    draw_text(img, 2, y - 2, format_tick(v), black);
  }
  // x ticks
  int xticks = std::min<std::size_t>(6, std::max<std::size_t>(1, max_len - 1));
  for (int k = 0; k <= xticks; ++k) {
    double i = (max_len - 1) * static_cast<double>(k) / xticks;
    int x = static_cast<int>(std::lround(to_x(i)));
    draw_line(img, x, y0 - 3, x, y0, black);
    draw_text(img, x - 4, y0 - 10, format_tick(std::round(i)), black);
  }
  if (marker_x >= 0 && static_cast<std::size_t>(marker_x) < max_len) {
    int x = static_cast<int>(std::lround(to_x(marker_x)));
    for (int y = y0; y <= y1; y += 4) draw_line(img, x, y, x, y + 1, black);
  }
  for (const Series& s : series) {
    for (std::size_t i = 0; i + 1 < s.values.size(); ++i)
      draw_line(img, to_x(static_cast<double>(i)), to_y(s.values[i]),
                to_x(static_cast<double>(i + 1)), to_y(s.values[i + 1]),
                s.color);
  }
  return img;
}

void save_chart(const std::string& path, const std::vector<Series>& series,
                int marker_x) {
  write_ppm(path, line_chart(series, 480, 320, marker_x));
}

}  // namespace ovp::plot
