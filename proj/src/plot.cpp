#include "slowsem/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "slowsem/bmp.hpp"

namespace slowsem {

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 10> kPalette = {{{31, 119, 180},
                                                                   {255, 127, 14},
                                                                   {44, 160, 44},
                                                                   {214, 39, 40},
                                                                   {148, 103, 189},
                                                                   {140, 86, 75},
                                                                   {227, 119, 194},
                                                                   {127, 127, 127},
                                                                   {188, 189, 34},
                                                                   {23, 190, 207}}};

void fill_rect(RgbImage& img, int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> c) {
  x0 = std::max(0, x0);
  y0 = std::max(0, y0);
  x1 = std::min(img.width - 1, x1);
  y1 = std::min(img.height - 1, y1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) img.set(x, y, c[0], c[1], c[2]);
}

void line(RgbImage& img, int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> c, int thickness = 1) {
  const int steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1});
  for (int i = 0; i <= steps; ++i) {
    const int x = x0 + (x1 - x0) * i / steps, y = y0 + (y1 - y0) * i / steps;
    fill_rect(img, x - thickness / 2, y - thickness / 2, x + thickness / 2, y + thickness / 2, c);
  }
}

void dashed_hline(RgbImage& img, int x0, int x1, int y) {
  for (int x = x0; x <= x1; ++x)
    if ((x / 6) % 2 == 0 && y >= 0 && y < img.height) img.set(x, y, 90, 90, 90);
}

}  // namespace

std::array<std::uint8_t, 3> plot_color(int index) {
  return kPalette[static_cast<std::size_t>(((index % 10) + 10) % 10)];
}

void write_scatter_plot(const std::filesystem::path& path, const Matrix& coords, const std::vector<int>& labels,
                        int size) {
  RgbImage img(size, size, 255);
  if (coords.cols() > 0) {
    const double minx = coords.row(0).minCoeff(), maxx = coords.row(0).maxCoeff();
    const double miny = coords.row(1).minCoeff(), maxy = coords.row(1).maxCoeff();
    const double sx = maxx > minx ? (size - 20) / (maxx - minx) : 0.0;
    const double sy = maxy > miny ? (size - 20) / (maxy - miny) : 0.0;
    for (Eigen::Index i = 0; i < coords.cols(); ++i) {
      const int x = 10 + static_cast<int>((coords(0, i) - minx) * sx);
      const int y = size - 10 - static_cast<int>((coords(1, i) - miny) * sy);
      const int label = i < static_cast<Eigen::Index>(labels.size()) ? labels[static_cast<std::size_t>(i)] : 0;
      fill_rect(img, x - 1, y - 1, x + 1, y + 1, plot_color(label));
    }
  }
  write_bmp(path, img);
}

void write_bar_chart(const std::filesystem::path& path, const std::vector<std::vector<double>>& groups,
                     double chance_line, int width, int height) {
  RgbImage img(width, height, 255);
  const int margin = 20;
  const int plot_h = height - 2 * margin;
  line(img, margin, height - margin, width - margin, height - margin, {0, 0, 0});
  line(img, margin, margin, margin, height - margin, {0, 0, 0});
  if (!groups.empty()) {
    const int group_w = (width - 2 * margin) / static_cast<int>(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto& series = groups[g];
      if (series.empty()) continue;
      const int bar_w = std::max(1, (group_w - 10) / static_cast<int>(series.size()));
      for (std::size_t s = 0; s < series.size(); ++s) {
        const int x0 = margin + static_cast<int>(g) * group_w + 5 + static_cast<int>(s) * bar_w;
        const int h = static_cast<int>(std::clamp(series[s], 0.0, 1.0) * plot_h);
        fill_rect(img, x0, height - margin - h, x0 + bar_w - 2, height - margin - 1,
                  plot_color(static_cast<int>(s)));
      }
    }
  }
  if (chance_line >= 0.0) dashed_hline(img, margin, width - margin, height - margin - static_cast<int>(chance_line * plot_h));
  write_bmp(path, img);
}

void write_line_chart(const std::filesystem::path& path, const std::vector<double>& x,
                      const std::vector<std::vector<double>>& series, double chance_line, int width, int height) {
  RgbImage img(width, height, 255);
  const int margin = 20;
  const int plot_w = width - 2 * margin, plot_h = height - 2 * margin;
  line(img, margin, height - margin, width - margin, height - margin, {0, 0, 0});
  line(img, margin, margin, margin, height - margin, {0, 0, 0});
  if (!x.empty()) {
    const double minx = *std::min_element(x.begin(), x.end()), maxx = *std::max_element(x.begin(), x.end());
    auto px = [&](double v) { return margin + (maxx > minx ? static_cast<int>((v - minx) / (maxx - minx) * plot_w) : plot_w / 2); };
    auto py = [&](double v) { return height - margin - static_cast<int>(std::clamp(v, 0.0, 1.0) * plot_h); };
    for (std::size_t s = 0; s < series.size(); ++s)
      for (std::size_t i = 0; i < x.size() && i < series[s].size(); ++i) {
        fill_rect(img, px(x[i]) - 2, py(series[s][i]) - 2, px(x[i]) + 2, py(series[s][i]) + 2,
                  plot_color(static_cast<int>(s)));
        if (i > 0) line(img, px(x[i - 1]), py(series[s][i - 1]), px(x[i]), py(series[s][i]), plot_color(static_cast<int>(s)), 2);
      }
  }
  if (chance_line >= 0.0) dashed_hline(img, margin, width - margin, height - margin - static_cast<int>(chance_line * plot_h));
  write_bmp(path, img);
}

}  // namespace slowsem
