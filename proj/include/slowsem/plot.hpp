#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "slowsem/nn.hpp"

namespace slowsem {

// Raster plots written as BMP files. No axes labels; series colors follow
// plot_color(index).

std::array<std::uint8_t, 3> plot_color(int index);

// coords is 2 x n; points colored by label.
void write_scatter_plot(const std::filesystem::path& path, const Matrix& coords, const std::vector<int>& labels,
                        int size = 480);

// groups[g][s]: value of series s within group g, values in [0, 1].
void write_bar_chart(const std::filesystem::path& path, const std::vector<std::vector<double>>& groups,
                     double chance_line = -1.0, int width = 640, int height = 360);

// series[s][i] at x[i]; values in [0, 1].
void write_line_chart(const std::filesystem::path& path, const std::vector<double>& x,
                      const std::vector<std::vector<double>>& series, double chance_line = -1.0,
                      int width = 640, int height = 360);

}  // namespace slowsem
