#pragma once

#include "cifvi/tensor.hpp"

#include <string>

namespace cifvi {

struct GridSpec {
  double xmin = -4.0;
  double xmax = 4.0;
  double ymin = -4.0;
  double ymax = 4.0;
  Index steps = 100;
};

inline constexpr double kBandwidthFloor = 1e-3;

/// Per-axis Scott bandwidth n^(-1/6) * std_i, floored at kBandwidthFloor.
RowVector scott_bandwidth(const Matrix& samples);

/// Gaussian-kernel density of 2-D samples at every cell centre of the grid.
/// Entry (i, j) is at x = centre i, y = centre j.
Matrix kde_density_grid(const Matrix& samples, const GridSpec& grid);
Matrix kde_density_grid(const Matrix& samples, const GridSpec& grid, const RowVector& bandwidth);

double grid_x(const GridSpec& grid, Index i);
double grid_y(const GridSpec& grid, Index j);
double cell_area(const GridSpec& grid);

/// CSV with header x,y,density, one row per cell.
void write_grid_csv(const std::string& path, const GridSpec& grid, const Matrix& density);

}  // namespace cifvi
