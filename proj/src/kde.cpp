#include "cifvi/kde.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace cifvi {

RowVector scott_bandwidth(const Matrix& samples) {
  const Index n = samples.rows();
  if (n < 2) throw std::invalid_argument("kde: need at least 2 samples");
  const RowVector mean = samples.colwise().mean();
  const RowVector var = (samples.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n - 1);
  const double factor = std::pow(static_cast<double>(n), -1.0 / 6.0);
  RowVector h = var.array().sqrt() * factor;
  return h.cwiseMax(kBandwidthFloor);
}

double grid_x(const GridSpec& g, Index i) { return g.xmin + (i + 0.5) * (g.xmax - g.xmin) / g.steps; }
double grid_y(const GridSpec& g, Index j) { return g.ymin + (j + 0.5) * (g.ymax - g.ymin) / g.steps; }
double cell_area(const GridSpec& g) { return (g.xmax - g.xmin) / g.steps * (g.ymax - g.ymin) / g.steps; }

Matrix kde_density_grid(const Matrix& samples, const GridSpec& grid) {
  return kde_density_grid(samples, grid, scott_bandwidth(samples));
}

Matrix kde_density_grid(const Matrix& samples, const GridSpec& grid, const RowVector& h) {
  if (samples.cols() != 2) throw ShapeError("kde: samples must be 2-D");
  if (samples.rows() < 1) throw std::invalid_argument("kde: no samples");
  if (grid.steps < 1 || !(grid.xmax > grid.xmin) || !(grid.ymax > grid.ymin))
    throw std::invalid_argument("kde: bad grid");
  const Index n = samples.rows();
  const Index s = grid.steps;
  // The kernel factorizes over axes, so tabulate each axis once.
  Matrix kx(s, n), ky(s, n);
  for (Index i = 0; i < s; ++i) {
    kx.row(i) = (-0.5 * ((samples.col(0).transpose().array() - grid_x(grid, i)) / h(0)).square()).exp();
    ky.row(i) = (-0.5 * ((samples.col(1).transpose().array() - grid_y(grid, i)) / h(1)).square()).exp();
  }
  const double norm = 1.0 / (2.0 * std::numbers::pi * h(0) * h(1) * static_cast<double>(n));
  return (kx * ky.transpose()) * norm;
}

void write_grid_csv(const std::string& path, const GridSpec& grid, const Matrix& density) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(10);
  out << "x,y,density\n";
  for (Index i = 0; i < density.rows(); ++i)
    for (Index j = 0; j < density.cols(); ++j)
      out << grid_x(grid, i) << "," << grid_y(grid, j) << "," << density(i, j) << "\n";
}

}  // namespace cifvi
