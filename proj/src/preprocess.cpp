#include "unrest/preprocess.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace unrest {

namespace {

struct Offset {
  int dx;
  int dy;
};

std::vector<Offset> disk_offsets(int radius) {
  std::vector<Offset> offsets;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) offsets.push_back({dx, dy});
    }
  }
  return offsets;
}

bool inside(long x, long y, const MaskGrid& g) {
  return x >= 0 && y >= 0 && x < static_cast<long>(g.width()) && y < static_cast<long>(g.height());
}

}  // namespace

void PreprocessConfig::validate() const {
  if (dilation_radius < 0 || closing_radius < 0) throw ConfigError("morphology radii must be >= 0");
  if (!(clamp_limit > 0.0)) throw ConfigError("clamp_limit must be > 0");
  if (!(fill_solver_tolerance > 0.0)) throw ConfigError("fill_solver_tolerance must be > 0");
}

MaskGrid dilate(const MaskGrid& mask, int radius) {
  if (radius <= 0) return mask;
  const auto offsets = disk_offsets(radius);
  MaskGrid out(mask.width(), mask.height(), 0);
  for (std::size_t y = 0; y < mask.height(); ++y) {
    for (std::size_t x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      for (const auto& o : offsets) {
        const long nx = static_cast<long>(x) + o.dx;
        const long ny = static_cast<long>(y) + o.dy;
        if (inside(nx, ny, mask)) out(nx, ny) = 1;
      }
    }
  }
  return out;
}

// Pixels outside the image count as foreground, so erosion never eats in from the border
// and close() stays extensive.
MaskGrid erode(const MaskGrid& mask, int radius) {
  if (radius <= 0) return mask;
  const auto offsets = disk_offsets(radius);
  MaskGrid out(mask.width(), mask.height(), 0);
  for (std::size_t y = 0; y < mask.height(); ++y) {
    for (std::size_t x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      bool keep = true;
      for (const auto& o : offsets) {
        const long nx = static_cast<long>(x) + o.dx;
        const long ny = static_cast<long>(y) + o.dy;
        if (inside(nx, ny, mask) && !mask(nx, ny)) {
          keep = false;
          break;
        }
      }
      out(x, y) = keep ? 1 : 0;
    }
  }
  return out;
}

MaskGrid close(const MaskGrid& mask, int radius) { return erode(dilate(mask, radius), radius); }

MaskGrid build_missing_mask(const Interferogram& ifg, const PreprocessConfig& cfg) {
  return close(dilate(ifg.missing(), cfg.dilation_radius), cfg.closing_radius);
}

RealGrid region_fill(const RealGrid& values, const MaskGrid& mask, double tolerance) {
  if (!values.same_shape(mask)) throw ShapeError("region_fill: mask shape differs from grid");
  const std::size_t w = values.width();
  const std::size_t h = values.height();

  std::vector<long> unknown_index(values.size(), -1);
  long unknowns = 0;
  double known_min = std::numeric_limits<double>::infinity();
  double known_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask[i]) {
      unknown_index[i] = unknowns++;
    } else {
      known_min = std::min(known_min, values[i]);
      known_max = std::max(known_max, values[i]);
    }
  }
  RealGrid out = values;
  if (unknowns == 0) return out;
  if (unknowns == static_cast<long>(values.size())) throw SolverError("region_fill: entire grid is masked");

  // Graph Laplacian over in-image 4-neighbours; equals the 5-point stencil away from the border.
  // Any masked component short of the whole grid borders a known pixel, so the system is SPD.
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(unknowns) * 5);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(unknowns);
  const long dxs[4] = {1, -1, 0, 0};
  const long dys[4] = {0, 0, 1, -1};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const long row = unknown_index[y * w + x];
      if (row < 0) continue;
      double degree = 0.0;
      for (int n = 0; n < 4; ++n) {
        const long nx = static_cast<long>(x) + dxs[n];
        const long ny = static_cast<long>(y) + dys[n];
        if (nx < 0 || ny < 0 || nx >= static_cast<long>(w) || ny >= static_cast<long>(h)) continue;
        degree += 1.0;
        const std::size_t j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
        if (unknown_index[j] >= 0) {
          triplets.emplace_back(row, unknown_index[j], -1.0);
        } else {
          rhs[row] += values[j];
        }
      }
      triplets.emplace_back(row, row, degree);
    }
  }
  Eigen::SparseMatrix<double> laplacian(unknowns, unknowns);
  laplacian.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(laplacian);
  if (solver.info() != Eigen::Success) throw SolverError("region_fill: factorization failed");
  const Eigen::VectorXd solution = solver.solve(rhs);
  if (solver.info() != Eigen::Success) throw SolverError("region_fill: solve failed");

  const double range = std::max(known_max - known_min, 1.0);
  const double residual = (laplacian * solution - rhs).lpNorm<Eigen::Infinity>();
  if (!std::isfinite(residual) || residual > tolerance * range) {
    throw SolverError("region_fill: residual exceeds tolerance");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (unknown_index[i] >= 0) out[i] = solution[unknown_index[i]];
  }
  return out;
}

RealGrid normalize(const RealGrid& grid, const PreprocessConfig& cfg) {
  const double limit = cfg.clamp_limit;
  double sum = 0.0;
  for (double v : grid.data()) sum += v;
  const double mean = sum / static_cast<double>(grid.size());
  RealGrid out(grid.width(), grid.height());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out[i] = std::clamp(grid[i] - mean, -limit, limit) / limit;
  }
  return out;
}

Interferogram apply_delay_correction(const Interferogram& ifg, const DelayMap& delay) {
  if (!delay.same_shape(ifg.width(), ifg.height())) throw ShapeError("delay map shape differs from interferogram");
  RealGrid out = ifg.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!ifg.missing()[i]) out[i] -= delay[i];
  }
  return Interferogram(std::move(out), ifg.missing(), ifg.metadata());
}

RealGrid preprocess_pipeline(const Interferogram& ifg, const std::optional<DelayMap>& delay,
                             const PreprocessConfig& cfg) {
  cfg.validate();
  Interferogram corrected = delay ? apply_delay_correction(ifg, *delay) : ifg;
  if (cfg.input_format == InputFormat::kWrapped) corrected = wrap_phase(corrected);

  RealGrid dense;
  if (cfg.fill_mode == FillMode::kLaplace) {
    dense = region_fill(corrected.values(), build_missing_mask(corrected, cfg), cfg.fill_solver_tolerance);
  } else {
    dense = corrected.values();
    for (std::size_t i = 0; i < dense.size(); ++i) {
      if (corrected.missing()[i]) dense[i] = 0.0;
    }
  }
  return normalize(dense, cfg);
}

}  // namespace unrest
