#pragma once

#include <optional>

#include "unrest/raster.hpp"

namespace unrest {

/// How missing pixels are replaced before normalization.
enum class FillMode {
  kLaplace,  // harmonic interpolation over the dilated+closed mask
  kZero,     // raw missing pixels set to zero; no mask refinement
};

/// Representation fed to the detector.
enum class InputFormat { kUnwrapped, kWrapped };

struct PreprocessConfig {
  int dilation_radius = 2;
  int closing_radius = 5;
  double clamp_limit = 30.0;  // radians
  /// Maximum allowed residual of the discrete Laplace equation on filled
  /// pixels, relative to the range of the known boundary values.
  double fill_solver_tolerance = 1e-6;
  FillMode fill_mode = FillMode::kLaplace;
  InputFormat input_format = InputFormat::kUnwrapped;

  void validate() const;
};

/// Per-pixel delay in radians, same shape as the interferogram it corrects.
/// Converting zenith delay in metres to phase is the producer's job.
using DelayMap = RealGrid;

/// Disk structuring element: offsets with dx*dx + dy*dy <= r*r.
MaskGrid dilate(const MaskGrid& mask, int radius);
MaskGrid erode(const MaskGrid& mask, int radius);
MaskGrid close(const MaskGrid& mask, int radius);

/// Missing mask dilated by `dilation_radius`, then closed by `closing_radius`.
MaskGrid build_missing_mask(const Interferogram& ifg, const PreprocessConfig& cfg);

/// Fills masked pixels by solving the discrete Laplace equation with the
/// unmasked pixels as Dirichlet data. Unmasked pixels are copied unchanged.
///
/// On the image border only in-image neighbours enter the stencil (graph
/// Laplacian), so masked regions touching the border get a zero-flux
/// condition there. Throws SolverError if the whole grid is masked or the
/// solution residual exceeds `tolerance` times the known-value range.
///
/// Values under the mask are ignored (they may be NaN).
RealGrid region_fill(const RealGrid& values, const MaskGrid& mask, double tolerance = 1e-6);

/// clamp(grid - mean(grid), -L, L) / L with L = cfg.clamp_limit.
RealGrid normalize(const RealGrid& grid, const PreprocessConfig& cfg);

/// Subtracts `delay` at non-missing pixels. Throws ShapeError on mismatch.
Interferogram apply_delay_correction(const Interferogram& ifg, const DelayMap& delay);

/// Correction, optional wrapping, masking, filling, normalization.
RealGrid preprocess_pipeline(const Interferogram& ifg, const std::optional<DelayMap>& delay,
                             const PreprocessConfig& cfg);

}  // namespace unrest
