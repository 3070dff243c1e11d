#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "unrest/raster.hpp"
#include "unrest/rng.hpp"

namespace unrest {

/// Sentinel-1 C-band wavelength in metres.
inline constexpr double kSentinel1Wavelength = 0.0555;

/// Mogi point pressure source.
///
/// Source coordinates are in pixels (x to the right, y down the rows).
/// The LOS unit vector is (east, north, up); image rows grow southwards.
struct PointSource {
  double source_x = 0.0;
  double source_y = 0.0;
  double depth = 1000.0;    // metres, > 0
  double strength = 0.0;    // K in u = K * (r, d) / (r^2 + d^2)^(3/2), m^3
  std::array<double, 3> los{0.0, 0.0, 1.0};
};

struct AtmosphereSpec {
  double amplitude = 0.0;  // radians, standard deviation
  double spectral_exponent = 8.0 / 3.0;
};

struct IncoherenceSpec {
  double coverage_fraction = 0.0;  // in [0, 1)
  double blob_scale = 8.0;         // pixels
};

struct SceneSpec {
  std::size_t width = 64;
  std::size_t height = 64;
  double pixel_size = 100.0;  // metres per pixel
  /// Radar wavelength for the two-way 4*pi/lambda conversion; set to 4*pi to emit metres.
  double wavelength = kSentinel1Wavelength;
  std::optional<PointSource> deformation;
  AtmosphereSpec atmosphere;
  IncoherenceSpec incoherence;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

enum class SceneLabel { kNormal, kDeformation };

struct Scene {
  Interferogram interferogram;
  SceneLabel label = SceneLabel::kNormal;
};

/// LOS phase (radians) of the Mogi source on the scene grid.
RealGrid point_source_los(const SceneSpec& spec);

/// Zero-mean field with power spectrum |k|^-exponent rescaled to the requested std.
RealGrid synth_atmosphere(const SceneSpec& spec, Rng& rng);

/// True where the pixel is incoherent: the top `coverage_fraction` of a
/// Gaussian-smoothed white-noise field of correlation length `blob_scale`.
MaskGrid synth_coherence_mask(const SceneSpec& spec, Rng& rng);

/// Deformation + atmosphere with incoherent pixels set missing. Seeds the
/// atmosphere and mask from independent streams derived from `rng_seed`.
Scene generate_scene(const SceneSpec& spec);

Metadata scene_metadata(const SceneSpec& spec);

/// Draws scene specs for a labelled corpus: normal scenes differ only in
/// seed; deformation scenes get a random source placement, depth and a
/// strength chosen so the epicentre LOS phase falls in [peak_min, peak_max].
struct SceneSampler {
  SceneSpec base;
  double peak_min = 9.0;  // radians at the epicentre
  double peak_max = 15.0;
  double depth_min = 800.0;
  double depth_max = 1500.0;
  /// Sources are placed at least this fraction of the width/height from the edges.
  double source_margin = 0.25;

  void validate() const;
  SceneSpec normal(std::uint64_t seed) const;
  SceneSpec deformation(std::uint64_t seed) const;
};

/// Strength K that puts `peak` radians of LOS phase at the epicentre.
double strength_for_peak(double peak, double depth, const std::array<double, 3>& los, double wavelength);

std::string to_string(SceneLabel label);

}  // namespace unrest
