#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unrest/backbone.hpp"
#include "unrest/grid.hpp"

namespace unrest {

struct PatchConfig {
  int patch_size = 224;
  int stride = 112;

  void validate() const;
};

struct Patch {
  RealGrid pixels;
  std::size_t origin_x = 0;
  std::size_t origin_y = 0;
};

/// Pads `grid` on the right/bottom by edge replication so each side is at
/// least the patch size and a multiple of `alignment`.
RealGrid pad_for_patches(const RealGrid& grid, const PatchConfig& cfg, std::size_t alignment = 1);

/// Patch origins along one axis of length `extent` (already padded):
/// 0, stride, 2*stride, ... with the final origin clamped to extent - s.
std::vector<std::size_t> patch_origins(std::size_t extent, const PatchConfig& cfg);

/// Overlapping s x s patches covering the (padded) grid, row-major by origin.
std::vector<Patch> extract_patches(const RealGrid& grid, const PatchConfig& cfg, std::size_t alignment = 1);

/// Position-major embedding grid: `channels` values per (x, y) cell.
struct FeatureGrid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  std::span<const double> at(std::size_t x, std::size_t y) const {
    return {data.data() + (y * width + x) * channels, channels};
  }
  std::span<double> at(std::size_t x, std::size_t y) { return {data.data() + (y * width + x) * channels, channels}; }
};

/// Upsamples the deeper taps to the first tap's grid (nearest neighbour) and
/// concatenates channels in tap order. Uses batch item `item`.
FeatureGrid align_concat(const FeatureMaps& features, std::size_t item = 0);

/// Random subset of the concatenated embedding channels.
struct ChannelSelection {
  std::vector<std::size_t> indices;  // sorted, unique
  std::vector<int> layer_of;         // tap index (0..2) for each kept channel
  std::size_t total = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return indices.size(); }
};

/// Uniform draw of `keep` of the channels without replacement. `layer_channels`
/// gives each tap's channel count so every kept channel records its tap.
ChannelSelection sample_channel_selection(const std::array<int, 3>& layer_channels, std::size_t keep,
                                          std::uint64_t seed);

struct PixelRect {
  std::size_t x0, y0, x1, y1;  // half-open, clipped to the raster
  bool empty() const { return x0 >= x1 || y0 >= y1; }
};

/// Image-level embedding lattice: one k-vector per cell of `cell` x `cell` pixels.
struct EmbeddingMap {
  FeatureGrid grid;
  std::size_t cell = 1;
  std::size_t raster_width = 0;
  std::size_t raster_height = 0;
  std::vector<std::pair<std::size_t, std::size_t>> patch_origins;  // pixels, padded frame
  std::size_t patch_size = 0;
  std::string fingerprint;

  std::size_t width() const { return grid.width; }
  std::size_t height() const { return grid.height; }
  std::size_t dim() const { return grid.channels; }
  PixelRect pixel_rect(std::size_t x, std::size_t y) const;
};

/// Patches the grid, runs each patch through the backbone, keeps the selected
/// channels and averages overlapping patch embeddings per lattice cell.
EmbeddingMap embed_image(const RealGrid& grid, const PatchConfig& cfg, const Backbone& backbone,
                         const ChannelSelection& selection);

}  // namespace unrest
