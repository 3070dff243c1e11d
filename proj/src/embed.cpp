#include "unrest/embed.hpp"

#include <algorithm>
#include <numeric>

#include "unrest/rng.hpp"

namespace unrest {

void PatchConfig::validate() const {
  if (patch_size <= 0) throw ConfigError("patch size must be > 0");
  if (stride <= 0 || stride > patch_size) throw ConfigError("patch stride must be in (0, patch_size]");
}

RealGrid pad_for_patches(const RealGrid& grid, const PatchConfig& cfg, std::size_t alignment) {
  if (grid.width() == 0 || grid.height() == 0) throw ShapeError("cannot patch an empty grid");
  if (alignment == 0) alignment = 1;
  const auto s = static_cast<std::size_t>(cfg.patch_size);
  auto padded_extent = [&](std::size_t n) {
    const std::size_t aligned = (n + alignment - 1) / alignment * alignment;
    return std::max(aligned, s);
  };
  const std::size_t pw = padded_extent(grid.width());
  const std::size_t ph = padded_extent(grid.height());
  if (pw == grid.width() && ph == grid.height()) return grid;
  RealGrid out(pw, ph);
  for (std::size_t y = 0; y < ph; ++y) {
    const std::size_t sy = std::min(y, grid.height() - 1);
    for (std::size_t x = 0; x < pw; ++x) out(x, y) = grid(std::min(x, grid.width() - 1), sy);
  }
  return out;
}

std::vector<std::size_t> patch_origins(std::size_t extent, const PatchConfig& cfg) {
  cfg.validate();
  const auto s = static_cast<std::size_t>(cfg.patch_size);
  const auto stride = static_cast<std::size_t>(cfg.stride);
  if (extent < s) throw ShapeError("extent smaller than patch size; pad first");
  std::vector<std::size_t> origins;
  for (std::size_t o = 0; o + s < extent; o += stride) origins.push_back(o);
  if (origins.empty() || origins.back() != extent - s) origins.push_back(extent - s);
  return origins;
}

std::vector<Patch> extract_patches(const RealGrid& grid, const PatchConfig& cfg, std::size_t alignment) {
  cfg.validate();
  const RealGrid padded = pad_for_patches(grid, cfg, alignment);
  const auto s = static_cast<std::size_t>(cfg.patch_size);
  std::vector<Patch> patches;
  for (std::size_t oy : patch_origins(padded.height(), cfg)) {
    for (std::size_t ox : patch_origins(padded.width(), cfg)) {
      Patch p{RealGrid(s, s), ox, oy};
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) p.pixels(x, y) = padded(ox + x, oy + y);
      }
      patches.push_back(std::move(p));
    }
  }
  return patches;
}

FeatureGrid align_concat(const FeatureMaps& features, std::size_t item) {
  const auto fine_h = static_cast<std::size_t>(features[0].dim(2));
  const auto fine_w = static_cast<std::size_t>(features[0].dim(3));
  std::size_t total = 0;
  for (const auto& f : features) total += static_cast<std::size_t>(f.dim(1));

  FeatureGrid out{fine_w, fine_h, total, std::vector<double>(fine_w * fine_h * total)};
  std::size_t channel_offset = 0;
  for (const auto& f : features) {
    const auto c = static_cast<std::size_t>(f.dim(1));
    const auto h = static_cast<std::size_t>(f.dim(2));
    const auto w = static_cast<std::size_t>(f.dim(3));
    if (fine_h % h != 0 || fine_w % w != 0) throw ShapeError("tap grids are not integer multiples of each other");
    const std::size_t ry = fine_h / h;
    const std::size_t rx = fine_w / w;
    const float* base = f.data.data() + item * c * h * w;
    for (std::size_t y = 0; y < fine_h; ++y) {
      for (std::size_t x = 0; x < fine_w; ++x) {
        auto dst = out.at(x, y);
        const std::size_t src = (y / ry) * w + (x / rx);
        for (std::size_t ch = 0; ch < c; ++ch) dst[channel_offset + ch] = base[ch * h * w + src];
      }
    }
    channel_offset += c;
  }
  return out;
}

ChannelSelection sample_channel_selection(const std::array<int, 3>& layer_channels, std::size_t keep,
                                          std::uint64_t seed) {
  const std::size_t total =
      static_cast<std::size_t>(layer_channels[0]) + static_cast<std::size_t>(layer_channels[1]) +
      static_cast<std::size_t>(layer_channels[2]);
  if (keep > total) throw ConfigError("cannot keep more channels than the backbone provides");
  if (keep == 0) throw ConfigError("must keep at least one channel");

  std::vector<std::size_t> pool(total);
  std::iota(pool.begin(), pool.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first `keep` slots become a uniform sample.
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(keep);
  std::sort(pool.begin(), pool.end());

  ChannelSelection sel{std::move(pool), {}, total, seed};
  sel.layer_of.reserve(keep);
  const std::size_t first_end = static_cast<std::size_t>(layer_channels[0]);
  const std::size_t second_end = first_end + static_cast<std::size_t>(layer_channels[1]);
  for (std::size_t idx : sel.indices) sel.layer_of.push_back(idx < first_end ? 0 : (idx < second_end ? 1 : 2));
  return sel;
}

PixelRect EmbeddingMap::pixel_rect(std::size_t x, std::size_t y) const {
  const std::size_t x0 = std::min(x * cell, raster_width);
  const std::size_t y0 = std::min(y * cell, raster_height);
  return {x0, y0, std::min((x + 1) * cell, raster_width), std::min((y + 1) * cell, raster_height)};
}

EmbeddingMap embed_image(const RealGrid& grid, const PatchConfig& cfg, const Backbone& backbone,
                         const ChannelSelection& selection) {
  cfg.validate();
  if (cfg.patch_size != backbone.input_size()) throw ShapeError("patch size differs from backbone input size");
  if (selection.total != static_cast<std::size_t>(backbone.total_channels())) {
    throw ShapeError("channel selection was drawn for a different backbone");
  }
  const auto cell = static_cast<std::size_t>(backbone.layers()[0].stride);
  if (cfg.stride % static_cast<int>(cell) != 0 || cfg.patch_size % static_cast<int>(cell) != 0) {
    throw ConfigError("patch size and stride must be multiples of the finest tap stride");
  }
  const std::vector<Patch> patches = extract_patches(grid, cfg, cell);
  const RealGrid padded = pad_for_patches(grid, cfg, cell);
  const std::size_t k = selection.size();
  const std::size_t lw = padded.width() / cell;
  const std::size_t lh = padded.height() / cell;

  EmbeddingMap map;
  map.grid = FeatureGrid{lw, lh, k, std::vector<double>(lw * lh * k, 0.0)};
  map.cell = cell;
  map.raster_width = grid.width();
  map.raster_height = grid.height();
  map.patch_size = static_cast<std::size_t>(cfg.patch_size);
  std::vector<unsigned> counts(lw * lh, 0);

  // Patches are accumulated in a fixed order, so the result is deterministic.
  for (const Patch& patch : patches) {
    const FeatureGrid full = align_concat(backbone.run_patch(patch.pixels));
    const std::size_t ox = patch.origin_x / cell;
    const std::size_t oy = patch.origin_y / cell;
    for (std::size_t y = 0; y < full.height; ++y) {
      for (std::size_t x = 0; x < full.width; ++x) {
        const auto src = full.at(x, y);
        auto dst = map.grid.at(ox + x, oy + y);
        for (std::size_t c = 0; c < k; ++c) dst[c] += src[selection.indices[c]];
        ++counts[(oy + y) * lw + ox + x];
      }
    }
    map.patch_origins.emplace_back(patch.origin_x, patch.origin_y);
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) throw ShapeError("embedding lattice position not covered by any patch");
    const auto n = static_cast<double>(counts[i]);
    for (std::size_t c = 0; c < k; ++c) map.grid.data[i * k + c] /= n;
  }
  return map;
}

}  // namespace unrest
