#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "unrest/grid.hpp"

namespace unrest {

using Metadata = std::map<std::string, std::string>;

/// Single-band phase raster in radians with an explicit missing-data mask.
///
/// Missing pixels always hold quiet NaN in `values()`, and every non-missing
/// pixel is finite. Instances are immutable once constructed.
class Interferogram {
 public:
  Interferogram() = default;

  /// Builds from raw values; any non-finite pixel becomes missing.
  explicit Interferogram(RealGrid values, Metadata metadata = {});

  /// Builds from values plus an explicit mask. Masked pixels are overwritten
  /// with NaN; unmasked pixels must be finite.
  Interferogram(RealGrid values, const MaskGrid& missing, Metadata metadata = {});

  std::size_t width() const { return values_.width(); }
  std::size_t height() const { return values_.height(); }
  const RealGrid& values() const { return values_; }
  const MaskGrid& missing() const { return missing_; }
  const Metadata& metadata() const { return metadata_; }

  bool is_missing(std::size_t x, std::size_t y) const { return missing_(x, y) != 0; }
  double value(std::size_t x, std::size_t y) const { return values_(x, y); }
  std::size_t missing_count() const;

  Interferogram with_metadata(Metadata metadata) const;

 private:
  RealGrid values_;
  MaskGrid missing_;
  Metadata metadata_;
};

enum class RasterFormat { kGeoTiffFloat32, kRawF32 };

/// Picks a format from the file extension: .tif/.tiff are GeoTIFF, anything else raw-f32.
RasterFormat format_for_path(const std::filesystem::path& path);

/// Reads a raster. Throws IoError if unreadable, FormatError on header or pixel-type problems.
Interferogram read_raster(const std::filesystem::path& path, RasterFormat format);
void write_raster(const Interferogram& ifg, const std::filesystem::path& path, RasterFormat format);

/// Wraps phase into [-pi, pi). Missing pixels pass through.
Interferogram wrap_phase(const Interferogram& ifg);
double wrap_phase(double value);

}  // namespace unrest
