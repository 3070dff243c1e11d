#include "unrest/raster.hpp"

#include <tiffio.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace unrest {

namespace {

constexpr std::array<char, 4> kRawMagic = {'I', 'F', 'G', '1'};
constexpr std::size_t kRawHeaderBytes = 12;
// Cap on width*height accepted from a header; guards against absurd allocations.
constexpr std::uint64_t kMaxPixels = std::uint64_t{1} << 32;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint32_t load_u32_le(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

void store_u32_le(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v);
  p[1] = static_cast<unsigned char>(v >> 8);
  p[2] = static_cast<unsigned char>(v >> 16);
  p[3] = static_cast<unsigned char>(v >> 24);
}

Interferogram read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open raster: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kRawHeaderBytes) throw FormatError("raw-f32 file too short for header: " + path.string());
  if (!std::equal(kRawMagic.begin(), kRawMagic.end(), bytes.begin())) {
    throw FormatError("raw-f32 magic mismatch: " + path.string());
  }
  const std::uint32_t width = load_u32_le(bytes.data() + 4);
  const std::uint32_t height = load_u32_le(bytes.data() + 8);
  const std::uint64_t pixels = std::uint64_t{width} * height;
  if (width == 0 || height == 0 || pixels > kMaxPixels) {
    throw FormatError("raw-f32 header has invalid dimensions: " + path.string());
  }
  if (bytes.size() != kRawHeaderBytes + pixels * 4) {
    throw FormatError("raw-f32 payload size does not match header dimensions: " + path.string());
  }
  RealGrid values(width, height);
  const unsigned char* p = bytes.data() + kRawHeaderBytes;
  for (std::size_t i = 0; i < pixels; ++i, p += 4) {
    values[i] = static_cast<double>(std::bit_cast<float>(load_u32_le(p)));
  }
  return Interferogram(std::move(values));
}

void write_raw(const Interferogram& ifg, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(kRawHeaderBytes + ifg.values().size() * 4);
  std::copy(kRawMagic.begin(), kRawMagic.end(), bytes.begin());
  store_u32_le(bytes.data() + 4, static_cast<std::uint32_t>(ifg.width()));
  store_u32_le(bytes.data() + 8, static_cast<std::uint32_t>(ifg.height()));
  unsigned char* p = bytes.data() + kRawHeaderBytes;
  const float quiet_nan = std::numeric_limits<float>::quiet_NaN();
  for (std::size_t i = 0; i < ifg.values().size(); ++i, p += 4) {
    const float v = ifg.missing()[i] ? quiet_nan : static_cast<float>(ifg.values()[i]);
    store_u32_le(p, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open raster for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing raster: " + path.string());
}

struct TiffCloser {
  void operator()(TIFF* t) const { TIFFClose(t); }
};
using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

void silence_tiff_warnings() {
  static const bool once = [] {
    TIFFSetWarningHandler(nullptr);
    return true;
  }();
  (void)once;
}

// GeoTIFF georeferencing tags; kept verbatim in metadata, never used for computation.
constexpr ttag_t kModelPixelScaleTag = 33550;
constexpr ttag_t kModelTiepointTag = 33922;

std::string doubles_to_string(const double* values, std::uint32_t count) {
  std::ostringstream os;
  os.precision(17);
  for (std::uint32_t i = 0; i < count; ++i) os << (i ? "," : "") << values[i];
  return os.str();
}

void read_geo_tag(TIFF* tif, ttag_t tag, const char* key, Metadata& meta) {
  if (TIFFFindField(tif, tag, TIFF_ANY) == nullptr) return;
  std::uint32_t count = 0;
  double* values = nullptr;
  if (TIFFGetField(tif, tag, &count, &values) == 1 && values != nullptr && count > 0) {
    meta[key] = doubles_to_string(values, count);
  }
}

Interferogram read_tiff(const std::filesystem::path& path) {
  silence_tiff_warnings();
  TiffPtr tif(TIFFOpen(path.c_str(), "r"));
  if (!tif) throw IoError("cannot open GeoTIFF: " + path.string());

  std::uint32_t width = 0, height = 0;
  std::uint16_t samples = 1, bits = 0, sample_format = SAMPLEFORMAT_UINT;
  TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &samples);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bits);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &sample_format);
  if (width == 0 || height == 0) throw FormatError("GeoTIFF has zero dimensions: " + path.string());
  if (samples != 1 || bits != 32 || sample_format != SAMPLEFORMAT_IEEEFP) {
    throw FormatError("unsupported GeoTIFF pixel type (need single-band float32): " + path.string());
  }

  RealGrid values(width, height);
  if (TIFFIsTiled(tif.get())) {
    std::uint32_t tile_w = 0, tile_h = 0;
    TIFFGetField(tif.get(), TIFFTAG_TILEWIDTH, &tile_w);
    TIFFGetField(tif.get(), TIFFTAG_TILELENGTH, &tile_h);
    std::vector<float> tile(static_cast<std::size_t>(tile_w) * tile_h);
    for (std::uint32_t ty = 0; ty < height; ty += tile_h) {
      for (std::uint32_t tx = 0; tx < width; tx += tile_w) {
        if (TIFFReadTile(tif.get(), tile.data(), tx, ty, 0, 0) < 0) {
          throw FormatError("failed reading GeoTIFF tile: " + path.string());
        }
        for (std::uint32_t y = ty; y < std::min(height, ty + tile_h); ++y) {
          for (std::uint32_t x = tx; x < std::min(width, tx + tile_w); ++x) {
            values(x, y) = tile[(y - ty) * tile_w + (x - tx)];
          }
        }
      }
    }
  } else {
    std::vector<float> row(width);
    for (std::uint32_t y = 0; y < height; ++y) {
      if (TIFFReadScanline(tif.get(), row.data(), y, 0) < 0) {
        throw FormatError("failed reading GeoTIFF scanline: " + path.string());
      }
      for (std::uint32_t x = 0; x < width; ++x) values(x, y) = row[x];
    }
  }

  Metadata meta;
  char* description = nullptr;
  if (TIFFGetField(tif.get(), TIFFTAG_IMAGEDESCRIPTION, &description) == 1 && description != nullptr) {
    auto parsed = nlohmann::json::parse(description, nullptr, false);
    if (parsed.is_object()) {
      for (const auto& [k, v] : parsed.items()) {
        if (v.is_string()) meta[k] = v.get<std::string>();
      }
    } else {
      meta["tiff.description"] = description;
    }
  }
  read_geo_tag(tif.get(), kModelPixelScaleTag, "geotiff.pixel_scale", meta);
  read_geo_tag(tif.get(), kModelTiepointTag, "geotiff.tiepoint", meta);
  return Interferogram(std::move(values), std::move(meta));
}

void write_tiff(const Interferogram& ifg, const std::filesystem::path& path) {
  silence_tiff_warnings();
  TiffPtr tif(TIFFOpen(path.c_str(), "w"));
  if (!tif) throw IoError("cannot open GeoTIFF for writing: " + path.string());
  const auto width = static_cast<std::uint32_t>(ifg.width());
  const auto height = static_cast<std::uint32_t>(ifg.height());
  TIFFSetField(tif.get(), TIFFTAG_IMAGEWIDTH, width);
  TIFFSetField(tif.get(), TIFFTAG_IMAGELENGTH, height);
  TIFFSetField(tif.get(), TIFFTAG_SAMPLESPERPIXEL, std::uint16_t{1});
  TIFFSetField(tif.get(), TIFFTAG_BITSPERSAMPLE, std::uint16_t{32});
  TIFFSetField(tif.get(), TIFFTAG_SAMPLEFORMAT, std::uint16_t{SAMPLEFORMAT_IEEEFP});
  TIFFSetField(tif.get(), TIFFTAG_PHOTOMETRIC, std::uint16_t{PHOTOMETRIC_MINISBLACK});
  TIFFSetField(tif.get(), TIFFTAG_PLANARCONFIG, std::uint16_t{PLANARCONFIG_CONTIG});
  TIFFSetField(tif.get(), TIFFTAG_ROWSPERSTRIP, TIFFDefaultStripSize(tif.get(), 0));
  if (!ifg.metadata().empty()) {
    nlohmann::json desc = nlohmann::json::object();
    for (const auto& [k, v] : ifg.metadata()) desc[k] = v;
    TIFFSetField(tif.get(), TIFFTAG_IMAGEDESCRIPTION, desc.dump().c_str());
  }
  std::vector<float> row(width);
  const float quiet_nan = std::numeric_limits<float>::quiet_NaN();
  for (std::uint32_t y = 0; y < height; ++y) {
    for (std::uint32_t x = 0; x < width; ++x) {
      row[x] = ifg.is_missing(x, y) ? quiet_nan : static_cast<float>(ifg.value(x, y));
    }
    if (TIFFWriteScanline(tif.get(), row.data(), y, 0) < 0) {
      throw IoError("failed writing GeoTIFF scanline: " + path.string());
    }
  }
}

}  // namespace

Interferogram::Interferogram(RealGrid values, Metadata metadata)
    : values_(std::move(values)), missing_(values_.width(), values_.height(), 0), metadata_(std::move(metadata)) {
  if (values_.width() == 0 || values_.height() == 0) throw ShapeError("interferogram must be non-empty");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      values_[i] = kNaN;
      missing_[i] = 1;
    }
  }
}

Interferogram::Interferogram(RealGrid values, const MaskGrid& missing, Metadata metadata)
    : values_(std::move(values)), missing_(missing), metadata_(std::move(metadata)) {
  if (values_.width() == 0 || values_.height() == 0) throw ShapeError("interferogram must be non-empty");
  if (!values_.same_shape(missing_)) throw ShapeError("values and missing mask differ in shape");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (missing_[i]) {
      missing_[i] = 1;
      values_[i] = kNaN;
    } else if (!std::isfinite(values_[i])) {
      throw FormatError("non-finite value at a pixel not flagged missing");
    }
  }
}

std::size_t Interferogram::missing_count() const {
  return static_cast<std::size_t>(std::count(missing_.data().begin(), missing_.data().end(), 1));
}

Interferogram Interferogram::with_metadata(Metadata metadata) const {
  Interferogram copy = *this;
  copy.metadata_ = std::move(metadata);
  return copy;
}

RasterFormat format_for_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return (ext == ".tif" || ext == ".tiff") ? RasterFormat::kGeoTiffFloat32 : RasterFormat::kRawF32;
}

Interferogram read_raster(const std::filesystem::path& path, RasterFormat format) {
  return format == RasterFormat::kRawF32 ? read_raw(path) : read_tiff(path);
}

void write_raster(const Interferogram& ifg, const std::filesystem::path& path, RasterFormat format) {
  if (format == RasterFormat::kRawF32) {
    write_raw(ifg, path);
  } else {
    write_tiff(ifg, path);
  }
}

double wrap_phase(double value) {
  constexpr double pi = std::numbers::pi;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (value >= -pi && value < pi) return value;
  double wrapped = value - two_pi * std::floor((value + pi) / two_pi);
  if (wrapped >= pi) wrapped -= two_pi;
  if (wrapped < -pi) wrapped += two_pi;
  return wrapped;
}

Interferogram wrap_phase(const Interferogram& ifg) {
  RealGrid out = ifg.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!ifg.missing()[i]) out[i] = wrap_phase(out[i]);
  }
  return Interferogram(std::move(out), ifg.missing(), ifg.metadata());
}

}  // namespace unrest
