#include "unrest/overlay.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace unrest {

namespace {

constexpr Rgb kDarkGreen{0, 100, 0};
constexpr Rgb kBrightGreen{0, 255, 0};

struct ColorStop {
  double at;
  double r, g, b;
};

// Sampled from a perceptually uniform dark-to-yellow ramp.
constexpr ColorStop kRamp[] = {
    {0.00, 0.267, 0.005, 0.329}, {0.25, 0.229, 0.322, 0.546}, {0.50, 0.128, 0.567, 0.551},
    {0.75, 0.369, 0.789, 0.383}, {1.00, 0.993, 0.906, 0.144},
};

bool on_boundary(const RealGrid& p, std::size_t x, std::size_t y, double level) {
  if (!(p(x, y) > level)) return false;
  const long w = static_cast<long>(p.width()), h = static_cast<long>(p.height());
  const long dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
  for (int n = 0; n < 4; ++n) {
    const long nx = static_cast<long>(x) + dx[n], ny = static_cast<long>(y) + dy[n];
    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
    if (!(p(nx, ny) > level)) return true;
  }
  return false;
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

Rgb probability_color(double p) {
  p = std::clamp(std::isfinite(p) ? p : 0.0, 0.0, 1.0);
  std::size_t i = 0;
  while (i + 2 < std::size(kRamp) && p > kRamp[i + 1].at) ++i;
  const ColorStop& a = kRamp[i];
  const ColorStop& b = kRamp[i + 1];
  const double t = (p - a.at) / (b.at - a.at);
  auto channel = [t](double lo, double hi) {
    return static_cast<std::uint8_t>(std::lround(255.0 * (lo + t * (hi - lo))));
  };
  return {channel(a.r, b.r), channel(a.g, b.g), channel(a.b, b.b)};
}

Grid<Rgb> render_overlay(const RealGrid& probabilities) {
  Grid<Rgb> img(probabilities.width(), probabilities.height());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      if (on_boundary(probabilities, x, y, 0.8)) img(x, y) = kBrightGreen;
      else if (on_boundary(probabilities, x, y, 0.5)) img(x, y) = kDarkGreen;
      else img(x, y) = probability_color(probabilities(x, y));
    }
  }
  return img;
}

void write_png(const Grid<Rgb>& image, const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open PNG for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(image.width() * 3);
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      const Rgb& c = image(x, y);
      std::copy(c.begin(), c.end(), row.begin() + static_cast<long>(x * 3));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace unrest
