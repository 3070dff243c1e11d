#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "unrest/raster.hpp"

using namespace unrest;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("unrest_raster_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Interferogram random_ifg(std::mt19937_64& gen, std::size_t w, std::size_t h, double missing_rate) {
  std::uniform_real_distribution<double> value(-50.0, 50.0), coin(0.0, 1.0);
  RealGrid g(w, h);
  for (std::size_t i = 0; i < g.size(); ++i) {
    // Values that are exactly representable in float32, so the round trip is lossless.
    g[i] = coin(gen) < missing_rate ? std::nan("") : static_cast<double>(static_cast<float>(value(gen)));
  }
  return Interferogram(std::move(g), {{"volcano", "test"}});
}

void check_same(const Interferogram& a, const Interferogram& b) {
  REQUIRE(a.width() == b.width());
  REQUIRE(a.height() == b.height());
  CHECK(a.missing() == b.missing());
  for (std::size_t y = 0; y < a.height(); ++y) {
    for (std::size_t x = 0; x < a.width(); ++x) {
      if (!a.is_missing(x, y)) CHECK(a.value(x, y) == b.value(x, y));
    }
  }
}

}  // namespace

TEST_CASE("interferogram marks non-finite pixels missing") {
  RealGrid g(3, 1, std::vector<double>{1.0, std::nan(""), INFINITY});
  const Interferogram ifg(g);
  CHECK(ifg.missing_count() == 2);
  CHECK_FALSE(ifg.is_missing(0, 0));
  CHECK(std::isnan(ifg.value(2, 0)));
}

TEST_CASE("explicit mask overrides values and rejects non-finite unmasked pixels") {
  RealGrid g(2, 1, std::vector<double>{1.0, 2.0});
  MaskGrid m(2, 1, std::vector<unsigned char>{0, 1});
  const Interferogram ifg(g, m);
  CHECK(std::isnan(ifg.value(1, 0)));
  CHECK(ifg.value(0, 0) == 1.0);

  RealGrid bad(2, 1, std::vector<double>{std::nan(""), 2.0});
  CHECK_THROWS_AS(Interferogram(bad, MaskGrid(2, 1, 0)), FormatError);
  CHECK_THROWS_AS(Interferogram(g, MaskGrid(3, 1, 0)), ShapeError);
}

TEST_CASE("raw-f32 encoding of a 1x1 zero raster") {
  const auto dir = scratch_dir("one");
  write_raster(Interferogram(RealGrid(1, 1, 0.0)), dir / "z.f32", RasterFormat::kRawF32);
  const std::string bytes = slurp(dir / "z.f32");
  const char expected[] = {'I', 'F', 'G', '1', 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0};
  REQUIRE(bytes.size() == sizeof(expected));
  CHECK(std::memcmp(bytes.data(), expected, sizeof(expected)) == 0);
}

TEST_CASE("raw-f32 stores missing pixels as NaN") {
  const auto dir = scratch_dir("nan");
  RealGrid g(2, 1, std::vector<double>{std::nan(""), 1.5});
  write_raster(Interferogram(g), dir / "n.f32", RasterFormat::kRawF32);
  const std::string bytes = slurp(dir / "n.f32");
  float first;
  std::memcpy(&first, bytes.data() + 12, 4);
  CHECK(std::isnan(first));
  const auto back = read_raster(dir / "n.f32", RasterFormat::kRawF32);
  CHECK(back.is_missing(0, 0));
  CHECK(back.value(1, 0) == 1.5);
}

TEST_CASE("raster round trip preserves values and mask") {
  std::mt19937_64 gen(42);
  const auto dir = scratch_dir("trip");
  std::uniform_int_distribution<std::size_t> side(1, 40);
  for (int trial = 0; trial < 25; ++trial) {
    const auto ifg = random_ifg(gen, side(gen), side(gen), 0.2);
    write_raster(ifg, dir / "a.f32", RasterFormat::kRawF32);
    check_same(ifg, read_raster(dir / "a.f32", RasterFormat::kRawF32));
    write_raster(ifg, dir / "a.tif", RasterFormat::kGeoTiffFloat32);
    const auto tif = read_raster(dir / "a.tif", RasterFormat::kGeoTiffFloat32);
    check_same(ifg, tif);
    CHECK(tif.metadata().at("volcano") == "test");
  }
}

TEST_CASE("format is chosen from the extension") {
  CHECK(format_for_path("x.tif") == RasterFormat::kGeoTiffFloat32);
  CHECK(format_for_path("x.TIFF") == RasterFormat::kGeoTiffFloat32);
  CHECK(format_for_path("x.f32") == RasterFormat::kRawF32);
}

TEST_CASE("malformed raw files are rejected") {
  const auto dir = scratch_dir("bad");
  CHECK_THROWS_AS(read_raster(dir / "absent.f32", RasterFormat::kRawF32), IoError);

  write_raster(Interferogram(RealGrid(4, 4, 1.0)), dir / "t.f32", RasterFormat::kRawF32);
  std::string bytes = slurp(dir / "t.f32");
  {
    std::ofstream out(dir / "short.f32", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
  }
  CHECK_THROWS_AS(read_raster(dir / "short.f32", RasterFormat::kRawF32), FormatError);

  bytes[0] = 'X';
  {
    std::ofstream out(dir / "magic.f32", std::ios::binary);
    out << bytes;
  }
  CHECK_THROWS_AS(read_raster(dir / "magic.f32", RasterFormat::kRawF32), FormatError);
}

TEST_CASE("wrap_phase maps into [-pi, pi) and is idempotent") {
  const double pi = std::numbers::pi;
  CHECK(wrap_phase(0.0) == 0.0);
  CHECK(wrap_phase(pi) == doctest::Approx(-pi));
  CHECK(wrap_phase(-pi) == -pi);
  CHECK(wrap_phase(3 * pi / 2) == doctest::Approx(-pi / 2));

  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> dist(-200.0, 200.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = dist(gen);
    const double w = wrap_phase(x);
    REQUIRE(w >= -pi);
    REQUIRE(w < pi);
    CHECK(wrap_phase(w) == w);
    const double turns = (x - w) / (2 * pi);
    CHECK(turns == doctest::Approx(std::round(turns)).epsilon(1e-9));
  }
}

TEST_CASE("wrap_phase keeps the mask") {
  RealGrid g(3, 1, std::vector<double>{10.0, std::nan(""), -10.0});
  const auto w = wrap_phase(Interferogram(g, {{"k", "v"}}));
  CHECK(w.is_missing(1, 0));
  CHECK(w.metadata().at("k") == "v");
  CHECK(w.value(0, 0) == doctest::Approx(10.0 - 4 * std::numbers::pi));
}
