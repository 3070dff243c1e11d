#include <doctest.h>

#include <fstream>

#include "unrest/overlay.hpp"

using namespace unrest;

TEST_CASE("overlay draws contours at the probability tiers") {
  RealGrid p(9, 9, 0.0);
  for (std::size_t y = 2; y < 7; ++y)
    for (std::size_t x = 2; x < 7; ++x) p(x, y) = 0.6;
  for (std::size_t y = 3; y < 6; ++y)
    for (std::size_t x = 3; x < 6; ++x) p(x, y) = 0.9;
  const Grid<Rgb> img = render_overlay(p);
  CHECK(img(0, 0) == probability_color(0.0));
  CHECK(img(2, 2) == Rgb{0, 100, 0});
  CHECK(img(3, 3) == Rgb{0, 255, 0});
  CHECK(img(4, 4) == probability_color(0.9));
}

TEST_CASE("colour ramp endpoints differ and the PNG is written") {
  CHECK(probability_color(0.0) != probability_color(1.0));
  CHECK(probability_color(-1.0) == probability_color(0.0));
  const auto path = std::filesystem::temp_directory_path() / "unrest_overlay.png";
  write_png(render_overlay(RealGrid(5, 4, 0.3)), path);
  std::ifstream in(path, std::ios::binary);
  char sig[8];
  in.read(sig, 8);
  CHECK(std::string(sig + 1, 3) == "PNG");
}
