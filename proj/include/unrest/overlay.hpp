#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "unrest/grid.hpp"

namespace unrest {

using Rgb = std::array<std::uint8_t, 3>;

/// Dark purple (P = 0) through teal to bright yellow (P = 1).
Rgb probability_color(double p);

/// Probability map rendered with probability_color(); pixels on the boundary
/// of {P > 0.5} are drawn dark green and of {P > 0.8} bright green.
Grid<Rgb> render_overlay(const RealGrid& probabilities);

void write_png(const Grid<Rgb>& image, const std::filesystem::path& path);

}  // namespace unrest
