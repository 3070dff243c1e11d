#pragma once

#include <cstddef>
#include <vector>

#include "unrest/errors.hpp"

namespace unrest {

/// Dense row-major 2-D array. Row 0 is the top of the image.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), data_(width * height, fill) {}
  Grid(std::size_t width, std::size_t height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != width_ * height_) throw ShapeError("grid data size does not match dimensions");
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t x, std::size_t y) { return data_[y * width_ + x]; }
  const T& operator()(std::size_t x, std::size_t y) const { return data_[y * width_ + x]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(std::size_t w, std::size_t h) const { return w == width_ && h == height_; }
  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return other.width() == width_ && other.height() == height_;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<T> data_;
};

using RealGrid = Grid<double>;
// std::vector<bool> has no contiguous storage; masks use one byte per pixel.
using MaskGrid = Grid<unsigned char>;

}  // namespace unrest
