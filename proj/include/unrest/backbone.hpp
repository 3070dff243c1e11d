#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "unrest/grid.hpp"

namespace unrest {

/// Dense NCHW float tensor.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> dims, float fill = 0.0f);
  std::int64_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t element_count() const;
};

struct LayerDescriptor {
  int channels = 0;
  int stride = 0;  // input pixels per feature cell
};

using FeatureMaps = std::array<Tensor, 3>;

/// Pretrained CNN loaded from ONNX with three feature taps ("feat1".."feat3").
///
/// The graph is executed by a small CPU interpreter supporting the operators a
/// ResNet-style backbone exports to (Conv, Relu, MaxPool, AveragePool, Add,
/// BatchNormalization, Identity, Constant). Loading runs one probe inference at
/// `input_size` to discover each tap's channel count and stride. A loaded
/// backbone is immutable; `run` is const and safe to call concurrently.
class Backbone {
 public:
  static Backbone load(const std::filesystem::path& path, int input_size);

  Backbone(Backbone&&) noexcept;
  Backbone& operator=(Backbone&&) noexcept;
  ~Backbone();

  int input_size() const { return input_size_; }
  int input_channels() const { return input_channels_; }
  const std::array<LayerDescriptor, 3>& layers() const { return layers_; }
  int total_channels() const;
  /// Input size, tap shapes and a CRC-32 of the model file.
  std::string descriptor() const;

  /// Runs an N x C x S x S batch; returns the three tap tensors.
  FeatureMaps run(const Tensor& batch) const;

  /// Single-band patch (S x S) replicated across the input channels.
  FeatureMaps run_patch(const RealGrid& patch) const;

 private:
  struct Graph;
  Backbone() = default;

  std::unique_ptr<Graph> graph_;
  int input_size_ = 0;
  int input_channels_ = 3;
  std::array<LayerDescriptor, 3> layers_{};
  std::uint32_t file_crc_ = 0;
};

}  // namespace unrest
