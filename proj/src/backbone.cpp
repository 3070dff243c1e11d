#include "unrest/backbone.hpp"

#include <Eigen/Core>
#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "onnx.pb.h"

namespace unrest {

Tensor::Tensor(std::vector<std::int64_t> dims, float fill) : shape(std::move(dims)) {
  data.assign(element_count(), fill);
}

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const std::array<std::string, 3> kTapNames = {"feat1", "feat2", "feat3"};

struct Attributes {
  std::unordered_map<std::string, std::vector<std::int64_t>> ints;
  std::unordered_map<std::string, float> floats;
  std::unordered_map<std::string, std::string> strings;
  std::unordered_map<std::string, Tensor> tensors;

  std::vector<std::int64_t> ints_or(const std::string& name, std::vector<std::int64_t> fallback) const {
    auto it = ints.find(name);
    return it == ints.end() ? fallback : it->second;
  }
  std::int64_t int_or(const std::string& name, std::int64_t fallback) const {
    auto it = ints.find(name);
    return (it == ints.end() || it->second.empty()) ? fallback : it->second.front();
  }
  float float_or(const std::string& name, float fallback) const {
    auto it = floats.find(name);
    return it == floats.end() ? fallback : it->second;
  }
};

struct Node {
  std::string op;
  std::string name;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  Attributes attrs;
};

Tensor tensor_from_proto(const onnx::TensorProto& proto) {
  if (proto.has_data_location() && proto.data_location() == onnx::TensorProto::EXTERNAL) {
    throw BackboneError("external tensor data is not supported: " + proto.name());
  }
  std::vector<std::int64_t> dims(proto.dims().begin(), proto.dims().end());
  Tensor t(dims);
  const std::size_t n = t.element_count();
  switch (proto.data_type()) {
    case onnx::TensorProto::FLOAT:
      if (!proto.raw_data().empty()) {
        if (proto.raw_data().size() != n * sizeof(float)) throw BackboneError("bad raw_data size: " + proto.name());
        std::memcpy(t.data.data(), proto.raw_data().data(), n * sizeof(float));
      } else {
        if (static_cast<std::size_t>(proto.float_data_size()) != n) throw BackboneError("bad float_data size: " + proto.name());
        std::copy(proto.float_data().begin(), proto.float_data().end(), t.data.begin());
      }
      break;
    case onnx::TensorProto::INT64:
      if (!proto.raw_data().empty()) {
        if (proto.raw_data().size() != n * sizeof(std::int64_t)) throw BackboneError("bad raw_data size: " + proto.name());
        std::vector<std::int64_t> tmp(n);
        std::memcpy(tmp.data(), proto.raw_data().data(), n * sizeof(std::int64_t));
        std::transform(tmp.begin(), tmp.end(), t.data.begin(), [](std::int64_t v) { return static_cast<float>(v); });
      } else {
        std::transform(proto.int64_data().begin(), proto.int64_data().end(), t.data.begin(),
                       [](std::int64_t v) { return static_cast<float>(v); });
      }
      break;
    default:
      throw BackboneError("unsupported tensor data type in " + proto.name());
  }
  return t;
}

Attributes parse_attributes(const onnx::NodeProto& node) {
  Attributes a;
  for (const auto& attr : node.attribute()) {
    switch (attr.type()) {
      case onnx::AttributeProto::INT:
        a.ints[attr.name()] = {attr.i()};
        break;
      case onnx::AttributeProto::INTS:
        a.ints[attr.name()] = std::vector<std::int64_t>(attr.ints().begin(), attr.ints().end());
        break;
      case onnx::AttributeProto::FLOAT:
        a.floats[attr.name()] = attr.f();
        break;
      case onnx::AttributeProto::STRING:
        a.strings[attr.name()] = attr.s();
        break;
      case onnx::AttributeProto::TENSOR:
        a.tensors[attr.name()] = tensor_from_proto(attr.t());
        break;
      default:
        break;
    }
  }
  return a;
}

void require_rank4(const Tensor& t, const std::string& op) {
  if (t.shape.size() != 4) throw BackboneError(op + ": expected a rank-4 NCHW tensor");
}

struct Window2d {
  std::int64_t kh, kw, sh, sw, pt, pl, pb, pr, dh, dw;
};

Window2d window_from(const Attributes& a, std::int64_t kh, std::int64_t kw, const std::string& op) {
  const auto auto_pad = a.strings.count("auto_pad") ? a.strings.at("auto_pad") : std::string("NOTSET");
  if (auto_pad != "NOTSET" && auto_pad != "VALID") throw BackboneError(op + ": auto_pad=" + auto_pad + " not supported");
  const auto strides = a.ints_or("strides", {1, 1});
  const auto pads = a.ints_or("pads", {0, 0, 0, 0});
  const auto dil = a.ints_or("dilations", {1, 1});
  if (strides.size() != 2 || pads.size() != 4 || dil.size() != 2) throw BackboneError(op + ": only 2-D windows supported");
  if (a.int_or("ceil_mode", 0) != 0) throw BackboneError(op + ": ceil_mode not supported");
  return {kh, kw, strides[0], strides[1], pads[0], pads[1], pads[2], pads[3], dil[0], dil[1]};
}

std::int64_t out_extent(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t p0, std::int64_t p1, std::int64_t d) {
  const std::int64_t span = d * (k - 1) + 1;
  const std::int64_t out = (in + p0 + p1 - span) / s + 1;
  if (out <= 0) throw BackboneError("window larger than padded input");
  return out;
}

Tensor conv(const Tensor& x, const Tensor& w, const Tensor* bias, const Attributes& a) {
  require_rank4(x, "Conv");
  require_rank4(w, "Conv");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::int64_t m = w.dim(0), cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const std::int64_t group = a.int_or("group", 1);
  if (c != cg * group || m % group != 0) throw BackboneError("Conv: channel/group mismatch");
  const Window2d win = window_from(a, kh, kw, "Conv");
  const std::int64_t oh = out_extent(h, kh, win.sh, win.pt, win.pb, win.dh);
  const std::int64_t ow = out_extent(wd, kw, win.sw, win.pl, win.pr, win.dw);
  const std::int64_t mg = m / group;
  const std::int64_t patch_len = cg * kh * kw;

  Tensor y({n, m, oh, ow});
  RowMatrix cols(patch_len, oh * ow);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t g = 0; g < group; ++g) {
      for (std::int64_t ci = 0; ci < cg; ++ci) {
        const float* plane = x.data.data() + ((b * c + g * cg + ci) * h) * wd;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            float* row = cols.data() + ((ci * kh + ky) * kw + kx) * oh * ow;
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const std::int64_t iy = oy * win.sh - win.pt + ky * win.dh;
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const std::int64_t ix = ox * win.sw - win.pl + kx * win.dw;
                row[oy * ow + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < wd) ? plane[iy * wd + ix] : 0.0f;
              }
            }
          }
        }
      }
      Eigen::Map<const RowMatrix> weights(w.data.data() + g * mg * patch_len, mg, patch_len);
      Eigen::Map<RowMatrix> out(y.data.data() + (b * m + g * mg) * oh * ow, mg, oh * ow);
      out.noalias() = weights * cols;
      if (bias != nullptr) {
        for (std::int64_t mi = 0; mi < mg; ++mi) out.row(mi).array() += bias->data[g * mg + mi];
      }
    }
  }
  return y;
}

Tensor pool(const Tensor& x, const Attributes& a, bool is_max) {
  const std::string op = is_max ? "MaxPool" : "AveragePool";
  require_rank4(x, op);
  const auto kernel = a.ints_or("kernel_shape", {});
  if (kernel.size() != 2) throw BackboneError(op + ": kernel_shape must be 2-D");
  const Window2d win = window_from(a, kernel[0], kernel[1], op);
  const bool include_pad = a.int_or("count_include_pad", 0) != 0;
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::int64_t oh = out_extent(h, win.kh, win.sh, win.pt, win.pb, win.dh);
  const std::int64_t ow = out_extent(wd, win.kw, win.sw, win.pl, win.pr, win.dw);
  Tensor y({n, c, oh, ow});
  for (std::int64_t p = 0; p < n * c; ++p) {
    const float* plane = x.data.data() + p * h * wd;
    float* out = y.data.data() + p * oh * ow;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        float acc = is_max ? -std::numeric_limits<float>::infinity() : 0.0f;
        int count = 0;
        for (std::int64_t ky = 0; ky < win.kh; ++ky) {
          const std::int64_t iy = oy * win.sh - win.pt + ky * win.dh;
          for (std::int64_t kx = 0; kx < win.kw; ++kx) {
            const std::int64_t ix = ox * win.sw - win.pl + kx * win.dw;
            const bool valid = iy >= 0 && iy < h && ix >= 0 && ix < wd;
            if (valid) {
              const float v = plane[iy * wd + ix];
              acc = is_max ? std::max(acc, v) : acc + v;
              ++count;
            } else if (include_pad) {
              ++count;
            }
          }
        }
        out[oy * ow + ox] = is_max ? acc : (count > 0 ? acc / static_cast<float>(count) : 0.0f);
      }
    }
  }
  return y;
}

Tensor batch_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, const Tensor& mean, const Tensor& var,
                  const Attributes& a) {
  require_rank4(x, "BatchNormalization");
  const float eps = a.float_or("epsilon", 1e-5f);
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y = x;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const float k = scale.data[ch] / std::sqrt(var.data[ch] + eps);
      const float off = shift.data[ch] - mean.data[ch] * k;
      float* p = y.data.data() + (b * c + ch) * hw;
      for (std::int64_t i = 0; i < hw; ++i) p[i] = p[i] * k + off;
    }
  }
  return y;
}

// Numpy-style broadcasting.
Tensor add(const Tensor& lhs, const Tensor& rhs) {
  if (lhs.shape == rhs.shape) {
    Tensor y = lhs;
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += rhs.data[i];
    return y;
  }
  const std::size_t rank = std::max(lhs.shape.size(), rhs.shape.size());
  auto padded = [rank](const std::vector<std::int64_t>& s) {
    std::vector<std::int64_t> p(rank - s.size(), 1);
    p.insert(p.end(), s.begin(), s.end());
    return p;
  };
  const auto ls = padded(lhs.shape), rs = padded(rhs.shape);
  std::vector<std::int64_t> out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (ls[i] != rs[i] && ls[i] != 1 && rs[i] != 1) throw BackboneError("Add: shapes not broadcastable");
    out_shape[i] = std::max(ls[i], rs[i]);
  }
  auto strides_for = [rank](const std::vector<std::int64_t>& s) {
    std::vector<std::int64_t> st(rank, 0);
    std::int64_t acc = 1;
    for (std::size_t i = rank; i-- > 0;) {
      st[i] = s[i] == 1 ? 0 : acc;
      acc *= s[i];
    }
    return st;
  };
  const auto lst = strides_for(ls), rst = strides_for(rs);
  Tensor y(out_shape);
  std::vector<std::int64_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < y.data.size(); ++flat) {
    std::int64_t li = 0, ri = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      li += idx[d] * lst[d];
      ri += idx[d] * rst[d];
    }
    y.data[flat] = lhs.data[li] + rhs.data[ri];
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return y;
}

const std::vector<std::string> kSupportedOps = {"Conv", "Relu", "MaxPool", "AveragePool", "Add",
                                                "BatchNormalization", "Identity", "Constant"};

std::uint32_t crc_of_file(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

struct Backbone::Graph {
  std::string input_name;
  std::unordered_map<std::string, Tensor> initializers;
  std::vector<Node> nodes;

  const Tensor& lookup(const std::unordered_map<std::string, Tensor>& values, const std::string& name) const {
    if (auto it = values.find(name); it != values.end()) return it->second;
    if (auto it = initializers.find(name); it != initializers.end()) return it->second;
    throw BackboneError("graph references undefined tensor: " + name);
  }

  FeatureMaps execute(const Tensor& input) const {
    std::unordered_map<std::string, Tensor> values;
    values.emplace(input_name, input);
    for (const Node& node : nodes) {
      auto in = [&](std::size_t i) -> const Tensor& {
        if (i >= node.inputs.size() || node.inputs[i].empty()) throw BackboneError(node.op + ": missing input");
        return lookup(values, node.inputs[i]);
      };
      Tensor out;
      if (node.op == "Conv") {
        const Tensor* bias = node.inputs.size() > 2 && !node.inputs[2].empty() ? &in(2) : nullptr;
        out = conv(in(0), in(1), bias, node.attrs);
      } else if (node.op == "Relu") {
        out = in(0);
        for (float& v : out.data) v = std::max(v, 0.0f);
      } else if (node.op == "MaxPool") {
        out = pool(in(0), node.attrs, true);
      } else if (node.op == "AveragePool") {
        out = pool(in(0), node.attrs, false);
      } else if (node.op == "Add") {
        out = add(in(0), in(1));
      } else if (node.op == "BatchNormalization") {
        out = batch_norm(in(0), in(1), in(2), in(3), in(4), node.attrs);
      } else if (node.op == "Identity") {
        out = in(0);
      } else if (node.op == "Constant") {
        auto it = node.attrs.tensors.find("value");
        if (it == node.attrs.tensors.end()) throw BackboneError("Constant: only tensor values supported");
        out = it->second;
      }
      values[node.outputs.front()] = std::move(out);
    }
    FeatureMaps taps;
    for (std::size_t i = 0; i < 3; ++i) taps[i] = lookup(values, kTapNames[i]);
    return taps;
  }
};

Backbone::Backbone(Backbone&&) noexcept = default;
Backbone& Backbone::operator=(Backbone&&) noexcept = default;
Backbone::~Backbone() = default;

Backbone Backbone::load(const std::filesystem::path& path, int input_size) {
  if (input_size <= 0) throw BackboneError("backbone input size must be > 0");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BackboneError("cannot open backbone model: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  onnx::ModelProto model;
  if (!model.ParseFromString(bytes)) throw BackboneError("backbone model is not a valid ONNX protobuf: " + path.string());
  const auto& g = model.graph();

  Backbone bb;
  bb.graph_ = std::make_unique<Graph>();
  bb.input_size_ = input_size;
  bb.file_crc_ = crc_of_file(bytes);
  for (const auto& init : g.initializer()) bb.graph_->initializers.emplace(init.name(), tensor_from_proto(init));

  std::vector<const onnx::ValueInfoProto*> inputs;
  for (const auto& vi : g.input()) {
    if (!bb.graph_->initializers.count(vi.name())) inputs.push_back(&vi);
  }
  if (inputs.size() != 1) throw BackboneError("backbone must have exactly one non-initializer input");
  bb.graph_->input_name = inputs.front()->name();
  const auto& in_type = inputs.front()->type().tensor_type();
  if (in_type.has_shape() && in_type.shape().dim_size() == 4 && in_type.shape().dim(1).has_dim_value()) {
    bb.input_channels_ = static_cast<int>(in_type.shape().dim(1).dim_value());
  }
  if (in_type.has_shape() && in_type.shape().dim_size() == 4) {
    for (int axis : {2, 3}) {
      const auto& d = in_type.shape().dim(axis);
      if (d.has_dim_value() && d.dim_value() != input_size) {
        throw BackboneError("backbone input is fixed at " + std::to_string(d.dim_value()) + " pixels, not " +
                            std::to_string(input_size));
      }
    }
  }

  std::vector<std::string> outputs;
  for (const auto& o : g.output()) outputs.push_back(o.name());
  for (const auto& tap : kTapNames) {
    if (std::find(outputs.begin(), outputs.end(), tap) == outputs.end()) {
      throw BackboneError("backbone is missing output '" + tap + "'");
    }
  }
  if (outputs.size() != 3) throw BackboneError("backbone must expose exactly three outputs");

  for (const auto& np : g.node()) {
    if (std::find(kSupportedOps.begin(), kSupportedOps.end(), np.op_type()) == kSupportedOps.end()) {
      throw BackboneError("unsupported operator in backbone: " + np.op_type());
    }
    if (np.output_size() != 1 && np.op_type() != "BatchNormalization") {
      throw BackboneError(np.op_type() + ": expected a single output");
    }
    Node node{np.op_type(), np.name(), {np.input().begin(), np.input().end()}, {np.output().begin(), np.output().end()},
              parse_attributes(np)};
    bb.graph_->nodes.push_back(std::move(node));
  }

  const Tensor probe({1, bb.input_channels_, input_size, input_size});
  const FeatureMaps taps = bb.graph_->execute(probe);
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor& t = taps[i];
    if (t.shape.size() != 4 || t.dim(2) <= 0 || t.dim(2) != t.dim(3) || input_size % t.dim(2) != 0) {
      throw BackboneError("tap '" + kTapNames[i] + "' has a shape incompatible with input size");
    }
    bb.layers_[i] = {static_cast<int>(t.dim(1)), static_cast<int>(input_size / t.dim(2))};
  }
  for (std::size_t i = 1; i < 3; ++i) {
    if (bb.layers_[i].stride % bb.layers_[0].stride != 0) {
      throw BackboneError("deeper tap strides must be multiples of the first tap's stride");
    }
  }
  return bb;
}

int Backbone::total_channels() const {
  return layers_[0].channels + layers_[1].channels + layers_[2].channels;
}

std::string Backbone::descriptor() const {
  std::ostringstream os;
  os << "input=" << input_size_ << "x" << input_channels_;
  for (const auto& l : layers_) os << ";tap=" << l.channels << "/" << l.stride;
  os << ";crc=" << std::hex << file_crc_;
  return os.str();
}

FeatureMaps Backbone::run(const Tensor& batch) const {
  if (batch.shape.size() != 4 || batch.dim(1) != input_channels_ || batch.dim(2) != input_size_ ||
      batch.dim(3) != input_size_) {
    throw ShapeError("backbone input must be N x " + std::to_string(input_channels_) + " x " +
                     std::to_string(input_size_) + " x " + std::to_string(input_size_));
  }
  return graph_->execute(batch);
}

FeatureMaps Backbone::run_patch(const RealGrid& patch) const {
  if (!patch.same_shape(input_size_, input_size_)) throw ShapeError("patch size does not match backbone input size");
  Tensor batch({1, input_channels_, input_size_, input_size_});
  const std::size_t plane = patch.size();
  for (int c = 0; c < input_channels_; ++c) {
    for (std::size_t i = 0; i < plane; ++i) batch.data[c * plane + i] = static_cast<float>(patch[i]);
  }
  return run(batch);
}

}  // namespace unrest
