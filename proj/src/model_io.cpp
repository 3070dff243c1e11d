#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "unrest/gaussian_model.hpp"

namespace unrest {

namespace {

// Layout: "PDM1" | u32 header length | UTF-8 JSON header | f64 means | f64 precisions | f64 log-dets | u32 CRC-32
// All integers and floats little-endian. The CRC covers every byte before it.
constexpr char kMagic[4] = {'P', 'D', 'M', '1'};
constexpr int kFormatVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(in[pos + i])} << (8 * i);
  return v;
}

double get_f64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(in[pos + i])} << (8 * i);
  return std::bit_cast<double>(v);
}

std::uint32_t crc_of(const std::string& bytes, std::size_t len) {
  return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(len)));
}

}  // namespace

std::string serialize_model(const FittedModel& model) {
  const GaussianGrid& gg = model.gaussians;
  nlohmann::json header;
  header["version"] = kFormatVersion;
  header["width"] = gg.width;
  header["height"] = gg.height;
  header["dim"] = gg.dim;
  header["metric"] = to_string(model.metric);
  header["weights"] = model.weights.per_layer;
  header["threshold"] = model.threshold ? nlohmann::json(*model.threshold) : nlohmann::json(nullptr);
  header["fingerprint"] = model.fingerprint;
  header["epsilon"] = model.epsilon;
  header["cell"] = model.cell;
  header["patch_size"] = model.patch_size;
  header["channels"] = {{"indices", model.selection.indices},
                        {"layers", model.selection.layer_of},
                        {"total", model.selection.total},
                        {"seed", model.selection.seed}};
  const std::string header_text = header.dump();

  std::string out(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  const std::size_t k = gg.dim;
  out.reserve(out.size() + gg.cells.size() * (k + k * k + 1) * 8 + 4);
  for (const auto& g : gg.cells) {
    for (std::size_t i = 0; i < k; ++i) put_f64(out, g.mean[static_cast<Eigen::Index>(i)]);
  }
  for (const auto& g : gg.cells) {
    for (Eigen::Index r = 0; r < g.precision.rows(); ++r) {
      for (Eigen::Index c = 0; c < g.precision.cols(); ++c) put_f64(out, g.precision(r, c));
    }
  }
  for (const auto& g : gg.cells) put_f64(out, g.log_det);
  put_u32(out, crc_of(out, out.size()));
  return out;
}

FittedModel deserialize_model(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a PDM1 model container");
  const std::size_t payload = bytes.size() - 4;
  if (get_u32(bytes, payload) != crc_of(bytes, payload)) throw ChecksumError("model container checksum mismatch");
  const std::uint32_t header_len = get_u32(bytes, 4);
  if (8 + std::size_t{header_len} > payload) throw FormatError("model header length exceeds file size");

  const auto header = nlohmann::json::parse(bytes.substr(8, header_len), nullptr, false);
  if (!header.is_object()) throw FormatError("model header is not a JSON object");
  if (header.value("version", -1) != kFormatVersion) {
    throw VersionError("unsupported model container version " + header.value("version", nlohmann::json()).dump());
  }

  FittedModel model;
  try {
    GaussianGrid& gg = model.gaussians;
    gg.width = header.at("width").get<std::size_t>();
    gg.height = header.at("height").get<std::size_t>();
    gg.dim = header.at("dim").get<std::size_t>();
    model.metric = metric_from_string(header.at("metric").get<std::string>());
    model.weights.per_layer = header.at("weights").get<std::array<double, 3>>();
    if (!header.at("threshold").is_null()) model.threshold = header.at("threshold").get<double>();
    model.fingerprint = header.at("fingerprint").get<std::string>();
    model.epsilon = header.at("epsilon").get<double>();
    model.cell = header.at("cell").get<std::size_t>();
    model.patch_size = header.at("patch_size").get<std::size_t>();
    const auto& ch = header.at("channels");
    model.selection.indices = ch.at("indices").get<std::vector<std::size_t>>();
    model.selection.layer_of = ch.at("layers").get<std::vector<int>>();
    model.selection.total = ch.at("total").get<std::size_t>();
    model.selection.seed = ch.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model header: ") + e.what());
  }

  GaussianGrid& gg = model.gaussians;
  const std::size_t k = gg.dim;
  const std::size_t cells = gg.width * gg.height;
  if (model.selection.indices.size() != k || model.selection.layer_of.size() != k) {
    throw FormatError("channel selection size differs from model dimension");
  }
  const std::size_t expected = 8 + header_len + cells * (k + k * k + 1) * 8;
  if (expected != payload) throw FormatError("model array section has the wrong size");

  std::size_t pos = 8 + header_len;
  gg.cells.resize(cells);
  const auto ki = static_cast<Eigen::Index>(k);
  for (auto& g : gg.cells) {
    g.mean.resize(ki);
    for (Eigen::Index i = 0; i < ki; ++i, pos += 8) g.mean[i] = get_f64(bytes, pos);
  }
  for (auto& g : gg.cells) {
    g.precision.resize(ki, ki);
    for (Eigen::Index r = 0; r < ki; ++r) {
      for (Eigen::Index c = 0; c < ki; ++c, pos += 8) g.precision(r, c) = get_f64(bytes, pos);
    }
  }
  for (auto& g : gg.cells) {
    g.log_det = get_f64(bytes, pos);
    pos += 8;
  }
  return model;
}

void save_model(const FittedModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_model(model);
  // Write-then-rename so readers never observe a partial container.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write model: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing model: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

FittedModel load_model(const std::filesystem::path& path, const std::optional<std::string>& expected_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  FittedModel model = deserialize_model(bytes);
  if (expected_fingerprint && *expected_fingerprint != model.fingerprint) {
    throw FingerprintError("model fingerprint '" + model.fingerprint + "' does not match configuration '" +
                           *expected_fingerprint + "'");
  }
  return model;
}

}  // namespace unrest
