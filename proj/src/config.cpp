#include "unrest/config.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace unrest {

namespace {

void reject_unknown(const toml::table& table, const std::string& section, const std::set<std::string>& allowed) {
  for (const auto& [key, node] : table) {
    if (!allowed.count(std::string(key.str()))) {
      throw ConfigError("unknown key '" + std::string(key.str()) + "' in [" + section + "]");
    }
  }
}

template <typename T>
void read(const toml::table& table, const std::string& section, const char* key, T& target) {
  const toml::node* node = table.get(key);
  if (node == nullptr) return;
  if constexpr (std::is_same_v<T, std::string>) {
    auto v = node->value<std::string>();
    if (!v) throw ConfigError(section + "." + key + " must be a string");
    target = *v;
  } else if constexpr (std::is_floating_point_v<T>) {
    auto v = node->value<double>();
    if (!v) throw ConfigError(section + "." + key + " must be a number");
    target = static_cast<T>(*v);
  } else {
    auto v = node->value<std::int64_t>();
    if (!v || !node->is_integer()) throw ConfigError(section + "." + key + " must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (*v < 0) throw ConfigError(section + "." + key + " must be non-negative");
    }
    target = static_cast<T>(*v);
  }
}

template <std::size_t N>
void read_array(const toml::table& table, const std::string& section, const char* key, std::array<double, N>& target) {
  const toml::node* node = table.get(key);
  if (node == nullptr) return;
  const toml::array* arr = node->as_array();
  if (arr == nullptr || arr->size() != N) {
    throw ConfigError(section + "." + key + " must be an array of " + std::to_string(N) + " numbers");
  }
  for (std::size_t i = 0; i < N; ++i) {
    auto v = (*arr)[i].value<double>();
    if (!v) throw ConfigError(section + "." + key + " must contain numbers");
    target[i] = *v;
  }
}

const toml::table* section_of(const toml::table& root, const char* name) {
  const toml::node* node = root.get(name);
  if (node == nullptr) return nullptr;
  if (!node->is_table()) throw ConfigError(std::string("[") + name + "] must be a table");
  return node->as_table();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string to_string(FillMode mode) { return mode == FillMode::kLaplace ? "laplace" : "zero"; }
std::string to_string(InputFormat format) { return format == InputFormat::kUnwrapped ? "unwrapped" : "wrapped"; }

void PipelineConfig::validate() const {
  preprocess.validate();
  patch.validate();
  weights.validate();
  synth.validate();
  if (model.keep_channels == 0) throw ConfigError("model.keep_channels must be > 0");
  if (!(model.epsilon > 0.0)) throw ConfigError("model.epsilon must be > 0");
}

PipelineConfig parse_config(const std::string& toml_text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "cannot parse " << source << ": " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(os.str());
  }
  reject_unknown(root, "root", {"preprocess", "patch", "model", "weights", "synth"});

  PipelineConfig cfg;
  if (const auto* t = section_of(root, "preprocess")) {
    reject_unknown(*t, "preprocess",
                   {"dilation_radius", "closing_radius", "clamp_limit", "fill_solver_tolerance", "fill_mode",
                    "input_format"});
    auto& p = cfg.preprocess;
    read(*t, "preprocess", "dilation_radius", p.dilation_radius);
    read(*t, "preprocess", "closing_radius", p.closing_radius);
    read(*t, "preprocess", "clamp_limit", p.clamp_limit);
    read(*t, "preprocess", "fill_solver_tolerance", p.fill_solver_tolerance);
    std::string fill = to_string(p.fill_mode), format = to_string(p.input_format);
    read(*t, "preprocess", "fill_mode", fill);
    read(*t, "preprocess", "input_format", format);
    if (fill == "laplace") p.fill_mode = FillMode::kLaplace;
    else if (fill == "zero") p.fill_mode = FillMode::kZero;
    else throw ConfigError("preprocess.fill_mode must be \"laplace\" or \"zero\"");
    if (format == "unwrapped") p.input_format = InputFormat::kUnwrapped;
    else if (format == "wrapped") p.input_format = InputFormat::kWrapped;
    else throw ConfigError("preprocess.input_format must be \"unwrapped\" or \"wrapped\"");
  }
  if (const auto* t = section_of(root, "patch")) {
    reject_unknown(*t, "patch", {"size", "stride"});
    read(*t, "patch", "size", cfg.patch.patch_size);
    read(*t, "patch", "stride", cfg.patch.stride);
  }
  if (const auto* t = section_of(root, "model")) {
    reject_unknown(*t, "model", {"keep_channels", "selection_seed", "epsilon", "metric"});
    read(*t, "model", "keep_channels", cfg.model.keep_channels);
    read(*t, "model", "selection_seed", cfg.model.selection_seed);
    read(*t, "model", "epsilon", cfg.model.epsilon);
    std::string metric = to_string(cfg.model.metric);
    read(*t, "model", "metric", metric);
    cfg.model.metric = metric_from_string(metric);
  }
  if (const auto* t = section_of(root, "weights")) {
    reject_unknown(*t, "weights", {"layers"});
    read_array(*t, "weights", "layers", cfg.weights.per_layer);
  }
  if (const auto* t = section_of(root, "synth")) {
    reject_unknown(*t, "synth",
                   {"width", "height", "pixel_size", "wavelength", "atmosphere_amplitude", "spectral_exponent",
                    "coverage_fraction", "blob_scale", "los", "peak_min", "peak_max", "depth_min", "depth_max",
                    "source_margin"});
    auto& s = cfg.synth;
    read(*t, "synth", "width", s.base.width);
    read(*t, "synth", "height", s.base.height);
    read(*t, "synth", "pixel_size", s.base.pixel_size);
    read(*t, "synth", "wavelength", s.base.wavelength);
    read(*t, "synth", "atmosphere_amplitude", s.base.atmosphere.amplitude);
    read(*t, "synth", "spectral_exponent", s.base.atmosphere.spectral_exponent);
    read(*t, "synth", "coverage_fraction", s.base.incoherence.coverage_fraction);
    read(*t, "synth", "blob_scale", s.base.incoherence.blob_scale);
    std::array<double, 3> los{0.0, 0.0, 1.0};
    read_array(*t, "synth", "los", los);
    PointSource template_source;
    template_source.los = los;
    s.base.deformation = template_source;
    read(*t, "synth", "peak_min", s.peak_min);
    read(*t, "synth", "peak_max", s.peak_max);
    read(*t, "synth", "depth_min", s.depth_min);
    read(*t, "synth", "depth_max", s.depth_max);
    read(*t, "synth", "source_margin", s.source_margin);
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string to_toml(const PipelineConfig& cfg) {
  const auto& p = cfg.preprocess;
  const auto& s = cfg.synth;
  const auto los = s.base.deformation ? s.base.deformation->los : std::array<double, 3>{0.0, 0.0, 1.0};
  std::ostringstream os;
  os << "[preprocess]\n"
     << "dilation_radius = " << p.dilation_radius << "\n"
     << "closing_radius = " << p.closing_radius << "\n"
     << "clamp_limit = " << fmt(p.clamp_limit) << "\n"
     << "fill_solver_tolerance = " << fmt(p.fill_solver_tolerance) << "\n"
     << "fill_mode = \"" << to_string(p.fill_mode) << "\"\n"
     << "input_format = \"" << to_string(p.input_format) << "\"\n\n"
     << "[patch]\n"
     << "size = " << cfg.patch.patch_size << "\n"
     << "stride = " << cfg.patch.stride << "\n\n"
     << "[model]\n"
     << "keep_channels = " << cfg.model.keep_channels << "\n"
     << "selection_seed = " << cfg.model.selection_seed << "\n"
     << "epsilon = " << fmt(cfg.model.epsilon) << "\n"
     << "metric = \"" << to_string(cfg.model.metric) << "\"\n\n"
     << "[weights]\n"
     << "layers = [" << fmt(cfg.weights.per_layer[0]) << ", " << fmt(cfg.weights.per_layer[1]) << ", "
     << fmt(cfg.weights.per_layer[2]) << "]\n\n"
     << "[synth]\n"
     << "width = " << s.base.width << "\n"
     << "height = " << s.base.height << "\n"
     << "pixel_size = " << fmt(s.base.pixel_size) << "\n"
     << "wavelength = " << fmt(s.base.wavelength) << "\n"
     << "atmosphere_amplitude = " << fmt(s.base.atmosphere.amplitude) << "\n"
     << "spectral_exponent = " << fmt(s.base.atmosphere.spectral_exponent) << "\n"
     << "coverage_fraction = " << fmt(s.base.incoherence.coverage_fraction) << "\n"
     << "blob_scale = " << fmt(s.base.incoherence.blob_scale) << "\n"
     << "los = [" << fmt(los[0]) << ", " << fmt(los[1]) << ", " << fmt(los[2]) << "]\n"
     << "peak_min = " << fmt(s.peak_min) << "\n"
     << "peak_max = " << fmt(s.peak_max) << "\n"
     << "depth_min = " << fmt(s.depth_min) << "\n"
     << "depth_max = " << fmt(s.depth_max) << "\n"
     << "source_margin = " << fmt(s.source_margin) << "\n";
  return os.str();
}

std::string config_fingerprint(const PipelineConfig& cfg, const std::string& backbone_descriptor) {
  const auto& p = cfg.preprocess;
  std::ostringstream os;
  os << "preprocess:" << p.dilation_radius << "," << p.closing_radius << "," << fmt(p.clamp_limit) << ","
     << fmt(p.fill_solver_tolerance) << "," << to_string(p.fill_mode) << "," << to_string(p.input_format)
     << "|patch:" << cfg.patch.patch_size << "," << cfg.patch.stride << "|backbone:" << backbone_descriptor;
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(os.str())));
  return buf;
}

}  // namespace unrest
