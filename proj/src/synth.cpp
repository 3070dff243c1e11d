#include "unrest/synth.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>

namespace unrest {

namespace {

constexpr std::uint64_t kAtmosphereStream = 1;
constexpr std::uint64_t kMaskStream = 2;

// FFTW planning is not thread-safe.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// White Gaussian noise shaped in the Fourier domain by `filter(kx, ky)`,
/// frequencies in cycles per pixel. The DC term is always removed.
RealGrid spectral_field(std::size_t width, std::size_t height, Rng& rng,
                        const std::function<double(double, double)>& filter) {
  const int w = static_cast<int>(width);
  const int h = static_cast<int>(height);
  const int wc = w / 2 + 1;
  std::vector<double> real(width * height);
  for (double& v : real) v = rng.normal();
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(h) * wc);
  auto* spec_ptr = reinterpret_cast<fftw_complex*>(spectrum.data());

  fftw_plan forward, backward;
  {
    std::lock_guard lock(fftw_planner_mutex());
    forward = fftw_plan_dft_r2c_2d(h, w, real.data(), spec_ptr, FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r_2d(h, w, spec_ptr, real.data(), FFTW_ESTIMATE);
  }
  fftw_execute(forward);
  for (int iy = 0; iy < h; ++iy) {
    const double ky = static_cast<double>(iy <= h / 2 ? iy : iy - h) / h;
    for (int ix = 0; ix < wc; ++ix) {
      const double kx = static_cast<double>(ix) / w;
      auto& c = spectrum[static_cast<std::size_t>(iy) * wc + ix];
      c = (ix == 0 && iy == 0) ? std::complex<double>{} : c * filter(kx, ky);
    }
  }
  fftw_execute(backward);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }
  return RealGrid(width, height, std::move(real));
}

template <typename T>
std::string fmt(const T& v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void SceneSpec::validate() const {
  if (width == 0 || height == 0) throw ConfigError("scene dimensions must be > 0");
  if (!(pixel_size > 0.0)) throw ConfigError("pixel_size must be > 0");
  if (!(wavelength > 0.0)) throw ConfigError("wavelength must be > 0");
  if (deformation) {
    if (!(deformation->depth > 0.0)) throw ConfigError("source depth must be > 0");
    const auto& l = deformation->los;
    const double norm = std::sqrt(l[0] * l[0] + l[1] * l[1] + l[2] * l[2]);
    if (std::abs(norm - 1.0) > 1e-9) throw ConfigError("LOS vector must have unit norm");
  }
  if (!(atmosphere.amplitude >= 0.0)) throw ConfigError("atmosphere amplitude must be >= 0");
  if (!(incoherence.coverage_fraction >= 0.0 && incoherence.coverage_fraction < 1.0)) {
    throw ConfigError("coverage_fraction must be in [0, 1)");
  }
  if (!(incoherence.blob_scale > 0.0)) throw ConfigError("blob_scale must be > 0");
}

RealGrid point_source_los(const SceneSpec& spec) {
  if (!spec.deformation) throw ConfigError("point_source_los: scene has no deformation source");
  spec.validate();
  const PointSource& src = *spec.deformation;
  const double to_radians = 4.0 * std::numbers::pi / spec.wavelength;
  const double d = src.depth;
  RealGrid out(spec.width, spec.height);
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      const double east = (static_cast<double>(x) - src.source_x) * spec.pixel_size;
      const double north = -(static_cast<double>(y) - src.source_y) * spec.pixel_size;
      const double r2 = east * east + north * north;
      const double denom = std::pow(r2 + d * d, 1.5);
      const double uz = src.strength * d / denom;
      // u_r * (east/r) = K * east / denom, well-defined at r = 0.
      const double ue = src.strength * east / denom;
      const double un = src.strength * north / denom;
      out(x, y) = to_radians * (ue * src.los[0] + un * src.los[1] + uz * src.los[2]);
    }
  }
  return out;
}

RealGrid synth_atmosphere(const SceneSpec& spec, Rng& rng) {
  if (!(spec.atmosphere.amplitude >= 0.0)) throw ConfigError("atmosphere amplitude must be >= 0");
  if (spec.atmosphere.amplitude == 0.0) return RealGrid(spec.width, spec.height, 0.0);
  const double half_exponent = spec.atmosphere.spectral_exponent / 2.0;
  RealGrid field = spectral_field(spec.width, spec.height, rng, [half_exponent](double kx, double ky) {
    return std::pow(kx * kx + ky * ky, -half_exponent / 2.0);
  });
  const double n = static_cast<double>(field.size());
  const double mean = std::accumulate(field.data().begin(), field.data().end(), 0.0) / n;
  double ss = 0.0;
  for (double& v : field.data()) {
    v -= mean;
    ss += v * v;
  }
  const double std_dev = std::sqrt(ss / n);
  if (std_dev == 0.0) return RealGrid(spec.width, spec.height, 0.0);
  const double scale = spec.atmosphere.amplitude / std_dev;
  for (double& v : field.data()) v *= scale;
  return field;
}

MaskGrid synth_coherence_mask(const SceneSpec& spec, Rng& rng) {
  const double coverage = spec.incoherence.coverage_fraction;
  if (!(coverage >= 0.0 && coverage < 1.0)) throw ConfigError("coverage_fraction must be in [0, 1)");
  MaskGrid mask(spec.width, spec.height, 0);
  if (coverage == 0.0) return mask;
  const double sigma = spec.incoherence.blob_scale;
  const double c = 2.0 * std::numbers::pi * std::numbers::pi * sigma * sigma;
  RealGrid field = spectral_field(spec.width, spec.height, rng,
                                  [c](double kx, double ky) { return std::exp(-c * (kx * kx + ky * ky)); });
  const auto count = static_cast<std::size_t>(std::llround(coverage * static_cast<double>(field.size())));
  std::vector<std::size_t> order(field.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return field[a] > field[b]; });
  for (std::size_t i = 0; i < count; ++i) mask[order[i]] = 1;
  return mask;
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng atmosphere_rng(mix_seed(spec.rng_seed, kAtmosphereStream));
  Rng mask_rng(mix_seed(spec.rng_seed, kMaskStream));
  RealGrid values = synth_atmosphere(spec, atmosphere_rng);
  if (spec.deformation) {
    const RealGrid los = point_source_los(spec);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += los[i];
  }
  const MaskGrid mask = synth_coherence_mask(spec, mask_rng);
  const bool deforming = spec.deformation && spec.deformation->strength > 0.0;
  return Scene{Interferogram(std::move(values), mask, scene_metadata(spec)),
               deforming ? SceneLabel::kDeformation : SceneLabel::kNormal};
}

Metadata scene_metadata(const SceneSpec& spec) {
  Metadata m;
  m["synth.width"] = fmt(spec.width);
  m["synth.height"] = fmt(spec.height);
  m["synth.pixel_size"] = fmt(spec.pixel_size);
  m["synth.wavelength"] = fmt(spec.wavelength);
  m["synth.seed"] = fmt(spec.rng_seed);
  m["synth.atmosphere.amplitude"] = fmt(spec.atmosphere.amplitude);
  m["synth.atmosphere.spectral_exponent"] = fmt(spec.atmosphere.spectral_exponent);
  m["synth.incoherence.coverage_fraction"] = fmt(spec.incoherence.coverage_fraction);
  m["synth.incoherence.blob_scale"] = fmt(spec.incoherence.blob_scale);
  if (spec.deformation) {
    const auto& d = *spec.deformation;
    m["synth.deformation.source_x"] = fmt(d.source_x);
    m["synth.deformation.source_y"] = fmt(d.source_y);
    m["synth.deformation.depth"] = fmt(d.depth);
    m["synth.deformation.strength"] = fmt(d.strength);
    m["synth.deformation.los"] = fmt(d.los[0]) + "," + fmt(d.los[1]) + "," + fmt(d.los[2]);
  }
  return m;
}

double strength_for_peak(double peak, double depth, const std::array<double, 3>& los, double wavelength) {
  if (std::abs(los[2]) < 1e-12) throw ConfigError("LOS vector has no vertical component");
  // Epicentre: u_r = 0, u_z = K / d^2.
  return peak * wavelength * depth * depth / (4.0 * std::numbers::pi * los[2]);
}

void SceneSampler::validate() const {
  SceneSpec probe = base;
  if (probe.deformation) {
    // Only the LOS vector of the template source matters; placement is drawn per scene.
    probe.deformation->depth = 1.0;
  }
  probe.validate();
  if (!(peak_min > 0.0 && peak_max >= peak_min)) throw ConfigError("need 0 < peak_min <= peak_max");
  if (!(depth_min > 0.0 && depth_max >= depth_min)) throw ConfigError("need 0 < depth_min <= depth_max");
  if (!(source_margin >= 0.0 && source_margin < 0.5)) throw ConfigError("source_margin must be in [0, 0.5)");
}

SceneSpec SceneSampler::normal(std::uint64_t seed) const {
  SceneSpec spec = base;
  spec.deformation.reset();
  spec.rng_seed = seed;
  return spec;
}

SceneSpec SceneSampler::deformation(std::uint64_t seed) const {
  SceneSpec spec = normal(seed);
  Rng rng(mix_seed(seed, 3));
  const double w = static_cast<double>(base.width);
  const double h = static_cast<double>(base.height);
  PointSource src;
  src.los = base.deformation ? base.deformation->los : std::array<double, 3>{0.0, 0.0, 1.0};
  src.source_x = rng.uniform(source_margin * w, (1.0 - source_margin) * w);
  src.source_y = rng.uniform(source_margin * h, (1.0 - source_margin) * h);
  src.depth = rng.uniform(depth_min, depth_max);
  const double peak = rng.uniform(peak_min, peak_max);
  src.strength = strength_for_peak(peak, src.depth, src.los, base.wavelength);
  spec.deformation = src;
  return spec;
}

std::string to_string(SceneLabel label) { return label == SceneLabel::kNormal ? "normal" : "anomaly"; }

}  // namespace unrest
