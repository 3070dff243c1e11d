#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <numeric>

#include "unrest/rng.hpp"
#include "unrest/synth.hpp"

using namespace unrest;

namespace {

SceneSpec source_spec(std::array<double, 3> los) {
  SceneSpec spec;
  spec.width = 61;
  spec.height = 61;
  spec.pixel_size = 100.0;
  PointSource src;
  src.source_x = 30.0;
  src.source_y = 30.0;
  src.depth = 1000.0;
  src.strength = 2.0e6;
  src.los = los;
  spec.deformation = src;
  return spec;
}

// Closed-form Mogi LOS phase for a pixel offset of (east, north) metres.
double mogi_phase(double k, double d, double east, double north, const std::array<double, 3>& los, double lambda) {
  const double r = std::hypot(east, north);
  const double denom = std::pow(r * r + d * d, 1.5);
  const double uz = k * d / denom;
  const double ur = k * r / denom;
  const double ue = r > 0 ? ur * east / r : 0.0;
  const double un = r > 0 ? ur * north / r : 0.0;
  return 4.0 * std::numbers::pi / lambda * (ue * los[0] + un * los[1] + uz * los[2]);
}

double mean_of(const RealGrid& g) { return std::accumulate(g.data().begin(), g.data().end(), 0.0) / g.size(); }

double std_of(const RealGrid& g) {
  const double m = mean_of(g);
  double ss = 0.0;
  for (double v : g.data()) ss += (v - m) * (v - m);
  return std::sqrt(ss / g.size());
}

std::uint32_t crc_of_scene(const Interferogram& ifg) {
  std::vector<float> f(ifg.values().size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(ifg.values()[i]);
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(f.data()), static_cast<uInt>(f.size() * sizeof(float))));
}

}  // namespace

TEST_CASE("rng draws are reproducible and in range") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto k = a.below(7);
    CHECK(k == b.below(7));
    CHECK(k < 7);
    CHECK(a.normal() == b.normal());
  }
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
}

TEST_CASE("rng normal draws have unit variance") {
  Rng rng(99);
  double sum = 0.0, ss = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    ss += v * v;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(ss / n - 1.0) < 0.01);
}

TEST_CASE("point source matches the closed form at r = 0, d, 2d") {
  for (const auto& los : {std::array<double, 3>{0.0, 0.0, 1.0}, std::array<double, 3>{0.6, 0.0, 0.8},
                          std::array<double, 3>{0.36, -0.48, 0.8}}) {
    const SceneSpec spec = source_spec(los);
    const RealGrid phase = point_source_los(spec);
    const auto& s = *spec.deformation;
    // 10 pixels of 100 m = d, 20 pixels = 2d; check east, west, north and south.
    const int offsets[][2] = {{0, 0}, {10, 0}, {-10, 0}, {0, 10}, {0, -20}, {20, 0}};
    for (const auto& o : offsets) {
      const double east = o[0] * 100.0;
      const double north = -o[1] * 100.0;  // rows grow southwards
      const double expected = mogi_phase(s.strength, s.depth, east, north, los, spec.wavelength);
      CHECK(phase(30 + o[0], 30 + o[1]) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("point source basics") {
  SceneSpec spec = source_spec({0.0, 0.0, 1.0});
  const RealGrid phase = point_source_los(spec);
  const auto& s = *spec.deformation;
  CHECK(phase(30, 30) == doctest::Approx(4 * std::numbers::pi / spec.wavelength * s.strength / (s.depth * s.depth)));
  for (int r = 1; r < 30; ++r) CHECK(phase(30 + r, 30) < phase(30 + r - 1, 30));

  spec.deformation->strength = 0.0;
  const RealGrid zero = point_source_los(spec);
  for (double v : zero.data()) CHECK(v == 0.0);

  spec.deformation.reset();
  CHECK_THROWS_AS(point_source_los(spec), ConfigError);
}

TEST_CASE("strength_for_peak puts the requested phase at the epicentre") {
  SceneSpec spec = source_spec({0.6, 0.0, 0.8});
  spec.deformation->strength = strength_for_peak(12.0, 1000.0, spec.deformation->los, spec.wavelength);
  CHECK(point_source_los(spec)(30, 30) == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("atmosphere has the requested std and zero mean") {
  SceneSpec spec;
  spec.width = 500;
  spec.height = 500;
  spec.atmosphere.amplitude = 3.0;
  Rng rng(5);
  const RealGrid a = synth_atmosphere(spec, rng);
  CHECK(std::abs(std_of(a) - 3.0) < 0.03);
  CHECK(std::abs(mean_of(a)) < 1e-9);

  Rng r1(77), r2(77);
  CHECK(synth_atmosphere(spec, r1) == synth_atmosphere(spec, r2));

  spec.atmosphere.amplitude = 0.0;
  Rng r3(1);
  for (double v : synth_atmosphere(spec, r3).data()) CHECK(v == 0.0);
}

TEST_CASE("atmosphere power falls with frequency") {
  // Mean power in a low band should greatly exceed that in a high band for exponent 8/3.
  SceneSpec spec;
  spec.width = 128;
  spec.height = 128;
  spec.atmosphere.amplitude = 1.0;
  Rng rng(11);
  const RealGrid a = synth_atmosphere(spec, rng);
  double low = 0.0, high = 0.0;
  for (std::size_t y = 0; y < 128; ++y) {
    for (std::size_t x = 1; x < 128; ++x) {
      const double d = a(x, y) - a(x - 1, y);
      high += d * d;
    }
  }
  for (double v : a.data()) low += v * v;
  // Neighbour differences of a red field are much smaller than the field itself.
  CHECK(high / (128.0 * 127.0) < 0.2 * low / (128.0 * 128.0));
}

TEST_CASE("coherence mask coverage follows the requested fraction") {
  SceneSpec spec;
  spec.width = 500;
  spec.height = 500;
  spec.incoherence.coverage_fraction = 0.3;
  Rng rng(9);
  const MaskGrid m = synth_coherence_mask(spec, rng);
  std::size_t count = 0;
  for (auto v : m.data()) count += v;
  const double frac = static_cast<double>(count) / m.size();
  CHECK(frac >= 0.28);
  CHECK(frac <= 0.32);

  Rng a(4), b(4);
  CHECK(synth_coherence_mask(spec, a) == synth_coherence_mask(spec, b));

  spec.incoherence.coverage_fraction = 0.0;
  Rng c(4);
  for (auto v : synth_coherence_mask(spec, c).data()) CHECK(v == 0);
}

TEST_CASE("scene composition") {
  SceneSpec empty;
  const Scene flat = generate_scene(empty);
  CHECK(flat.label == SceneLabel::kNormal);
  for (double v : flat.interferogram.values().data()) CHECK(v == 0.0);

  SceneSpec def = source_spec({0.0, 0.0, 1.0});
  const Scene only = generate_scene(def);
  CHECK(only.label == SceneLabel::kDeformation);
  CHECK(only.interferogram.values() == point_source_los(def));

  SceneSpec full = def;
  full.atmosphere.amplitude = 2.0;
  full.incoherence.coverage_fraction = 0.2;
  full.rng_seed = 31;
  const Scene scene = generate_scene(full);
  Rng atm(mix_seed(31, 1));
  const RealGrid a = synth_atmosphere(full, atm);
  const RealGrid p = point_source_los(full);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!scene.interferogram.missing()[i]) CHECK(scene.interferogram.values()[i] == a[i] + p[i]);
  }
  CHECK(scene.interferogram.metadata().at("synth.seed") == "31");
}

TEST_CASE("full scene hash is pinned") {
  SceneSpec spec = source_spec({0.6, 0.0, 0.8});
  spec.width = 64;
  spec.height = 48;
  spec.atmosphere.amplitude = 3.0;
  spec.incoherence.coverage_fraction = 0.1;
  spec.rng_seed = 20240917;
  const Scene a = generate_scene(spec);
  const Scene b = generate_scene(spec);
  CHECK(crc_of_scene(a.interferogram) == crc_of_scene(b.interferogram));
  CHECK(crc_of_scene(a.interferogram) == 4206434918u);
}

TEST_CASE("spec validation") {
  SceneSpec spec = source_spec({0.0, 0.0, 0.9});
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = source_spec({0.0, 0.0, 1.0});
  spec.deformation->depth = 0.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = SceneSpec{};
  spec.incoherence.coverage_fraction = 1.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("sampler keeps deformation peaks in range") {
  SceneSampler sampler;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SceneSpec spec = sampler.deformation(seed);
    REQUIRE(spec.deformation);
    const auto& d = *spec.deformation;
    const double peak = 4 * std::numbers::pi / spec.wavelength * d.strength / (d.depth * d.depth) * d.los[2];
    CHECK(peak >= sampler.peak_min - 1e-9);
    CHECK(peak <= sampler.peak_max + 1e-9);
    CHECK(d.depth >= sampler.depth_min);
    CHECK(d.depth <= sampler.depth_max);
    CHECK(d.source_x >= 16.0);
    CHECK(d.source_x <= 48.0);
    CHECK_FALSE(sampler.normal(seed).deformation);
    CHECK(sampler.normal(seed).rng_seed == seed);
  }
}
