#include <doctest.h>

#include <functional>
#include <numbers>

#include "fcdn/dsp.hpp"
#include "fcdn/rng.hpp"
#include "oracles.hpp"

using namespace fcdn;

namespace {

constexpr double kPi = std::numbers::pi;

EpochSet make_set(double fs, size_t n_trials, size_t k, size_t t,
                  const std::function<double(size_t, size_t, size_t)>& gen) {
  EpochSet s = EpochSet::empty(fs, n_trials, k, t);
  s.class_names = {"one", "two"};
  for (size_t ch = 0; ch < k; ++ch) s.montage.channel_names.push_back("c" + std::to_string(ch));
  for (size_t n = 0; n < n_trials; ++n) {
    for (size_t ch = 0; ch < k; ++ch) {
      for (size_t i = 0; i < t; ++i) s.at(n, ch, i) = static_cast<float>(gen(n, ch, i));
    }
  }
  return s;
}

std::vector<double> as_double(std::span<const float> v) {
  return {v.begin(), v.end()};
}

double sine_amplitude(std::span<const float> x, double f, double fs) {
  return 2.0 * oracle::dft_magnitude(as_double(x), f, fs) / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("downsample 1000 Hz by 4 gives 250 Hz and floor(T/4) samples") {
  auto s = make_set(1000.0, 1, 2, 1000, [](size_t, size_t, size_t t) {
    return std::sin(2.0 * kPi * 10.0 * static_cast<double>(t) / 1000.0);
  });
  const auto d = downsample(s, 4);
  CHECK(d.fs_hz == doctest::Approx(250.0));
  CHECK(d.n_samples == 250);

  SUBCASE("10 Hz amplitude preserved within 1%") {
    const double in_amp = sine_amplitude(s.trace(0, 0), 10.0, 1000.0);
    const double out_amp = sine_amplitude(d.trace(0, 0), 10.0, 250.0);
    CHECK(out_amp == doctest::Approx(in_amp).epsilon(0.01));
  }
}

TEST_CASE("downsample factor 1 is the identity") {
  auto s = make_set(250.0, 2, 2, 100, [](size_t n, size_t k, size_t t) {
    return std::sin(0.1 * static_cast<double>(n + k + t));
  });
  const auto d = downsample(s, 1);
  CHECK(d.samples == s.samples);
}

TEST_CASE("downsample rejects bad factors") {
  auto s = make_set(250.0, 1, 2, 50, [](size_t, size_t, size_t) { return 0.0; });
  CHECK_THROWS_AS(downsample(s, 0), std::invalid_argument);
  CHECK_THROWS_AS(downsample(s, 51), std::invalid_argument);
}

TEST_CASE("anti-alias filter keeps aliases 20 dB under the passband") {
  // 200 Hz would fold onto 50 Hz after decimating 1000 -> 250 Hz.
  auto s = make_set(1000.0, 1, 2, 2000, [](size_t, size_t, size_t t) {
    const double ts = static_cast<double>(t) / 1000.0;
    return std::sin(2.0 * kPi * 30.0 * ts) + std::sin(2.0 * kPi * 200.0 * ts);
  });
  const auto d = downsample(s, 4);
  const double pass = oracle::dft_magnitude(as_double(d.trace(0, 0)), 30.0, 250.0);
  const double alias = oracle::dft_magnitude(as_double(d.trace(0, 0)), 50.0, 250.0);
  CHECK(alias < 0.1 * pass);
}

TEST_CASE("fir_bandpass order 30 gives 31 symmetric taps") {
  const auto f = fir_bandpass(250.0, {"alpha", 8.0, 13.0}, 30);
  REQUIRE(f.taps.size() == 31);
  for (size_t i = 0; i < f.taps.size(); ++i) {
    CHECK(std::abs(f.taps[i] - f.taps[30 - i]) <= 1e-12);
  }
}

TEST_CASE("alpha filter favors band center over DC and 60 Hz") {
  const auto f = fir_bandpass(250.0, {"alpha", 8.0, 13.0});
  const double center = oracle::fir_response(f.taps, 10.5, 250.0);
  CHECK(center > oracle::fir_response(f.taps, 0.0, 250.0));
  CHECK(center > oracle::fir_response(f.taps, 60.0, 250.0));
}

TEST_CASE("band edges must be ordered and inside (0, fs/2)") {
  CHECK_THROWS_AS(fir_bandpass(250.0, {"bad", 13.0, 8.0}), std::invalid_argument);
  CHECK_THROWS_AS(fir_bandpass(250.0, {"bad", 8.0, 130.0}), std::invalid_argument);
  CHECK_THROWS_AS(fir_bandpass(250.0, {"bad", 0.0, 8.0}), std::invalid_argument);
}

TEST_CASE("zero-phase filtering leaves a band-center sine at lag 0") {
  auto s = make_set(250.0, 1, 2, 500, [](size_t, size_t, size_t t) {
    return std::sin(2.0 * kPi * 10.5 * static_cast<double>(t) / 250.0);
  });
  const auto f = fir_bandpass(250.0, {"alpha", 8.0, 13.0});
  const auto y = filt_zero_phase(s, f);
  const long lag = oracle::xcorr_peak_lag(as_double(s.trace(0, 0)), as_double(y.trace(0, 0)), 20);
  CHECK(lag == 0);
}

TEST_CASE("all-zero input filters to all-zero output") {
  auto s = make_set(250.0, 1, 2, 100, [](size_t, size_t, size_t) { return 0.0; });
  const auto y = filt_zero_phase(s, fir_bandpass(250.0, {"alpha", 8.0, 13.0}));
  for (float v : y.samples) CHECK(v == 0.0f);
}

TEST_CASE("DC is crushed by the forward-backward alpha filter") {
  auto s = make_set(250.0, 1, 2, 500, [](size_t, size_t, size_t) { return 1.0; });
  const auto y = filt_zero_phase(s, fir_bandpass(250.0, {"alpha", 8.0, 13.0}));
  double acc = 0.0;
  for (float v : y.trace(0, 0)) acc += static_cast<double>(v) * v;
  const double rms = std::sqrt(acc / 500.0);
  CHECK(rms < 0.01);  // input RMS is 1
}

TEST_CASE("filtering is linear to 1e-6 relative") {
  Rng rng(11);
  auto x = make_set(250.0, 1, 1, 300, [&](size_t, size_t, size_t) { return rng.normal(); });
  auto y = make_set(250.0, 1, 1, 300, [&](size_t, size_t, size_t) { return rng.normal(); });
  auto combo = make_set(250.0, 1, 1, 300, [&](size_t n, size_t k, size_t t) {
    return 0.7 * x.at(n, k, t) + 1.3 * y.at(n, k, t);
  });
  const auto f = fir_bandpass(250.0, {"theta", 4.0, 8.0});
  const auto fx = filt_zero_phase(x, f);
  const auto fy = filt_zero_phase(y, f);
  const auto fc = filt_zero_phase(combo, f);
  double max_ref = 0.0;
  for (float v : fc.samples) max_ref = std::max(max_ref, std::abs(static_cast<double>(v)));
  for (size_t i = 0; i < fc.samples.size(); ++i) {
    const double expect = 0.7 * fx.samples[i] + 1.3 * fy.samples[i];
    CHECK(std::abs(fc.samples[i] - expect) <= 1e-6 * std::max(1.0, max_ref));
  }
}

TEST_CASE("filter designed for another rate is rejected") {
  auto s = make_set(250.0, 1, 2, 100, [](size_t, size_t, size_t) { return 0.0; });
  CHECK_THROWS_AS(filt_zero_phase(s, fir_bandpass(500.0, {"alpha", 8.0, 13.0})),
                  std::invalid_argument);
}

TEST_CASE("extract_bands separates a 2 Hz + 10 Hz mixture") {
  auto s = make_set(250.0, 1, 2, 1000, [](size_t, size_t, size_t t) {
    const double ts = static_cast<double>(t) / 250.0;
    return std::sin(2.0 * kPi * 2.0 * ts) + std::sin(2.0 * kPi * 10.0 * ts);
  });
  const auto bands = extract_bands(s, default_bands());
  REQUIRE(bands.size() == 3);
  CHECK(bands[0].n_samples == 1000);

  const auto delta_trace = as_double(bands[0].trace(0, 0));
  const auto alpha_trace = as_double(bands[2].trace(0, 0));
  const double delta_low = oracle::band_power(delta_trace, 0.5, 4.0, 250.0);
  const double delta_high = oracle::band_power(delta_trace, 8.0, 13.0, 250.0);
  const double alpha_low = oracle::band_power(alpha_trace, 0.5, 4.0, 250.0);
  const double alpha_high = oracle::band_power(alpha_trace, 8.0, 13.0, 250.0);
  CHECK(delta_low > 10.0 * delta_high);
  CHECK(alpha_high > 10.0 * alpha_low);
}

TEST_CASE("extract_bands of an empty list is empty") {
  auto s = make_set(250.0, 1, 2, 100, [](size_t, size_t, size_t) { return 0.0; });
  CHECK(extract_bands(s, {}).empty());
}

TEST_CASE("instantaneous phase of a cosine advances at 2*pi*f") {
  const double f = 10.0;
  auto s = make_set(250.0, 1, 1, 500, [&](size_t, size_t, size_t t) {
    return std::cos(2.0 * kPi * f * static_cast<double>(t) / 250.0);
  });
  const auto ph = instantaneous_phase(s);

  // Least-squares slope of the unwrapped interior phase.
  std::vector<double> unwrapped;
  double offset = 0.0;
  double prev = ph.at(0, 0, 0);
  unwrapped.push_back(prev);
  for (size_t t = 1; t < 500; ++t) {
    double p = ph.at(0, 0, t);
    if (p - prev < -kPi) offset += 2.0 * kPi;
    if (p - prev > kPi) offset -= 2.0 * kPi;
    prev = p;
    unwrapped.push_back(p + offset);
  }
  const size_t lo = 50, hi = 450;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t t = lo; t < hi; ++t) {
    const double x = static_cast<double>(t);
    sx += x;
    sy += unwrapped[t];
    sxx += x * x;
    sxy += x * unwrapped[t];
  }
  const double n = static_cast<double>(hi - lo);
  const double slope_per_sample = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double slope_rad_s = slope_per_sample * 250.0;
  CHECK(slope_rad_s == doctest::Approx(2.0 * kPi * f).epsilon(0.01));
}

TEST_CASE("sin lags cos by pi/2") {
  auto s = make_set(250.0, 1, 2, 500, [&](size_t, size_t k, size_t t) {
    const double ang = 2.0 * kPi * 10.0 * static_cast<double>(t) / 250.0;
    return k == 0 ? std::cos(ang) : std::sin(ang);
  });
  const auto ph = instantaneous_phase(s);
  for (size_t t = 50; t < 450; ++t) {
    double diff = ph.at(0, 0, t) - ph.at(0, 1, t);
    while (diff <= -kPi) diff += 2.0 * kPi;
    while (diff > kPi) diff -= 2.0 * kPi;
    CHECK(diff == doctest::Approx(kPi / 2.0).epsilon(0.05));
  }
}

TEST_CASE("duplicated channel has zero phase difference everywhere") {
  Rng rng(4);
  std::vector<double> trace(300);
  for (auto& v : trace) v = rng.normal();
  auto s = make_set(250.0, 1, 2, 300, [&](size_t, size_t, size_t t) { return trace[t]; });
  const auto ph = instantaneous_phase(s);
  for (size_t t = 0; t < 300; ++t) {
    CHECK(ph.at(0, 0, t) == ph.at(0, 1, t));
  }
}

TEST_CASE("phase is invariant to positive amplitude scaling") {
  // Power-of-two scales keep c*x exactly representable in the float32
  // sample storage, so the identity can be checked at full precision.
  Rng rng(5);
  std::vector<double> trace(256);
  for (auto& v : trace) v = rng.normal();
  auto a = make_set(250.0, 1, 1, 256, [&](size_t, size_t, size_t t) { return trace[t]; });
  for (double c : {4.0, 0.5}) {
    auto b = make_set(250.0, 1, 1, 256, [&](size_t, size_t, size_t t) { return c * trace[t]; });
    const auto pa = instantaneous_phase(a);
    const auto pb = instantaneous_phase(b);
    for (size_t t = 0; t < 256; ++t) {
      CHECK(std::abs(pa.at(0, 0, t) - pb.at(0, 0, t)) <= 1e-9);
    }
  }
}

TEST_CASE("phase extraction needs at least 4 samples") {
  EpochSet s = EpochSet::empty(250.0, 1, 2, 3);
  s.class_names = {"a"};
  s.montage.channel_names = {"c0", "c1"};
  CHECK_THROWS_AS(instantaneous_phase(s), std::invalid_argument);
}

TEST_CASE("psd peaks at the tone frequency") {
  auto s = make_set(250.0, 2, 2, 512, [](size_t, size_t, size_t t) {
    return std::sin(2.0 * kPi * 10.0 * static_cast<double>(t) / 250.0);
  });
  const auto res = psd(s, 0);
  size_t best = 0;
  for (size_t i = 1; i < res.power.size(); ++i) {
    if (res.power[i] > res.power[best]) best = i;
  }
  const double df = 250.0 / 256.0;
  CHECK(std::abs(res.freqs_hz[best] - 10.0) <= df);
}

TEST_CASE("psd of silence is zero") {
  auto s = make_set(250.0, 1, 2, 512, [](size_t, size_t, size_t) { return 0.0; });
  const auto res = psd(s, 1);
  for (double p : res.power) CHECK(p == 0.0);
}

TEST_CASE("white noise comes out flat over the passband") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    auto s = make_set(250.0, 8, 1, 512, [&](size_t, size_t, size_t) { return rng.normal(); });
    const auto res = psd(s, 0, 0.1, 60.0);
    std::vector<double> sorted = res.power;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double mx = sorted.back();
    CHECK(mx / median < 5.0);
  }
}

TEST_CASE("psd rejects a bad channel index") {
  auto s = make_set(250.0, 1, 2, 512, [](size_t, size_t, size_t) { return 0.0; });
  CHECK_THROWS_AS(psd(s, 2), std::out_of_range);
}

TEST_CASE("ersp of a stationary signal is 0 dB everywhere") {
  auto s = make_set(250.0, 3, 1, 750, [](size_t, size_t, size_t t) {
    return std::sin(2.0 * kPi * 10.0 * static_cast<double>(t) / 250.0);
  });
  const auto map = ersp(s, 0, 1.5);
  for (double v : map.power_db) CHECK(std::abs(v) <= 1.0);
  for (size_t i = 1; i < map.freqs_hz.size(); ++i) CHECK(map.freqs_hz[i] > map.freqs_hz[i - 1]);
  CHECK(map.times_s.size() == 400);
}

TEST_CASE("doubling the amplitude after onset shows up as +6 dB") {
  const double onset = 1.5;
  auto s = make_set(250.0, 4, 1, 750, [&](size_t, size_t, size_t t) {
    const double ts = static_cast<double>(t) / 250.0;
    const double amp = ts >= onset ? 2.0 : 1.0;
    return amp * std::sin(2.0 * kPi * 10.0 * ts);
  });
  // Baseline pulled clear of the onset so no 1-s window straddles it.
  const auto map = ersp(s, 0, onset, {-900.0, -500.0});
  size_t f10 = 0;
  for (size_t i = 0; i < map.freqs_hz.size(); ++i) {
    if (std::abs(map.freqs_hz[i] - 10.0) < std::abs(map.freqs_hz[f10] - 10.0)) f10 = i;
  }
  double acc = 0.0;
  size_t count = 0;
  for (size_t p = 0; p < map.times_s.size(); ++p) {
    if (map.times_s[p] >= 0.55 && map.times_s[p] <= 0.95) {
      acc += map.at(f10, p);
      ++count;
    }
  }
  REQUIRE(count > 0);
  CHECK(acc / static_cast<double>(count) == doctest::Approx(20.0 * std::log10(2.0)).epsilon(0.1));
}

TEST_CASE("ersp validates frequency range and baseline") {
  auto s = make_set(250.0, 1, 1, 750, [](size_t, size_t, size_t) { return 1.0; });
  CHECK_THROWS_AS(ersp(s, 0, 1.5, {-500.0, 0.0}, {0.5, 200.0}), std::invalid_argument);
  CHECK_THROWS_AS(ersp(s, 0, 0.1), std::invalid_argument);  // baseline before the epoch
}

TEST_CASE("notch filter attenuates its center frequency") {
  auto s = make_set(250.0, 1, 1, 1000, [](size_t, size_t, size_t t) {
    const double ts = static_cast<double>(t) / 250.0;
    return std::sin(2.0 * kPi * 60.0 * ts) + std::sin(2.0 * kPi * 10.0 * ts);
  });
  const auto y = notch_filter(s, 60.0, 30.0);
  const auto out = as_double(y.trace(0, 0));
  // Skip the transient.
  std::vector<double> tail(out.begin() + 500, out.end());
  const double m60 = oracle::dft_magnitude(tail, 60.0, 250.0);
  const double m10 = oracle::dft_magnitude(tail, 10.0, 250.0);
  CHECK(m60 < 0.05 * m10);
}
