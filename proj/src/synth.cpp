#include "fcdn/synth.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "fcdn/fft.hpp"
#include "fcdn/rng.hpp"

namespace fcdn {

void SynthSpec::validate() const {
  if (n_channels < 2) throw std::invalid_argument("n_channels must be >= 2");
  if (n_samples < 8) throw std::invalid_argument("n_samples must be >= 8");
  if (!(fs_hz > 0.0)) throw std::invalid_argument("fs_hz must be positive");
  if (n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
  if (n_classes < 1) throw std::invalid_argument("n_classes must be >= 1");
  if (noise_amplitude < 0.0) throw std::invalid_argument("noise_amplitude must be >= 0");
  for (const auto& c : couplings) {
    if (c.class_index >= n_classes) throw std::invalid_argument("coupling class out of range");
    if (c.ch_a >= n_channels || c.ch_b >= n_channels || c.ch_a == c.ch_b) {
      throw std::invalid_argument("coupling channels invalid");
    }
    if (c.phase_offset_rad < 0.0 || c.phase_offset_rad >= 2.0 * std::numbers::pi) {
      throw std::invalid_argument("phase offset must lie in [0, 2*pi)");
    }
    if (c.amplitude < 0.0) throw std::invalid_argument("coupling amplitude must be >= 0");
    c.band.validate(fs_hz);
  }
}

namespace {

// 1/f background: unit-magnitude-per-sqrt(f) half spectrum with random
// phases, mirrored and inverse-transformed, then scaled to the target RMS.
void add_pink_noise(std::vector<double>& trace, double fs_hz, double rms, Rng& rng) {
  const size_t n = trace.size();
  const size_t half = n / 2;
  std::vector<std::complex<double>> spec(n, {0.0, 0.0});
  for (size_t j = 1; j < half; ++j) {
    const double f = static_cast<double>(j) * fs_hz / static_cast<double>(n);
    const double mag = 1.0 / std::sqrt(f);
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    spec[j] = std::polar(mag, phi);
    spec[n - j] = std::conj(spec[j]);
  }
  auto x = ifft(spec);
  double sumsq = 0.0;
  for (size_t t = 0; t < n; ++t) sumsq += x[t].real() * x[t].real();
  const double cur = std::sqrt(sumsq / static_cast<double>(n));
  if (cur > 0.0 && rms > 0.0) {
    const double scale = rms / cur;
    for (size_t t = 0; t < n; ++t) trace[t] += scale * x[t].real();
  }
}

}  // namespace

EpochSet synth_generate(const SynthSpec& spec) {
  spec.validate();
  const size_t n_trials = spec.n_per_class * spec.n_classes;
  EpochSet set = EpochSet::empty(spec.fs_hz, n_trials, spec.n_channels, spec.n_samples);

  set.class_names.reserve(spec.n_classes);
  for (size_t c = 0; c < spec.n_classes; ++c) {
    set.class_names.push_back("class-" + std::to_string(c + 1));
  }
  set.montage.channel_names.reserve(spec.n_channels);
  for (size_t k = 0; k < spec.n_channels; ++k) {
    const std::string num = std::to_string(k + 1);
    set.montage.channel_names.push_back("ch" + std::string(num.size() < 2 ? 1 : 0, '0') + num);
  }

  Rng rng(spec.seed);
  std::vector<std::vector<double>> trial(spec.n_channels,
                                         std::vector<double>(spec.n_samples));
  for (size_t n = 0; n < n_trials; ++n) {
    const size_t cls = n / spec.n_per_class;
    set.labels[n] = static_cast<int>(cls);

    for (auto& tr : trial) std::fill(tr.begin(), tr.end(), 0.0);
    if (spec.noise_amplitude > 0.0) {
      for (size_t k = 0; k < spec.n_channels; ++k) {
        add_pink_noise(trial[k], spec.fs_hz, spec.noise_amplitude, rng);
      }
    }
    for (const auto& c : spec.couplings) {
      if (c.class_index != cls) continue;
      const double base = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double w = 2.0 * std::numbers::pi * c.band.center_hz() / spec.fs_hz;
      for (size_t t = 0; t < spec.n_samples; ++t) {
        const double ph = w * static_cast<double>(t) + base;
        trial[c.ch_a][t] += c.amplitude * std::sin(ph);
        trial[c.ch_b][t] += c.amplitude * std::sin(ph + c.phase_offset_rad);
      }
    }
    for (size_t k = 0; k < spec.n_channels; ++k) {
      for (size_t t = 0; t < spec.n_samples; ++t) {
        set.at(n, k, t) = static_cast<float>(trial[k][t]);
      }
    }
  }
  set.validate();
  return set;
}

}  // namespace fcdn
