#include "fcdn/types.hpp"

#include <cmath>
#include <unordered_set>

namespace fcdn {

void Montage::validate() const {
  if (channel_names.size() < 2) {
    throw std::invalid_argument("montage needs at least 2 channels");
  }
  std::unordered_set<std::string> seen;
  for (const auto& name : channel_names) {
    if (!seen.insert(name).second) {
      throw std::invalid_argument("duplicate channel name: " + name);
    }
  }
}

void BandSpec::validate(double fs_hz) const {
  if (!(f_lo_hz > 0.0) || !(f_hi_hz > f_lo_hz) || !(f_hi_hz < fs_hz / 2.0)) {
    throw std::invalid_argument("band '" + name + "' edges must satisfy 0 < " +
                                std::to_string(f_lo_hz) + " < " +
                                std::to_string(f_hi_hz) + " < fs/2");
  }
}

std::vector<BandSpec> default_bands() {
  return {{"delta", 0.5, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 13.0}};
}

EpochSet EpochSet::empty(double fs_hz, size_t n_trials, size_t n_channels,
                         size_t n_samples) {
  EpochSet s;
  s.fs_hz = fs_hz;
  s.n_trials = n_trials;
  s.n_channels = n_channels;
  s.n_samples = n_samples;
  s.samples.assign(n_trials * n_channels * n_samples, 0.0f);
  s.labels.assign(n_trials, 0);
  return s;
}

EpochSet EpochSet::select_trials(const std::vector<size_t>& indices) const {
  EpochSet out = EpochSet::empty(fs_hz, indices.size(), n_channels, n_samples);
  out.class_names = class_names;
  out.montage = montage;
  for (size_t i = 0; i < indices.size(); ++i) {
    const size_t n = indices[i];
    if (n >= n_trials) throw std::out_of_range("trial index out of range");
    out.labels[i] = labels[n];
    std::copy(samples.begin() + static_cast<ptrdiff_t>((n * n_channels) * n_samples),
              samples.begin() + static_cast<ptrdiff_t>(((n + 1) * n_channels) * n_samples),
              out.samples.begin() + static_cast<ptrdiff_t>((i * n_channels) * n_samples));
  }
  return out;
}

EpochSet EpochSet::slice_time(size_t t0, size_t len) const {
  if (t0 + len > n_samples) throw std::out_of_range("time slice out of range");
  EpochSet out = EpochSet::empty(fs_hz, n_trials, n_channels, len);
  out.labels = labels;
  out.class_names = class_names;
  out.montage = montage;
  for (size_t n = 0; n < n_trials; ++n) {
    for (size_t k = 0; k < n_channels; ++k) {
      const auto src = trace(n, k);
      auto dst = out.trace(n, k);
      std::copy(src.begin() + static_cast<ptrdiff_t>(t0),
                src.begin() + static_cast<ptrdiff_t>(t0 + len), dst.begin());
    }
  }
  return out;
}

void EpochSet::validate() const {
  if (n_trials < 1) throw std::invalid_argument("empty set");
  if (n_samples < 2) throw std::invalid_argument("need at least 2 samples per trial");
  if (!(fs_hz > 0.0)) throw std::invalid_argument("sampling rate must be positive");
  if (samples.size() != n_trials * n_channels * n_samples) {
    throw std::invalid_argument("sample buffer does not match dimensions");
  }
  if (labels.size() != n_trials) {
    throw std::invalid_argument("label count does not match trial count");
  }
  if (montage.size() != n_channels) {
    throw std::invalid_argument("montage does not match channel count");
  }
  montage.validate();
  const int c = static_cast<int>(n_classes());
  for (int label : labels) {
    if (label < 0 || label >= c) throw std::invalid_argument("label out of range");
  }
  for (float v : samples) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite sample");
  }
}

}  // namespace fcdn
