#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcdn {

// Error categories the CLI maps to distinct exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Electrode montage: channel names in recording order (10-20 system labels
// for real caps, synthetic names like "ch01" otherwise).
struct Montage {
  std::vector<std::string> channel_names;

  size_t size() const { return channel_names.size(); }
  void validate() const;  // names unique, at least 2 channels
};

// One frequency band, e.g. {"alpha", 8, 13}.
struct BandSpec {
  std::string name;
  double f_lo_hz{0.0};
  double f_hi_hz{0.0};

  double center_hz() const { return 0.5 * (f_lo_hz + f_hi_hz); }
  void validate(double fs_hz) const;  // 0 < f_lo < f_hi < fs/2
};

// The delta/theta/alpha triplet used throughout.
std::vector<BandSpec> default_bands();

// N trials x K channels x T samples of EEG (microvolts) with class labels.
// Samples are stored as float32 so the on-disk blob round-trips bit-exactly.
// Layout: index = ((n*K)+k)*T + t.
struct EpochSet {
  double fs_hz{0.0};
  size_t n_trials{0};
  size_t n_channels{0};
  size_t n_samples{0};
  std::vector<float> samples;
  std::vector<int> labels;  // size n_trials, values in [0, n_classes)
  std::vector<std::string> class_names;
  Montage montage;

  size_t n_classes() const { return class_names.size(); }

  float& at(size_t n, size_t k, size_t t) {
    return samples[(n * n_channels + k) * n_samples + t];
  }
  float at(size_t n, size_t k, size_t t) const {
    return samples[(n * n_channels + k) * n_samples + t];
  }
  std::span<float> trace(size_t n, size_t k) {
    return {samples.data() + (n * n_channels + k) * n_samples, n_samples};
  }
  std::span<const float> trace(size_t n, size_t k) const {
    return {samples.data() + (n * n_channels + k) * n_samples, n_samples};
  }

  // Allocates the sample buffer for the given dimensions (zero-filled).
  static EpochSet empty(double fs_hz, size_t n_trials, size_t n_channels,
                        size_t n_samples);

  // Copy with the same metadata but a subset of trials.
  EpochSet select_trials(const std::vector<size_t>& indices) const;

  // Copy with the time axis restricted to [t0, t0+len).
  EpochSet slice_time(size_t t0, size_t len) const;

  // Throws on violated invariants (finite samples, labels < C, T >= 2, ...).
  void validate() const;
};

}  // namespace fcdn
