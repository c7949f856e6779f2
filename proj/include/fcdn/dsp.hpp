#pragma once

#include <array>
#include <vector>

#include "fcdn/types.hpp"

namespace fcdn {

// Linear-phase FIR band-pass (Hamming-windowed sinc). taps.size() == order+1
// and the taps are symmetric about the midpoint by construction.
struct FirFilter {
  std::vector<double> taps;
  BandSpec band;
  double fs_hz{0.0};

  int order() const { return static_cast<int>(taps.size()) - 1; }
};

// Instantaneous phase of the analytic signal, wrapped to (-pi, pi].
// Same N x K x T layout as EpochSet, double precision.
struct PhaseSeries {
  size_t n_trials{0};
  size_t n_channels{0};
  size_t n_samples{0};
  std::vector<double> phases;

  double at(size_t n, size_t k, size_t t) const {
    return phases[(n * n_channels + k) * n_samples + t];
  }
  double& at(size_t n, size_t k, size_t t) {
    return phases[(n * n_channels + k) * n_samples + t];
  }
};

struct PsdResult {
  std::vector<double> freqs_hz;
  std::vector<double> power;  // one value per frequency, averaged over trials/segments
};

// Time-frequency power in dB relative to a pre-onset baseline.
// power_db is F x P row-major (frequency-major).
struct TimeFreqMap {
  std::vector<double> freqs_hz;   // F, strictly increasing
  std::vector<double> times_s;    // P, relative to the imagery onset
  std::vector<double> power_db;   // F*P

  double at(size_t f, size_t p) const { return power_db[f * times_s.size() + p]; }
};

// Anti-aliased decimation: low-pass at 0.45 * new Nyquist (zero-phase),
// then keep every factor-th sample. factor == 1 is the identity.
EpochSet downsample(const EpochSet& set, size_t factor);

// Hamming-windowed sinc band-pass of the given order (order+1 taps).
FirFilter fir_bandpass(double fs_hz, const BandSpec& band, int order = 30);

// Order for which the Hamming transition width (~3.3/taps) stays inside the
// band's lower edge; low bands need far more than the default 31 taps to be
// realizable at EEG rates. Used by extract_bands and the PLV pipeline.
int band_filter_order(double fs_hz, const BandSpec& band);

// Zero-phase filtering: a single symmetric pass with the autocorrelated
// kernel, equivalent to forward-backward application of the FIR (effective
// magnitude |H|^2, zero phase). Edges are reflection-padded by the filter
// order; output length equals input length.
EpochSet filt_zero_phase(const EpochSet& set, const FirFilter& filter);

// One zero-phase filtered copy of the set per band (fir_bandpass order 30).
std::vector<EpochSet> extract_bands(const EpochSet& set, const std::vector<BandSpec>& bands);

// Analytic-signal phase per trial and channel. Input should already be
// band-limited; the first/last ~10% of samples carry edge distortion.
PhaseSeries instantaneous_phase(const EpochSet& set);

// Welch PSD for one channel, averaged across trials and 50%-overlapping
// Hann segments, restricted to [f_lo, f_hi].
PsdResult psd(const EpochSet& set, size_t channel, double f_lo = 0.1, double f_hi = 60.0);

// Event-related spectral perturbation for one channel. `onset_s` locates the
// imagery onset inside the epoch; baseline_ms is relative to that onset.
// Short-time DFT with a 1-s Hann window, interpolated to n_times points.
TimeFreqMap ersp(const EpochSet& set, size_t channel, double onset_s,
                 std::array<double, 2> baseline_ms = {-500.0, 0.0},
                 std::array<double, 2> f_range = {0.5, 50.0}, size_t n_times = 400);

// Optional 60 Hz style notch (second-order IIR biquad), applied causally.
// Provided for acquisition-style cleanup; not part of the reference pipeline.
EpochSet notch_filter(const EpochSet& set, double f0_hz, double q = 30.0);

// CSV serializations consumed by external plotting.
std::string psd_to_csv(const PsdResult& psd);            // freq_hz,power
std::string timefreq_to_csv(const TimeFreqMap& map);     // time_s,freq_hz,power_db

}  // namespace fcdn
