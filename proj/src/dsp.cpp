#include "fcdn/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "fcdn/fft.hpp"

namespace fcdn {

namespace {

constexpr double kPi = std::numbers::pi;

// Ideal low-pass impulse response at normalized cutoff fc (cycles/sample).
double sinc_lp(double fc, double m) {
  if (m == 0.0) return 2.0 * fc;
  return std::sin(2.0 * kPi * fc * m) / (kPi * m);
}

// Hamming-windowed sinc low-pass, normalized to unit DC gain.
std::vector<double> hamming_lowpass(int order, double fc_norm) {
  const int n_taps = order + 1;
  std::vector<double> taps(n_taps, 0.0);
  if (fc_norm <= 0.0) return taps;
  const double mid = static_cast<double>(order) / 2.0;
  // Fill one half and mirror so symmetry is exact.
  for (int i = 0; 2 * i <= order; ++i) {
    const double m = static_cast<double>(i) - mid;
    const double w = 0.54 - 0.46 * std::cos(2.0 * kPi * i / order);
    taps[i] = sinc_lp(fc_norm, m) * w;
    taps[order - i] = taps[i];
  }
  double gain = 0.0;
  for (double t : taps) gain += t;
  for (double& t : taps) t /= gain;
  return taps;
}

// Band-pass as the difference of two unit-DC-gain low-passes, which pins
// the DC response to exactly zero regardless of the order.
std::vector<double> hamming_sinc(int order, double f_lo_norm, double f_hi_norm) {
  auto taps = hamming_lowpass(order, f_hi_norm);
  const auto low = hamming_lowpass(order, f_lo_norm);
  for (size_t i = 0; i < taps.size(); ++i) taps[i] -= low[i];
  return taps;
}

// Index into [0, n) with mirror reflection about the edge samples.
size_t reflect_index(long idx, size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  long m = idx % period;
  if (m < 0) m += period;
  return static_cast<size_t>(m < static_cast<long>(n) ? m : period - m);
}

// Symmetric zero-phase pass: convolve with the autocorrelation of the taps
// (identical to filtering forward then backward) over a reflection-padded
// copy of the trace. Long kernels go through FFT convolution.
EpochSet zero_phase_all(const EpochSet& set, const std::vector<double>& taps) {
  const size_t t_len = set.n_samples;
  const int order = static_cast<int>(taps.size()) - 1;
  std::vector<double> kernel(2 * order + 1, 0.0);
  for (int d = -order; d <= order; ++d) {
    double acc = 0.0;
    for (int i = std::max(0, d); i <= std::min(order, order + d); ++i) {
      acc += taps[i] * taps[i - d];
    }
    kernel[order + d] = acc;
  }

  const bool use_fft = kernel.size() > 128;
  const size_t conv_len = t_len + 4 * static_cast<size_t>(order);  // full linear convolution
  std::vector<std::complex<double>> kernel_spec;
  if (use_fft) {
    std::vector<std::complex<double>> kpad(conv_len, {0.0, 0.0});
    for (size_t i = 0; i < kernel.size(); ++i) kpad[i] = {kernel[i], 0.0};
    kernel_spec = fft(kpad);
  }

  EpochSet out = set;
  std::vector<double> padded(t_len + 2 * order);
  std::vector<std::complex<double>> zpad(use_fft ? conv_len : 0);
  for (size_t n = 0; n < set.n_trials; ++n) {
    for (size_t k = 0; k < set.n_channels; ++k) {
      const auto src = set.trace(n, k);
      auto dst = out.trace(n, k);
      for (size_t i = 0; i < padded.size(); ++i) {
        padded[i] = src[reflect_index(static_cast<long>(i) - order, t_len)];
      }
      if (use_fft) {
        std::fill(zpad.begin(), zpad.end(), std::complex<double>{0.0, 0.0});
        for (size_t i = 0; i < padded.size(); ++i) zpad[i] = {padded[i], 0.0};
        auto spec = fft(zpad);
        for (size_t i = 0; i < conv_len; ++i) spec[i] *= kernel_spec[i];
        const auto conv = ifft(spec);
        for (size_t t = 0; t < t_len; ++t) {
          dst[t] = static_cast<float>(conv[t + 2 * static_cast<size_t>(order)].real());
        }
      } else {
        for (size_t t = 0; t < t_len; ++t) {
          double acc = 0.0;
          for (int j = 0; j <= 2 * order; ++j) acc += kernel[j] * padded[t + j];
          dst[t] = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

// Periodic Hann (DFT-even), so bin-centered tones stay concentrated in
// three bins instead of leaking everywhere.
std::vector<double> hann_window(size_t n) {
  std::vector<double> w(n);
  for (size_t t = 0; t < n; ++t) {
    w[t] = 0.5 * (1.0 - std::cos(2.0 * kPi * t / static_cast<double>(n)));
  }
  return w;
}

}  // namespace

FirFilter fir_bandpass(double fs_hz, const BandSpec& band, int order) {
  band.validate(fs_hz);
  if (order < 2) throw std::invalid_argument("filter order must be >= 2");
  FirFilter f;
  f.band = band;
  f.fs_hz = fs_hz;
  f.taps = hamming_sinc(order, band.f_lo_hz / fs_hz, band.f_hi_hz / fs_hz);
  return f;
}

EpochSet filt_zero_phase(const EpochSet& set, const FirFilter& filter) {
  if (std::abs(filter.fs_hz - set.fs_hz) > 1e-9 * std::max(1.0, set.fs_hz)) {
    throw std::invalid_argument("filter was designed for a different sampling rate");
  }
  return zero_phase_all(set, filter.taps);
}

EpochSet downsample(const EpochSet& set, size_t factor) {
  if (factor == 0) throw std::invalid_argument("downsample factor must be >= 1");
  if (factor > set.n_samples) throw std::invalid_argument("downsample factor exceeds trial length");
  if (factor == 1) return set;

  const double new_fs = set.fs_hz / static_cast<double>(factor);
  const double cutoff_norm = 0.45 * (new_fs / 2.0) / set.fs_hz;
  const int order = std::max<int>(30, 10 * static_cast<int>(factor));
  const auto taps = hamming_sinc(order, 0.0, cutoff_norm);
  EpochSet filtered = zero_phase_all(set, taps);

  const size_t t_out = set.n_samples / factor;
  EpochSet out = EpochSet::empty(new_fs, set.n_trials, set.n_channels, t_out);
  out.labels = set.labels;
  out.class_names = set.class_names;
  out.montage = set.montage;
  for (size_t n = 0; n < set.n_trials; ++n) {
    for (size_t k = 0; k < set.n_channels; ++k) {
      const auto src = filtered.trace(n, k);
      auto dst = out.trace(n, k);
      for (size_t t = 0; t < t_out; ++t) dst[t] = src[t * factor];
    }
  }
  return out;
}

int band_filter_order(double fs_hz, const BandSpec& band) {
  band.validate(fs_hz);
  int order = std::max(30, static_cast<int>(std::ceil(3.3 * fs_hz / band.f_lo_hz)));
  order += order % 2;
  return order;
}

std::vector<EpochSet> extract_bands(const EpochSet& set, const std::vector<BandSpec>& bands) {
  std::vector<EpochSet> out;
  out.reserve(bands.size());
  for (const auto& band : bands) {
    out.push_back(filt_zero_phase(set, fir_bandpass(set.fs_hz, band, band_filter_order(set.fs_hz, band))));
  }
  return out;
}

PhaseSeries instantaneous_phase(const EpochSet& set) {
  if (set.n_samples < 4) {
    throw std::invalid_argument("instantaneous phase needs at least 4 samples");
  }
  PhaseSeries ph;
  ph.n_trials = set.n_trials;
  ph.n_channels = set.n_channels;
  ph.n_samples = set.n_samples;
  ph.phases.resize(set.samples.size());

  std::vector<double> trace(set.n_samples);
  for (size_t n = 0; n < set.n_trials; ++n) {
    for (size_t k = 0; k < set.n_channels; ++k) {
      const auto src = set.trace(n, k);
      std::copy(src.begin(), src.end(), trace.begin());
      const auto analytic = analytic_signal(trace);
      for (size_t t = 0; t < set.n_samples; ++t) {
        double p = std::atan2(analytic[t].imag(), analytic[t].real());
        if (p <= -kPi) p = kPi;  // wrap to (-pi, pi]
        ph.at(n, k, t) = p;
      }
    }
  }
  return ph;
}

PsdResult psd(const EpochSet& set, size_t channel, double f_lo, double f_hi) {
  if (channel >= set.n_channels) throw std::out_of_range("channel index out of range");
  if (!(f_lo < f_hi)) throw std::invalid_argument("need f_lo < f_hi");

  const size_t nseg = std::min<size_t>(set.n_samples, 256);
  const size_t hop = std::max<size_t>(1, nseg / 2);
  const auto window = hann_window(nseg);
  double win_pow = 0.0;
  for (double w : window) win_pow += w * w;

  std::vector<double> acc(nseg / 2 + 1, 0.0);
  size_t n_segments = 0;
  std::vector<std::complex<double>> seg(nseg);
  for (size_t n = 0; n < set.n_trials; ++n) {
    const auto tr = set.trace(n, channel);
    for (size_t start = 0; start + nseg <= set.n_samples; start += hop) {
      for (size_t t = 0; t < nseg; ++t) seg[t] = {window[t] * tr[start + t], 0.0};
      const auto spec = fft(seg);
      for (size_t j = 0; j < acc.size(); ++j) {
        const double one_sided = (j == 0 || 2 * j == nseg) ? 1.0 : 2.0;
        acc[j] += one_sided * std::norm(spec[j]) / (set.fs_hz * win_pow);
      }
      ++n_segments;
    }
  }
  if (n_segments == 0) throw std::invalid_argument("trials shorter than one Welch segment");

  PsdResult out;
  for (size_t j = 0; j < acc.size(); ++j) {
    const double f = static_cast<double>(j) * set.fs_hz / static_cast<double>(nseg);
    if (f < f_lo || f > std::min(f_hi, set.fs_hz / 2.0)) continue;
    out.freqs_hz.push_back(f);
    out.power.push_back(acc[j] / static_cast<double>(n_segments));
  }
  return out;
}

TimeFreqMap ersp(const EpochSet& set, size_t channel, double onset_s,
                 std::array<double, 2> baseline_ms, std::array<double, 2> f_range,
                 size_t n_times) {
  if (channel >= set.n_channels) throw std::out_of_range("channel index out of range");
  if (!(f_range[0] > 0.0) || !(f_range[0] < f_range[1])) {
    throw std::invalid_argument("bad frequency range");
  }
  if (f_range[1] > set.fs_hz / 2.0) throw std::invalid_argument("f_range beyond Nyquist");
  if (n_times < 2) throw std::invalid_argument("need at least 2 time points");
  if (!(baseline_ms[0] < baseline_ms[1])) throw std::invalid_argument("bad baseline window");

  const size_t win = static_cast<size_t>(std::lround(set.fs_hz));  // 1 s
  if (win < 8 || win > set.n_samples) {
    throw std::invalid_argument("epoch shorter than the 1-s analysis window");
  }
  const size_t hop = std::max<size_t>(1, win / 8);
  const auto window = hann_window(win);

  // Frequency bins of the analysis window inside f_range.
  std::vector<size_t> bins;
  TimeFreqMap out;
  for (size_t j = 1; j <= win / 2; ++j) {
    const double f = static_cast<double>(j) * set.fs_hz / static_cast<double>(win);
    if (f >= f_range[0] && f <= f_range[1]) {
      bins.push_back(j);
      out.freqs_hz.push_back(f);
    }
  }
  if (bins.empty()) throw std::invalid_argument("no DFT bins inside f_range");

  // STFT column centers, relative to the onset.
  std::vector<double> col_times;
  for (size_t start = 0; start + win <= set.n_samples; start += hop) {
    const double center = (static_cast<double>(start) + static_cast<double>(win) / 2.0) / set.fs_hz;
    col_times.push_back(center - onset_s);
  }
  if (col_times.size() < 2) throw std::invalid_argument("epoch admits fewer than 2 analysis windows");

  // Trial-averaged power per (freq, column).
  std::vector<double> power(bins.size() * col_times.size(), 0.0);
  std::vector<std::complex<double>> seg(win);
  for (size_t n = 0; n < set.n_trials; ++n) {
    const auto tr = set.trace(n, channel);
    size_t col = 0;
    for (size_t start = 0; start + win <= set.n_samples; start += hop, ++col) {
      for (size_t t = 0; t < win; ++t) seg[t] = {window[t] * tr[start + t], 0.0};
      const auto spec = fft(seg);
      for (size_t b = 0; b < bins.size(); ++b) {
        power[b * col_times.size() + col] += std::norm(spec[bins[b]]);
      }
    }
  }
  for (double& p : power) p /= static_cast<double>(set.n_trials);

  // Interpolate columns onto the requested n_times grid.
  const double t0 = col_times.front();
  const double t1 = col_times.back();
  out.times_s.resize(n_times);
  for (size_t p = 0; p < n_times; ++p) {
    out.times_s[p] = t0 + (t1 - t0) * static_cast<double>(p) / static_cast<double>(n_times - 1);
  }
  auto interp_col = [&](size_t b, double t) {
    const auto it = std::upper_bound(col_times.begin(), col_times.end(), t);
    size_t hi = static_cast<size_t>(std::distance(col_times.begin(), it));
    hi = std::clamp<size_t>(hi, 1, col_times.size() - 1);
    const size_t lo = hi - 1;
    const double span = col_times[hi] - col_times[lo];
    const double u = span > 0.0 ? (t - col_times[lo]) / span : 0.0;
    const double a = power[b * col_times.size() + lo];
    const double c = power[b * col_times.size() + hi];
    return a + u * (c - a);
  };

  const double b_lo = baseline_ms[0] / 1000.0;
  const double b_hi = baseline_ms[1] / 1000.0;
  if (b_lo < t0 - 1e-9 || b_hi > t1 + 1e-9) {
    throw std::invalid_argument("baseline outside epoch");
  }

  out.power_db.resize(bins.size() * n_times);
  // Relative floor: bins whose power sits at rounding-noise level (e.g. the
  // exact-zero leakage bins of a pure tone) compare as equal, i.e. 0 dB.
  double peak = 0.0;
  for (double p : power) peak = std::max(peak, p);
  const double kEps = std::max(1e-12 * peak, 1e-300);
  for (size_t b = 0; b < bins.size(); ++b) {
    double base = 0.0;
    size_t n_base = 0;
    for (double t : out.times_s) {
      if (t >= b_lo && t <= b_hi) {
        base += interp_col(b, t);
        ++n_base;
      }
    }
    if (n_base == 0) throw std::invalid_argument("baseline window contains no time points");
    base /= static_cast<double>(n_base);
    for (size_t p = 0; p < n_times; ++p) {
      const double v = interp_col(b, out.times_s[p]);
      out.power_db[b * n_times + p] = 10.0 * std::log10((v + kEps) / (base + kEps));
    }
  }
  return out;
}

std::string psd_to_csv(const PsdResult& psd) {
  std::ostringstream out;
  out.precision(17);
  out << "freq_hz,power\n";
  for (size_t i = 0; i < psd.freqs_hz.size(); ++i) {
    out << psd.freqs_hz[i] << "," << psd.power[i] << "\n";
  }
  return out.str();
}

std::string timefreq_to_csv(const TimeFreqMap& map) {
  std::ostringstream out;
  out.precision(17);
  out << "time_s,freq_hz,power_db\n";
  for (size_t f = 0; f < map.freqs_hz.size(); ++f) {
    for (size_t p = 0; p < map.times_s.size(); ++p) {
      out << map.times_s[p] << "," << map.freqs_hz[f] << "," << map.at(f, p) << "\n";
    }
  }
  return out.str();
}

EpochSet notch_filter(const EpochSet& set, double f0_hz, double q) {
  if (!(f0_hz > 0.0) || f0_hz >= set.fs_hz / 2.0) {
    throw std::invalid_argument("notch frequency outside (0, fs/2)");
  }
  if (!(q > 0.0)) throw std::invalid_argument("notch Q must be positive");
  const double w0 = 2.0 * kPi * f0_hz / set.fs_hz;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = 1.0 / a0;
  const double b1 = -2.0 * std::cos(w0) / a0;
  const double b2 = 1.0 / a0;
  const double a1 = -2.0 * std::cos(w0) / a0;
  const double a2 = (1.0 - alpha) / a0;

  EpochSet out = set;
  for (size_t n = 0; n < set.n_trials; ++n) {
    for (size_t k = 0; k < set.n_channels; ++k) {
      const auto src = set.trace(n, k);
      auto dst = out.trace(n, k);
      double z1 = 0.0, z2 = 0.0;  // direct form II transposed
      for (size_t t = 0; t < set.n_samples; ++t) {
        const double x = src[t];
        const double y = b0 * x + z1;
        z1 = b1 * x - a1 * y + z2;
        z2 = b2 * x - a2 * y;
        dst[t] = static_cast<float>(y);
      }
    }
  }
  return out;
}

}  // namespace fcdn
