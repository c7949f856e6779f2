// Independent reference implementations used by the tests. Kept separate
// from the library so each check compares two routes to the same quantity.
#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

// Direct O(n^2) DFT magnitude at one frequency (Hz) for a real sequence.
inline double dft_magnitude(const std::vector<double>& x, double freq_hz, double fs_hz) {
  std::complex<double> acc{0.0, 0.0};
  for (size_t t = 0; t < x.size(); ++t) {
    const double ang = -2.0 * std::numbers::pi * freq_hz * static_cast<double>(t) / fs_hz;
    acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
  }
  return std::abs(acc);
}

// Frequency response magnitude of an FIR filter at one frequency.
inline double fir_response(const std::vector<double>& taps, double freq_hz, double fs_hz) {
  return dft_magnitude(taps, freq_hz, fs_hz);
}

// Band power of a real sequence via the direct DFT, summed over bins.
inline double band_power(const std::vector<double>& x, double f_lo, double f_hi, double fs_hz) {
  const size_t n = x.size();
  double acc = 0.0;
  for (size_t j = 1; j <= n / 2; ++j) {
    const double f = static_cast<double>(j) * fs_hz / static_cast<double>(n);
    if (f < f_lo || f > f_hi) continue;
    const double mag = dft_magnitude(x, f, fs_hz);
    acc += mag * mag;
  }
  return acc;
}

// Lag of the maximum of the (unnormalized) cross-correlation of a and b
// over lags in [-max_lag, max_lag].
inline long xcorr_peak_lag(const std::vector<double>& a, const std::vector<double>& b,
                           long max_lag) {
  double best = -1.0;
  long best_lag = 0;
  const long n = static_cast<long>(a.size());
  for (long lag = -max_lag; lag <= max_lag; ++lag) {
    double acc = 0.0;
    for (long t = 0; t < n; ++t) {
      const long u = t + lag;
      if (u < 0 || u >= n) continue;
      acc += a[t] * b[u];
    }
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  return best_lag;
}

// Brute-force temporal convolution, one sample: x[C_in][K][T], kernels
// [C_out][C_in][W], zero padding `pad_left`.
inline std::vector<double> conv_reference(const std::vector<double>& x, size_t c_in, size_t rows,
                                          size_t t_in, const std::vector<double>& ker,
                                          size_t c_out, size_t width, size_t pad_left,
                                          size_t t_out) {
  std::vector<double> out(c_out * rows * t_out, 0.0);
  for (size_t co = 0; co < c_out; ++co) {
    for (size_t k = 0; k < rows; ++k) {
      for (size_t t = 0; t < t_out; ++t) {
        double acc = 0.0;
        for (size_t ci = 0; ci < c_in; ++ci) {
          for (size_t w = 0; w < width; ++w) {
            const long src = static_cast<long>(t + w) - static_cast<long>(pad_left);
            if (src < 0 || src >= static_cast<long>(t_in)) continue;
            acc += ker[(co * c_in + ci) * width + w] *
                   x[(ci * rows + k) * t_in + static_cast<size_t>(src)];
          }
        }
        out[(co * rows + k) * t_out + t] = acc;
      }
    }
  }
  return out;
}

// Direct per-pixel bicubic evaluation (no separable passes): the plain
// weighted 4x4 sum with the a = -0.5 kernel, half-pixel centers and edge
// clamping.
inline double cubic_weight(double s) {
  constexpr double a = -0.5;
  s = std::abs(s);
  if (s <= 1.0) return ((a + 2.0) * s - (a + 3.0)) * s * s + 1.0;
  if (s < 2.0) return ((a * s - 5.0 * a) * s + 8.0 * a) * s - 4.0 * a;
  return 0.0;
}

inline std::vector<double> bicubic_reference(const std::vector<double>& img, size_t h, size_t w,
                                             size_t oh, size_t ow) {
  auto clamp_idx = [](long v, size_t n) {
    if (v < 0) return size_t{0};
    if (v >= static_cast<long>(n)) return n - 1;
    return static_cast<size_t>(v);
  };
  std::vector<double> out(oh * ow);
  const double sy = static_cast<double>(h) / static_cast<double>(oh);
  const double sx = static_cast<double>(w) / static_cast<double>(ow);
  for (size_t i = 0; i < oh; ++i) {
    const double src_y = (static_cast<double>(i) + 0.5) * sy - 0.5;
    const long y0 = static_cast<long>(std::floor(src_y));
    const double ty = src_y - std::floor(src_y);
    for (size_t j = 0; j < ow; ++j) {
      const double src_x = (static_cast<double>(j) + 0.5) * sx - 0.5;
      const long x0 = static_cast<long>(std::floor(src_x));
      const double tx = src_x - std::floor(src_x);
      double acc = 0.0;
      for (int dy = -1; dy <= 2; ++dy) {
        for (int dx = -1; dx <= 2; ++dx) {
          const double wgt = cubic_weight(ty - dy) * cubic_weight(tx - dx);
          acc += wgt * img[clamp_idx(y0 + dy, h) * w + clamp_idx(x0 + dx, w)];
        }
      }
      out[i * ow + j] = acc;
    }
  }
  return out;
}

// Pearson r straight from the definition.
inline double pearson_reference(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Full 2^n enumeration of the paired sign-flip test (two-sided, mean stat).
inline double perm_test_reference(const std::vector<double>& diffs) {
  const size_t n = diffs.size();
  double obs = 0.0;
  for (double d : diffs) obs += d;
  obs = std::abs(obs / static_cast<double>(n));
  const uint64_t total = uint64_t{1} << n;
  uint64_t count = 0;
  for (uint64_t mask = 0; mask < total; ++mask) {
    double stat = 0.0;
    for (size_t i = 0; i < n; ++i) stat += (mask >> i) & 1 ? -diffs[i] : diffs[i];
    if (std::abs(stat / static_cast<double>(n)) >= obs) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(total);
}

// PLV straight from Eq. 2.3 given two phase traces flattened over (n, t).
inline double plv_reference(const std::vector<double>& phi_a, const std::vector<double>& phi_b) {
  double re = 0.0, im = 0.0;
  for (size_t i = 0; i < phi_a.size(); ++i) {
    re += std::cos(phi_a[i] - phi_b[i]);
    im += std::sin(phi_a[i] - phi_b[i]);
  }
  const double m = static_cast<double>(phi_a.size());
  return std::sqrt((re / m) * (re / m) + (im / m) * (im / m));
}

}  // namespace oracle
