#pragma once

#include <complex>
#include <vector>

namespace fcdn {

// Complex DFT, forward: X[j] = sum_t x[t] exp(-2*pi*i*j*t/n).
std::vector<std::complex<double>> fft(const std::vector<std::complex<double>>& x);

// Inverse DFT scaled by 1/n, so ifft(fft(x)) == x.
std::vector<std::complex<double>> ifft(const std::vector<std::complex<double>>& x);

// Analytic signal of a real sequence (frequency-domain Hilbert transform):
// keep DC and Nyquist, double positive frequencies, zero negatives.
std::vector<std::complex<double>> analytic_signal(const std::vector<double>& x);

}  // namespace fcdn
