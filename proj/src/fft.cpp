#include "fcdn/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <stdexcept>

namespace fcdn {

namespace {

// One cached plan pair per length. Buffers are owned alongside the plans and
// reused; everything here is single-threaded.
struct PlanPair {
  fftw_plan forward{nullptr};
  fftw_plan inverse{nullptr};
  fftw_complex* in{nullptr};
  fftw_complex* out{nullptr};
  size_t n{0};

  explicit PlanPair(size_t len) : n(len) {
    in = fftw_alloc_complex(n);
    out = fftw_alloc_complex(n);
    forward = fftw_plan_dft_1d(static_cast<int>(n), in, out, FFTW_FORWARD, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_1d(static_cast<int>(n), in, out, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~PlanPair() {
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
    fftw_free(in);
    fftw_free(out);
  }
  PlanPair(const PlanPair&) = delete;
  PlanPair& operator=(const PlanPair&) = delete;
};

PlanPair& plan_for(size_t n) {
  static std::map<size_t, std::unique_ptr<PlanPair>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    it = cache.emplace(n, std::make_unique<PlanPair>(n)).first;
  }
  return *it->second;
}

std::vector<std::complex<double>> run(const std::vector<std::complex<double>>& x,
                                      bool forward) {
  if (x.empty()) throw std::invalid_argument("fft of empty sequence");
  PlanPair& p = plan_for(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    p.in[i][0] = x[i].real();
    p.in[i][1] = x[i].imag();
  }
  fftw_execute(forward ? p.forward : p.inverse);
  std::vector<std::complex<double>> y(x.size());
  const double scale = forward ? 1.0 : 1.0 / static_cast<double>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    y[i] = {p.out[i][0] * scale, p.out[i][1] * scale};
  }
  return y;
}

}  // namespace

std::vector<std::complex<double>> fft(const std::vector<std::complex<double>>& x) {
  return run(x, true);
}

std::vector<std::complex<double>> ifft(const std::vector<std::complex<double>>& x) {
  return run(x, false);
}

std::vector<std::complex<double>> analytic_signal(const std::vector<double>& x) {
  const size_t n = x.size();
  if (n < 4) throw std::invalid_argument("analytic signal needs at least 4 samples");
  std::vector<std::complex<double>> xc(n);
  for (size_t i = 0; i < n; ++i) xc[i] = {x[i], 0.0};
  auto spec = fft(xc);

  const size_t half = n / 2;
  for (size_t j = 1; j < half; ++j) spec[j] *= 2.0;
  if (n % 2 == 0) {
    // spec[half] is the Nyquist bin, kept as is.
    for (size_t j = half + 1; j < n; ++j) spec[j] = 0.0;
  } else {
    spec[half] *= 2.0;
    for (size_t j = half + 1; j < n; ++j) spec[j] = 0.0;
  }
  return ifft(spec);
}

}  // namespace fcdn
