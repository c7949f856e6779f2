#pragma once

#include <functional>

#include "fcdn/rng.hpp"
#include "fcdn/tensor.hpp"

namespace fcdn {

// Compares the reverse-mode gradient of a deterministic scalar computation
// against central differences (f(x+h) - f(x-h)) / 2h and returns the worst
// relative error, |fd - grad| / max(1, |fd|, |grad|).
//
// `f` must rebuild the computation from the current parameter values on
// every call (dropout in eval mode; no other stochastic state). For large
// parameters only `samples_per_param` coordinates are probed (seeded).
template <typename S>
double grad_check(const std::function<TensorT<S>()>& f, std::vector<TensorT<S>*> params,
                  double h = 1e-5, size_t samples_per_param = 8, uint64_t seed = 7) {
  static_assert(sizeof(S) == 8, "grad_check requires 64-bit tensors");
  for (auto* p : params) p->zero_grad();
  TensorT<S> out = f();
  if (f().item() != out.item()) {
    throw std::invalid_argument("grad_check requires a deterministic computation");
  }
  out.backward();
  std::vector<std::vector<S>> analytic(params.size());
  for (size_t i = 0; i < params.size(); ++i) analytic[i] = params[i]->grad();

  Rng rng(seed);
  double worst = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    std::vector<size_t> coords;
    if (p.size() <= samples_per_param) {
      for (size_t j = 0; j < p.size(); ++j) coords.push_back(j);
    } else {
      for (size_t s = 0; s < samples_per_param; ++s) {
        coords.push_back(static_cast<size_t>(rng.index(p.size())));
      }
    }
    for (size_t j : coords) {
      const S saved = p.data()[j];
      p.data()[j] = saved + static_cast<S>(h);
      const double f_plus = static_cast<double>(f().item());
      p.data()[j] = saved - static_cast<S>(h);
      const double f_minus = static_cast<double>(f().item());
      p.data()[j] = saved;
      const double fd = (f_plus - f_minus) / (2.0 * h);
      const double an = analytic[i][j];
      const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace fcdn
