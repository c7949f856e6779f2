#pragma once

#include <cmath>
#include <vector>

#include "fcdn/tensor.hpp"

namespace fcdn {

// Bias-corrected Adam over a fixed parameter list. Defaults follow the
// common convention (beta1 0.9, beta2 0.999, eps 1e-8).
template <typename S>
class AdamT {
 public:
  AdamT(std::vector<TensorT<S>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i]->size(), 0.0);
      v_[i].assign(params_[i]->size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      const auto& g = p.grad();
      if (g.size() != p.size()) throw std::invalid_argument("adam: gradient shape mismatch");
      for (size_t j = 0; j < p.size(); ++j) {
        const double gj = g[j];
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * gj;
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * gj * gj;
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        p.data()[j] -= static_cast<S>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  long step_count() const { return t_; }

 private:
  std::vector<TensorT<S>*> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_{0};
};

using Adam = AdamT<float>;

}  // namespace fcdn
