#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fcdn/types.hpp"

namespace fcdn {

// Reverse-mode autodiff toggle. Ops record the graph only while enabled
// (and some input requires grad); NoGradGuard turns recording off so eval
// forwards free intermediates as they go.
inline bool& autograd_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool previous;
  NoGradGuard() : previous(autograd_enabled()) { autograd_enabled() = false; }
  ~NoGradGuard() { autograd_enabled() = previous; }
};

// Shaped dense array with an optional gradient, the substrate for the
// network. Copying a TensorT copies the handle (both refer to one node);
// use clone() for a value copy.
template <typename S>
class TensorT {
 public:
  struct Node {
    std::vector<size_t> shape;
    std::vector<S> values;
    std::vector<S> grad;  // allocated on demand, same length as values
    bool requires_grad{false};
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;  // pulls this->grad into parents

    size_t size() const { return values.size(); }
    void ensure_grad() {
      if (grad.size() != values.size()) grad.assign(values.size(), S(0));
    }
  };

  TensorT() : node_(std::make_shared<Node>()) {}

  explicit TensorT(std::vector<size_t> shape, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->values.assign(shape_size(node_->shape), S(0));
    node_->requires_grad = requires_grad;
  }

  static TensorT from_values(std::vector<size_t> shape, std::vector<S> values,
                             bool requires_grad = false) {
    if (values.size() != shape_size(shape)) {
      throw std::invalid_argument("value count does not match shape");
    }
    TensorT t;
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static TensorT scalar(S v) { return from_values({1}, {v}); }

  const std::vector<size_t>& shape() const { return node_->shape; }
  size_t rank() const { return node_->shape.size(); }
  size_t size() const { return node_->values.size(); }
  size_t extent(size_t dim) const { return node_->shape.at(dim); }

  S* data() { return node_->values.data(); }
  const S* data() const { return node_->values.data(); }
  std::vector<S>& values() { return node_->values; }
  const std::vector<S>& values() const { return node_->values; }

  S item() const {
    if (size() != 1) throw std::invalid_argument("item() requires a scalar tensor");
    return node_->values[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  std::vector<S>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->values.size(), S(0)); }

  // Value copy with no graph history.
  TensorT detach() const { return from_values(shape(), node_->values, false); }
  TensorT clone_as_parameter() const { return from_values(shape(), node_->values, true); }

  // Backpropagates from this scalar through the recorded graph,
  // accumulating into .grad of every tensor that requires grad.
  void backward() {
    if (size() != 1) throw std::invalid_argument("backward() requires a scalar output");
    std::vector<Node*> order;
    std::vector<Node*> visited;
    // Iterative DFS postorder: parents first, children later; then walk the
    // list in reverse so each node fires before the nodes it depends on.
    std::function<void(Node*)> dfs = [&](Node* n) {
      for (Node* v : visited) {
        if (v == n) return;
      }
      visited.push_back(n);
      for (auto& p : n->parents) dfs(p.get());
      order.push_back(n);
    };
    dfs(node_.get());
    node_->ensure_grad();
    node_->grad[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backprop) (*it)->backprop();
    }
  }

  std::shared_ptr<Node> node() const { return node_; }

  static size_t shape_size(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t e : shape) n *= e;
    return n;
  }

  // Builds a result tensor, wiring parents and the backward closure only
  // when the graph is being recorded. Every op funnels through here, which
  // is also where the all-finite invariant is enforced.
  static TensorT make(std::vector<size_t> shape, std::vector<S> values, const char* op_name,
                      std::vector<TensorT> inputs,
                      std::function<void(Node&, std::vector<std::shared_ptr<Node>>&)> backprop) {
    for (S v : values) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw NumericError(std::string("non-finite value produced by ") + op_name);
      }
    }
    TensorT out = from_values(std::move(shape), std::move(values));
    bool needs = false;
    if (autograd_enabled()) {
      for (const auto& in : inputs) needs = needs || in.requires_grad();
    }
    if (needs) {
      out.node_->requires_grad = true;
      for (const auto& in : inputs) out.node_->parents.push_back(in.node_);
      Node* self = out.node_.get();
      out.node_->backprop = [self, fn = std::move(backprop)]() mutable {
        for (auto& p : self->parents) p->ensure_grad();
        fn(*self, self->parents);
      };
    }
    return out;
  }

 private:
  std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;

// ---- elementwise and reduction primitives -------------------------------

template <typename S, typename F, typename DF>
TensorT<S> unary_op(const TensorT<S>& x, const char* name, F f, DF df) {
  std::vector<S> out(x.size());
  const S* xv = x.data();
  for (size_t i = 0; i < x.size(); ++i) out[i] = f(xv[i]);
  auto xs = x.node();
  return TensorT<S>::make(
      x.shape(), std::move(out), name, {x},
      [xs, df](typename TensorT<S>::Node& self, std::vector<std::shared_ptr<typename TensorT<S>::Node>>& parents) {
        auto& g = parents[0]->grad;
        for (size_t i = 0; i < self.values.size(); ++i) {
          g[i] += self.grad[i] * df(xs->values[i], self.values[i]);
        }
      });
}

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
  std::vector<S> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return TensorT<S>::make(a.shape(), std::move(out), "add", {a, b},
                          [](auto& self, auto& parents) {
                            for (size_t i = 0; i < self.values.size(); ++i) {
                              parents[0]->grad[i] += self.grad[i];
                              parents[1]->grad[i] += self.grad[i];
                            }
                          });
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("sub: shape mismatch");
  std::vector<S> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return TensorT<S>::make(a.shape(), std::move(out), "sub", {a, b},
                          [](auto& self, auto& parents) {
                            for (size_t i = 0; i < self.values.size(); ++i) {
                              parents[0]->grad[i] += self.grad[i];
                              parents[1]->grad[i] -= self.grad[i];
                            }
                          });
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("mul: shape mismatch");
  std::vector<S> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto an = a.node();
  auto bn = b.node();
  return TensorT<S>::make(a.shape(), std::move(out), "mul", {a, b},
                          [an, bn](auto& self, auto& parents) {
                            for (size_t i = 0; i < self.values.size(); ++i) {
                              parents[0]->grad[i] += self.grad[i] * bn->values[i];
                              parents[1]->grad[i] += self.grad[i] * an->values[i];
                            }
                          });
}

template <typename S>
TensorT<S> scale(const TensorT<S>& x, double c) {
  return unary_op(
      x, "scale", [c](S v) { return static_cast<S>(v * c); },
      [c](S, S) { return static_cast<S>(c); });
}

template <typename S>
TensorT<S> sum(const TensorT<S>& x) {
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x.data()[i]);
  return TensorT<S>::make({1}, {static_cast<S>(acc)}, "sum", {x},
                          [](auto& self, auto& parents) {
                            for (auto& g : parents[0]->grad) g += self.grad[0];
                          });
}

template <typename S>
TensorT<S> mean(const TensorT<S>& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x.data()[i]);
  return TensorT<S>::make({1}, {static_cast<S>(acc * inv)}, "mean", {x},
                          [inv](auto& self, auto& parents) {
                            const S g = self.grad[0] * static_cast<S>(inv);
                            for (auto& pg : parents[0]->grad) pg += g;
                          });
}

template <typename S>
TensorT<S> elu(const TensorT<S>& x) {
  return unary_op(
      x, "elu", [](S v) { return v > S(0) ? v : static_cast<S>(std::expm1(static_cast<double>(v))); },
      [](S v, S y) { return v > S(0) ? S(1) : y + S(1); });
}

template <typename S>
TensorT<S> gelu(const TensorT<S>& x) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  return unary_op(
      x, "gelu",
      [](S v) {
        const double xv = static_cast<double>(v);
        return static_cast<S>(0.5 * xv * (1.0 + std::erf(xv * kInvSqrt2)));
      },
      [](S v, S) {
        const double xv = static_cast<double>(v);
        const double cdf = 0.5 * (1.0 + std::erf(xv * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv * xv);
        return static_cast<S>(cdf + xv * pdf);
      });
}

// Reshape (copies; sizes must agree).
template <typename S>
TensorT<S> reshape(const TensorT<S>& x, std::vector<size_t> shape) {
  if (TensorT<S>::shape_size(shape) != x.size()) {
    throw std::invalid_argument("reshape: element count mismatch");
  }
  std::vector<S> out = x.values();
  return TensorT<S>::make(std::move(shape), std::move(out), "reshape", {x},
                          [](auto& self, auto& parents) {
                            for (size_t i = 0; i < self.values.size(); ++i) {
                              parents[0]->grad[i] += self.grad[i];
                            }
                          });
}

namespace detail {

inline std::vector<size_t> strides_of(const std::vector<size_t>& shape) {
  std::vector<size_t> s(shape.size(), 1);
  for (size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

}  // namespace detail

// Permute axes (copies into contiguous layout).
template <typename S>
TensorT<S> permute(const TensorT<S>& x, const std::vector<size_t>& axes) {
  if (axes.size() != x.rank()) throw std::invalid_argument("permute: axis count mismatch");
  std::vector<size_t> out_shape(axes.size());
  for (size_t i = 0; i < axes.size(); ++i) out_shape[i] = x.shape().at(axes[i]);
  const auto in_strides = detail::strides_of(x.shape());
  const auto out_strides = detail::strides_of(out_shape);
  std::vector<size_t> src_stride(axes.size());
  for (size_t i = 0; i < axes.size(); ++i) src_stride[i] = in_strides[axes[i]];

  std::vector<S> out(x.size());
  const size_t rank = axes.size();
  std::vector<size_t> idx(rank, 0);
  for (size_t o = 0; o < out.size(); ++o) {
    size_t src = 0;
    size_t rem = o;
    for (size_t d = 0; d < rank; ++d) {
      idx[d] = rem / out_strides[d];
      rem %= out_strides[d];
      src += idx[d] * src_stride[d];
    }
    out[o] = x.data()[src];
  }
  return TensorT<S>::make(std::move(out_shape), std::move(out), "permute", {x},
                          [out_strides, src_stride, rank](auto& self, auto& parents) {
                            for (size_t o = 0; o < self.values.size(); ++o) {
                              size_t src = 0;
                              size_t rem = o;
                              for (size_t d = 0; d < rank; ++d) {
                                src += (rem / out_strides[d]) * src_stride[d];
                                rem %= out_strides[d];
                              }
                              parents[0]->grad[src] += self.grad[o];
                            }
                          });
}

// x[..., d_in] @ w[d_in, d_out] + b[d_out], leading dims collapsed to rows.
template <typename S>
TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  if (w.rank() != 2) throw std::invalid_argument("linear: weight must be rank 2");
  const size_t d_in = w.extent(0);
  const size_t d_out = w.extent(1);
  if (x.rank() < 1 || x.shape().back() != d_in) {
    throw std::invalid_argument("linear: input feature dim mismatch");
  }
  if (b.size() != d_out) throw std::invalid_argument("linear: bias dim mismatch");
  const size_t rows = x.size() / d_in;

  std::vector<S> out(rows * d_out);
  const S* xv = x.data();
  const S* wv = w.data();
  const S* bv = b.data();
  for (size_t r = 0; r < rows; ++r) {
    S* orow = out.data() + r * d_out;
    for (size_t j = 0; j < d_out; ++j) orow[j] = bv[j];
    const S* xrow = xv + r * d_in;
    for (size_t i = 0; i < d_in; ++i) {
      const S xi = xrow[i];
      const S* wrow = wv + i * d_out;
      for (size_t j = 0; j < d_out; ++j) orow[j] += xi * wrow[j];
    }
  }
  std::vector<size_t> out_shape = x.shape();
  out_shape.back() = d_out;

  auto xn = x.node();
  auto wn = w.node();
  return TensorT<S>::make(
      std::move(out_shape), std::move(out), "linear", {x, w, b},
      [xn, wn, rows, d_in, d_out](auto& self, auto& parents) {
        auto& gx = parents[0]->grad;
        auto& gw = parents[1]->grad;
        auto& gb = parents[2]->grad;
        for (size_t r = 0; r < rows; ++r) {
          const S* grow = self.grad.data() + r * d_out;
          const S* xrow = xn->values.data() + r * d_in;
          for (size_t j = 0; j < d_out; ++j) gb[j] += grow[j];
          for (size_t i = 0; i < d_in; ++i) {
            const S* wrow = wn->values.data() + i * d_out;
            S acc = S(0);
            for (size_t j = 0; j < d_out; ++j) {
              acc += grow[j] * wrow[j];
              gw[i * d_out + j] += xrow[i] * grow[j];
            }
            gx[r * d_in + i] += acc;
          }
        }
      });
}

// Batched matmul: a[B, M, K] @ b[B, K, N] -> [B, M, N].
template <typename S>
TensorT<S> bmm(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.extent(0) != b.extent(0) ||
      a.extent(2) != b.extent(1)) {
    throw std::invalid_argument("bmm: incompatible shapes");
  }
  const size_t batch = a.extent(0), m = a.extent(1), kd = a.extent(2), n = b.extent(2);
  std::vector<S> out(batch * m * n, S(0));
  for (size_t bi = 0; bi < batch; ++bi) {
    const S* av = a.data() + bi * m * kd;
    const S* bv = b.data() + bi * kd * n;
    S* ov = out.data() + bi * m * n;
    for (size_t i = 0; i < m; ++i) {
      for (size_t k = 0; k < kd; ++k) {
        const S aik = av[i * kd + k];
        const S* brow = bv + k * n;
        S* orow = ov + i * n;
        for (size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return TensorT<S>::make(
      {batch, m, n}, std::move(out), "bmm", {a, b},
      [an, bn, batch, m, kd, n](auto& self, auto& parents) {
        for (size_t bi = 0; bi < batch; ++bi) {
          const S* gv = self.grad.data() + bi * m * n;
          const S* av = an->values.data() + bi * m * kd;
          const S* bv = bn->values.data() + bi * kd * n;
          S* ga = parents[0]->grad.data() + bi * m * kd;
          S* gb = parents[1]->grad.data() + bi * kd * n;
          for (size_t i = 0; i < m; ++i) {
            for (size_t k = 0; k < kd; ++k) {
              const S* brow = bv + k * n;
              const S* grow = gv + i * n;
              S acc = S(0);
              for (size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[i * kd + k] += acc;
            }
          }
          for (size_t k = 0; k < kd; ++k) {
            for (size_t j = 0; j < n; ++j) {
              S acc = S(0);
              for (size_t i = 0; i < m; ++i) acc += av[i * kd + k] * gv[i * n + j];
              gb[k * n + j] += acc;
            }
          }
        }
      });
}

// Softmax over the last dim (max-subtracted).
template <typename S>
TensorT<S> softmax_lastdim(const TensorT<S>& x) {
  if (x.rank() < 1) throw std::invalid_argument("softmax: need rank >= 1");
  const size_t d = x.shape().back();
  const size_t rows = x.size() / d;
  std::vector<S> out(x.size());
  for (size_t r = 0; r < rows; ++r) {
    const S* xr = x.data() + r * d;
    S* yr = out.data() + r * d;
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < d; ++j) mx = std::max(mx, static_cast<double>(xr[j]));
    double denom = 0.0;
    for (size_t j = 0; j < d; ++j) denom += std::exp(static_cast<double>(xr[j]) - mx);
    for (size_t j = 0; j < d; ++j) {
      yr[j] = static_cast<S>(std::exp(static_cast<double>(xr[j]) - mx) / denom);
    }
  }
  return TensorT<S>::make(x.shape(), std::move(out), "softmax", {x},
                          [rows, d](auto& self, auto& parents) {
                            for (size_t r = 0; r < rows; ++r) {
                              const S* y = self.values.data() + r * d;
                              const S* g = self.grad.data() + r * d;
                              S dot = S(0);
                              for (size_t j = 0; j < d; ++j) dot += y[j] * g[j];
                              S* px = parents[0]->grad.data() + r * d;
                              for (size_t j = 0; j < d; ++j) px[j] += y[j] * (g[j] - dot);
                            }
                          });
}

// Layer norm over the last dim with affine parameters.
template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                      double eps = 1e-5) {
  const size_t d = x.shape().back();
  if (gamma.size() != d || beta.size() != d) {
    throw std::invalid_argument("layer_norm: affine parameter dim mismatch");
  }
  const size_t rows = x.size() / d;
  std::vector<S> out(x.size());
  std::vector<S> xhat(x.size());
  std::vector<S> inv_std(rows);
  for (size_t r = 0; r < rows; ++r) {
    const S* xr = x.data() + r * d;
    double m = 0.0;
    for (size_t j = 0; j < d; ++j) m += xr[j];
    m /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) var += (xr[j] - m) * (xr[j] - m);
    var /= static_cast<double>(d);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<S>(istd);
    for (size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = static_cast<S>((xr[j] - m) * istd);
      out[r * d + j] = gamma.data()[j] * xhat[r * d + j] + beta.data()[j];
    }
  }
  auto gn = gamma.node();
  return TensorT<S>::make(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [gn, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](auto& self, auto& parents) {
        for (size_t r = 0; r < rows; ++r) {
          const S* g = self.grad.data() + r * d;
          const S* xh = xhat.data() + r * d;
          S* gx = parents[0]->grad.data() + r * d;
          S* ggamma = parents[1]->grad.data();
          S* gbeta = parents[2]->grad.data();
          double sum_gh = 0.0, sum_gh_xh = 0.0;
          for (size_t j = 0; j < d; ++j) {
            const double gh = static_cast<double>(g[j]) * gn->values[j];
            sum_gh += gh;
            sum_gh_xh += gh * xh[j];
            ggamma[j] += g[j] * xh[j];
            gbeta[j] += g[j];
          }
          const double inv_d = 1.0 / static_cast<double>(d);
          for (size_t j = 0; j < d; ++j) {
            const double gh = static_cast<double>(g[j]) * gn->values[j];
            gx[j] += static_cast<S>(inv_std[r] * (gh - inv_d * sum_gh - xh[j] * inv_d * sum_gh_xh));
          }
        }
      });
}

// Mean over the batch of -log softmax(logits)[label].
template <typename S>
TensorT<S> cross_entropy(const TensorT<S>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be [B, C]");
  const size_t batch = logits.extent(0);
  const size_t classes = logits.extent(1);
  if (labels.size() != batch) throw std::invalid_argument("cross_entropy: label count mismatch");
  std::vector<S> probs(logits.size());
  double loss = 0.0;
  for (size_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<size_t>(y) >= classes) {
      throw std::invalid_argument("cross_entropy: label out of range");
    }
    const S* row = logits.data() + b * classes;
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < classes; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double denom = 0.0;
    for (size_t j = 0; j < classes; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    for (size_t j = 0; j < classes; ++j) {
      probs[b * classes + j] = static_cast<S>(std::exp(static_cast<double>(row[j]) - mx) / denom);
    }
    loss -= (static_cast<double>(row[y]) - mx - std::log(denom));
  }
  loss /= static_cast<double>(batch);
  std::vector<int> labels_copy(labels.begin(), labels.end());
  return TensorT<S>::make(
      {1}, {static_cast<S>(loss)}, "cross_entropy", {logits},
      [probs = std::move(probs), labels_copy = std::move(labels_copy), batch, classes](
          auto& self, auto& parents) {
        const S g = self.grad[0] / static_cast<S>(batch);
        for (size_t b = 0; b < batch; ++b) {
          S* row = parents[0]->grad.data() + b * classes;
          for (size_t j = 0; j < classes; ++j) {
            const S onehot = (static_cast<size_t>(labels_copy[b]) == j) ? S(1) : S(0);
            row[j] += g * (probs[b * classes + j] - onehot);
          }
        }
      });
}

}  // namespace fcdn
