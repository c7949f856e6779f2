#pragma once

#include <algorithm>
#include <string>

#include "fcdn/blas.hpp"
#include "fcdn/rng.hpp"
#include "fcdn/tensor.hpp"

namespace fcdn {

// Temporal convolution: kernels span time only (height 1), every electrode
// row is processed identically. x is [C_in, K, T] or [B, C_in, K, T];
// kernels are [C_out, C_in, 1, W] (a rank-3 [C_out, C_in, W] is accepted).
// padding is "valid" (T' = T - W + 1) or "same" (T' = T, zero padded).
template <typename S>
TensorT<S> conv_temporal(const TensorT<S>& x, const TensorT<S>& kernels, size_t stride = 1,
                         const std::string& padding = "valid") {
  if (stride == 0) throw std::invalid_argument("conv_temporal: stride must be >= 1");
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) throw std::invalid_argument("conv_temporal: input must be rank 3 or 4");
  if (kernels.rank() != 4 && kernels.rank() != 3) {
    throw std::invalid_argument("conv_temporal: kernels must be rank 3 or 4");
  }
  if (kernels.rank() == 4 && kernels.extent(2) != 1) {
    throw std::invalid_argument("conv_temporal: kernel height must be 1");
  }
  const size_t batch = batched ? x.extent(0) : 1;
  const size_t c_in = x.extent(batched ? 1 : 0);
  const size_t rows_k = x.extent(batched ? 2 : 1);
  const size_t t_in = x.extent(batched ? 3 : 2);
  const size_t c_out = kernels.extent(0);
  const size_t width = kernels.extent(kernels.rank() - 1);
  if (kernels.extent(1) != c_in) throw std::invalid_argument("conv_temporal: C_in mismatch");

  size_t pad_left = 0, pad_right = 0;
  if (padding == "same") {
    pad_left = (width - 1) / 2;
    pad_right = width - 1 - pad_left;
  } else if (padding != "valid") {
    throw std::invalid_argument("conv_temporal: unknown padding mode " + padding);
  }
  const size_t t_pad = t_in + pad_left + pad_right;
  if (width > t_pad) throw std::invalid_argument("conv_temporal: kernel wider than (padded) input");
  const size_t t_out = (t_pad - width) / stride + 1;

  // Kernels form a (C_out x C_in*W) matrix; each electrode row becomes one
  // im2col GEMM. ldc = K*T' writes straight into the [B, C_out, K, T']
  // output without a scatter pass.
  const size_t patch_rows = c_in * width;
  std::vector<S> out(batch * c_out * rows_k * t_out, S(0));
  std::vector<S> padded(c_in * t_pad);
  std::vector<S> im2col(patch_rows * t_out);
  for (size_t b = 0; b < batch; ++b) {
    for (size_t k = 0; k < rows_k; ++k) {
      for (size_t ci = 0; ci < c_in; ++ci) {
        S* prow = padded.data() + ci * t_pad;
        std::fill(prow, prow + t_pad, S(0));
        const S* xrow = x.data() + ((b * c_in + ci) * rows_k + k) * t_in;
        std::copy(xrow, xrow + t_in, prow + pad_left);
      }
      for (size_t ci = 0; ci < c_in; ++ci) {
        for (size_t w = 0; w < width; ++w) {
          S* erow = im2col.data() + (ci * width + w) * t_out;
          const S* prow = padded.data() + ci * t_pad + w;
          if (stride == 1) {
            std::copy(prow, prow + t_out, erow);
          } else {
            for (size_t t = 0; t < t_out; ++t) erow[t] = prow[t * stride];
          }
        }
      }
      detail::gemm(false, false, c_out, t_out, patch_rows, S(1), kernels.data(), patch_rows,
                   im2col.data(), t_out, S(0),
                   out.data() + ((b * c_out) * rows_k + k) * t_out, rows_k * t_out);
    }
  }

  std::vector<size_t> out_shape = batched
                                      ? std::vector<size_t>{batch, c_out, rows_k, t_out}
                                      : std::vector<size_t>{c_out, rows_k, t_out};
  auto xn = x.node();
  auto kn = kernels.node();
  return TensorT<S>::make(
      std::move(out_shape), std::move(out), "conv_temporal", {x, kernels},
      [xn, kn, batch, c_in, rows_k, t_in, c_out, width, pad_left, t_pad, t_out, stride,
       patch_rows](auto& self, auto& parents) {
        std::vector<S> padded(c_in * t_pad);
        std::vector<S> im2col(patch_rows * t_out);
        std::vector<S> col_grad(patch_rows * t_out);
        for (size_t b = 0; b < batch; ++b) {
          for (size_t k = 0; k < rows_k; ++k) {
            for (size_t ci = 0; ci < c_in; ++ci) {
              S* prow = padded.data() + ci * t_pad;
              std::fill(prow, prow + t_pad, S(0));
              const S* xrow = xn->values.data() + ((b * c_in + ci) * rows_k + k) * t_in;
              std::copy(xrow, xrow + t_in, prow + pad_left);
            }
            for (size_t ci = 0; ci < c_in; ++ci) {
              for (size_t w = 0; w < width; ++w) {
                S* erow = im2col.data() + (ci * width + w) * t_out;
                const S* prow = padded.data() + ci * t_pad + w;
                if (stride == 1) {
                  std::copy(prow, prow + t_out, erow);
                } else {
                  for (size_t t = 0; t < t_out; ++t) erow[t] = prow[t * stride];
                }
              }
            }
            const S* grad_block = self.grad.data() + ((b * c_out) * rows_k + k) * t_out;
            // d_kernels += G * im2col^T, accumulated across (b, k).
            detail::gemm(false, true, c_out, patch_rows, t_out, S(1), grad_block,
                         rows_k * t_out, im2col.data(), t_out, S(1),
                         parents[1]->grad.data(), patch_rows);
            // d_im2col = kernels^T * G, scattered back through the padding.
            detail::gemm(true, false, patch_rows, t_out, c_out, S(1), kn->values.data(),
                         patch_rows, grad_block, rows_k * t_out, S(0), col_grad.data(), t_out);
            std::fill(padded.begin(), padded.end(), S(0));  // reuse as pad_grad
            for (size_t ci = 0; ci < c_in; ++ci) {
              for (size_t w = 0; w < width; ++w) {
                const S* erow = col_grad.data() + (ci * width + w) * t_out;
                S* prow = padded.data() + ci * t_pad + w;
                if (stride == 1) {
                  for (size_t t = 0; t < t_out; ++t) prow[t] += erow[t];
                } else {
                  for (size_t t = 0; t < t_out; ++t) prow[t * stride] += erow[t];
                }
              }
            }
            for (size_t ci = 0; ci < c_in; ++ci) {
              S* gx = parents[0]->grad.data() + ((b * c_in + ci) * rows_k + k) * t_in;
              const S* pg = padded.data() + ci * t_pad + pad_left;
              for (size_t t = 0; t < t_in; ++t) gx[t] += pg[t];
            }
          }
        }
      });
}

// Average pooling along time with window == stride.
template <typename S>
TensorT<S> avgpool_temporal(const TensorT<S>& x, size_t pool_width) {
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) throw std::invalid_argument("avgpool: input must be rank 3 or 4");
  const size_t batch = batched ? x.extent(0) : 1;
  const size_t chans = x.extent(batched ? 1 : 0);
  const size_t rows_k = x.extent(batched ? 2 : 1);
  const size_t t_in = x.extent(batched ? 3 : 2);
  if (pool_width == 0 || pool_width > t_in) {
    throw std::invalid_argument("avgpool: pool width outside [1, T]");
  }
  const size_t t_out = (t_in - pool_width) / pool_width + 1;
  const double inv = 1.0 / static_cast<double>(pool_width);

  std::vector<S> out(batch * chans * rows_k * t_out);
  for (size_t r = 0; r < batch * chans * rows_k; ++r) {
    const S* xrow = x.data() + r * t_in;
    S* orow = out.data() + r * t_out;
    for (size_t t = 0; t < t_out; ++t) {
      double acc = 0.0;
      for (size_t j = 0; j < pool_width; ++j) acc += xrow[t * pool_width + j];
      orow[t] = static_cast<S>(acc * inv);
    }
  }
  std::vector<size_t> out_shape = batched
                                      ? std::vector<size_t>{batch, chans, rows_k, t_out}
                                      : std::vector<size_t>{chans, rows_k, t_out};
  const size_t n_rows = batch * chans * rows_k;
  return TensorT<S>::make(std::move(out_shape), std::move(out), "avgpool_temporal", {x},
                          [n_rows, t_in, t_out, pool_width, inv](auto& self, auto& parents) {
                            for (size_t r = 0; r < n_rows; ++r) {
                              const S* grow = self.grad.data() + r * t_out;
                              S* gx = parents[0]->grad.data() + r * t_in;
                              for (size_t t = 0; t < t_out; ++t) {
                                const S g = static_cast<S>(grow[t] * inv);
                                for (size_t j = 0; j < pool_width; ++j) gx[t * pool_width + j] += g;
                              }
                            }
                          });
}

// Batch normalization over [B, C, K, T] with per-feature-map statistics.
// Training mode normalizes with batch statistics and updates the running
// buffers; eval mode uses the running buffers.
template <typename S>
TensorT<S> batchnorm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                     std::vector<S>& running_mean, std::vector<S>& running_var, bool training,
                     double momentum = 0.1, double eps = 1e-5) {
  if (x.rank() != 4) throw std::invalid_argument("batchnorm: input must be [B, C, K, T]");
  const size_t batch = x.extent(0), chans = x.extent(1), rows_k = x.extent(2), t_len = x.extent(3);
  if (gamma.size() != chans || beta.size() != chans || running_mean.size() != chans ||
      running_var.size() != chans) {
    throw std::invalid_argument("batchnorm: parameter size mismatch");
  }
  const size_t per_map = batch * rows_k * t_len;

  std::vector<S> out(x.size());
  std::vector<S> xhat;
  std::vector<S> inv_std(chans);
  std::vector<S> mean_c(chans);
  if (training) xhat.resize(x.size());

  for (size_t c = 0; c < chans; ++c) {
    double m, istd;
    if (training) {
      double acc = 0.0;
      for (size_t b = 0; b < batch; ++b) {
        const S* row = x.data() + ((b * chans + c) * rows_k) * t_len;
        for (size_t i = 0; i < rows_k * t_len; ++i) acc += row[i];
      }
      m = acc / static_cast<double>(per_map);
      double var = 0.0;
      for (size_t b = 0; b < batch; ++b) {
        const S* row = x.data() + ((b * chans + c) * rows_k) * t_len;
        for (size_t i = 0; i < rows_k * t_len; ++i) var += (row[i] - m) * (row[i] - m);
      }
      var /= static_cast<double>(per_map);
      istd = 1.0 / std::sqrt(var + eps);
      const double unbias = per_map > 1 ? static_cast<double>(per_map) / (per_map - 1) : 1.0;
      running_mean[c] = static_cast<S>((1.0 - momentum) * running_mean[c] + momentum * m);
      running_var[c] = static_cast<S>((1.0 - momentum) * running_var[c] + momentum * var * unbias);
    } else {
      m = running_mean[c];
      istd = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
    }
    mean_c[c] = static_cast<S>(m);
    inv_std[c] = static_cast<S>(istd);
    const S g = gamma.data()[c];
    const S bta = beta.data()[c];
    for (size_t b = 0; b < batch; ++b) {
      const size_t base = ((b * chans + c) * rows_k) * t_len;
      const S* row = x.data() + base;
      S* orow = out.data() + base;
      for (size_t i = 0; i < rows_k * t_len; ++i) {
        const S xh = static_cast<S>((row[i] - m) * istd);
        if (training) xhat[base + i] = xh;
        orow[i] = g * xh + bta;
      }
    }
  }

  auto gn = gamma.node();
  auto xn = x.node();
  return TensorT<S>::make(
      x.shape(), std::move(out), "batchnorm", {x, gamma, beta},
      [gn, xn, xhat = std::move(xhat), inv_std = std::move(inv_std), mean_c = std::move(mean_c),
       batch, chans, rows_k, t_len, per_map, training](auto& self, auto& parents) {
        for (size_t c = 0; c < chans; ++c) {
          const S g = gn->values[c];
          if (training) {
            double sum_dy = 0.0, sum_dy_xh = 0.0;
            for (size_t b = 0; b < batch; ++b) {
              const size_t base = ((b * chans + c) * rows_k) * t_len;
              for (size_t i = 0; i < rows_k * t_len; ++i) {
                sum_dy += self.grad[base + i];
                sum_dy_xh += static_cast<double>(self.grad[base + i]) * xhat[base + i];
              }
            }
            parents[1]->grad[c] += static_cast<S>(sum_dy_xh);
            parents[2]->grad[c] += static_cast<S>(sum_dy);
            const double inv_n = 1.0 / static_cast<double>(per_map);
            for (size_t b = 0; b < batch; ++b) {
              const size_t base = ((b * chans + c) * rows_k) * t_len;
              for (size_t i = 0; i < rows_k * t_len; ++i) {
                const double dy = self.grad[base + i];
                parents[0]->grad[base + i] += static_cast<S>(
                    g * inv_std[c] * (dy - inv_n * sum_dy - xhat[base + i] * inv_n * sum_dy_xh));
              }
            }
          } else {
            double sum_dy = 0.0, sum_dy_xh = 0.0;
            const S scale_c = static_cast<S>(g * inv_std[c]);
            for (size_t b = 0; b < batch; ++b) {
              const size_t base = ((b * chans + c) * rows_k) * t_len;
              for (size_t i = 0; i < rows_k * t_len; ++i) {
                const double dy = self.grad[base + i];
                const double xh = (xn->values[base + i] - mean_c[c]) * inv_std[c];
                sum_dy += dy;
                sum_dy_xh += dy * xh;
                parents[0]->grad[base + i] += static_cast<S>(dy) * scale_c;
              }
            }
            parents[1]->grad[c] += static_cast<S>(sum_dy_xh);
            parents[2]->grad[c] += static_cast<S>(sum_dy);
          }
        }
      });
}

// Inverted dropout: kept activations are scaled by 1/(1-p) during training,
// eval mode is the identity.
template <typename S>
TensorT<S> dropout(const TensorT<S>& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0) || p >= 1.0) throw std::invalid_argument("dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) {
    return unary_op(
        x, "dropout", [](S v) { return v; }, [](S, S) { return S(1); });
  }
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  std::vector<S> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < p ? S(0) : keep_scale;
  std::vector<S> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x.data()[i] * mask[i];
  return TensorT<S>::make(x.shape(), std::move(out), "dropout", {x},
                          [mask = std::move(mask)](auto& self, auto& parents) {
                            for (size_t i = 0; i < self.values.size(); ++i) {
                              parents[0]->grad[i] += self.grad[i] * mask[i];
                            }
                          });
}

namespace detail {

// Cubic convolution kernel, a = -0.5 (Catmull-Rom family).
inline double cubic_kernel(double s) {
  constexpr double a = -0.5;
  s = std::abs(s);
  if (s <= 1.0) return ((a + 2.0) * s - (a + 3.0)) * s * s + 1.0;
  if (s < 2.0) return ((a * s - 5.0 * a) * s + 8.0 * a) * s - 4.0 * a;
  return 0.0;
}

struct ResizeTap {
  size_t idx[4];
  double w[4];
  bool exact;  // source coordinate hit a sample exactly (t == 0)
};

// Half-pixel-center sampling with clamp-to-edge.
inline std::vector<ResizeTap> resize_taps(size_t in_dim, size_t out_dim) {
  std::vector<ResizeTap> taps(out_dim);
  const double scale = static_cast<double>(in_dim) / static_cast<double>(out_dim);
  for (size_t i = 0; i < out_dim; ++i) {
    const double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    const double fl = std::floor(src);
    const double t = src - fl;
    const long i0 = static_cast<long>(fl);
    ResizeTap& tap = taps[i];
    tap.exact = (t == 0.0);
    for (int j = 0; j < 4; ++j) {
      const long raw = i0 - 1 + j;
      tap.idx[j] = static_cast<size_t>(std::clamp<long>(raw, 0, static_cast<long>(in_dim) - 1));
      tap.w[j] = cubic_kernel(t - static_cast<double>(j - 1));
    }
  }
  return taps;
}

// One 1-D cubic sample. Anchoring on the nearest-left tap keeps constant
// inputs and exact hits bit-exact (the four weights sum to 1).
template <typename S>
S cubic_eval(const ResizeTap& tap, const S* src, size_t stride) {
  const S x0 = src[tap.idx[0] * stride];
  const S x1 = src[tap.idx[1] * stride];
  const S x2 = src[tap.idx[2] * stride];
  const S x3 = src[tap.idx[3] * stride];
  if (tap.exact) return x1;
  return static_cast<S>(x1 + tap.w[0] * (x0 - x1) + tap.w[2] * (x2 - x1) + tap.w[3] * (x3 - x1));
}

template <typename S>
void cubic_backward(const ResizeTap& tap, S g, S* grad, size_t stride) {
  if (tap.exact) {
    grad[tap.idx[1] * stride] += g;
    return;
  }
  const double w1 = 1.0 - tap.w[0] - tap.w[2] - tap.w[3];
  grad[tap.idx[0] * stride] += static_cast<S>(g * tap.w[0]);
  grad[tap.idx[1] * stride] += static_cast<S>(g * w1);
  grad[tap.idx[2] * stride] += static_cast<S>(g * tap.w[2]);
  grad[tap.idx[3] * stride] += static_cast<S>(g * tap.w[3]);
}

}  // namespace detail

// Separable bicubic resize of the trailing two dims: [H, W] or [B, H, W].
template <typename S>
TensorT<S> bicubic_resize(const TensorT<S>& x, size_t out_h, size_t out_w) {
  const bool batched = x.rank() == 3;
  if (!batched && x.rank() != 2) throw std::invalid_argument("bicubic: input must be rank 2 or 3");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bicubic: output dims must be >= 1");
  const size_t batch = batched ? x.extent(0) : 1;
  const size_t in_h = x.extent(batched ? 1 : 0);
  const size_t in_w = x.extent(batched ? 2 : 1);
  if (in_h < 2 || in_w < 2) throw std::invalid_argument("bicubic: input dims must be >= 2");

  const auto row_taps = detail::resize_taps(in_h, out_h);
  const auto col_taps = detail::resize_taps(in_w, out_w);

  std::vector<S> out(batch * out_h * out_w);
  std::vector<S> mid(out_h * in_w);
  for (size_t b = 0; b < batch; ++b) {
    const S* src = x.data() + b * in_h * in_w;
    for (size_t i = 0; i < out_h; ++i) {  // vertical pass
      for (size_t j = 0; j < in_w; ++j) {
        mid[i * in_w + j] = detail::cubic_eval(row_taps[i], src + j, in_w);
      }
    }
    S* dst = out.data() + b * out_h * out_w;
    for (size_t i = 0; i < out_h; ++i) {  // horizontal pass
      const S* mrow = mid.data() + i * in_w;
      for (size_t j = 0; j < out_w; ++j) {
        dst[i * out_w + j] = detail::cubic_eval(col_taps[j], mrow, 1);
      }
    }
  }
  std::vector<size_t> out_shape = batched ? std::vector<size_t>{batch, out_h, out_w}
                                          : std::vector<size_t>{out_h, out_w};
  return TensorT<S>::make(
      std::move(out_shape), std::move(out), "bicubic_resize", {x},
      [row_taps, col_taps, batch, in_h, in_w, out_h, out_w](auto& self, auto& parents) {
        std::vector<S> mid_grad(out_h * in_w);
        for (size_t b = 0; b < batch; ++b) {
          std::fill(mid_grad.begin(), mid_grad.end(), S(0));
          const S* g = self.grad.data() + b * out_h * out_w;
          for (size_t i = 0; i < out_h; ++i) {
            S* mrow = mid_grad.data() + i * in_w;
            for (size_t j = 0; j < out_w; ++j) {
              detail::cubic_backward(col_taps[j], g[i * out_w + j], mrow, 1);
            }
          }
          S* gx = parents[0]->grad.data() + b * in_h * in_w;
          for (size_t i = 0; i < out_h; ++i) {
            for (size_t j = 0; j < in_w; ++j) {
              detail::cubic_backward(row_taps[i], mid_grad[i * in_w + j], gx + j, in_w);
            }
          }
        }
      });
}

// Affine map of [min, max] to [0, 255] per trailing 2-D plane; a constant
// plane maps to all 127.5. Values stay real (no quantization).
template <typename S>
TensorT<S> scale_0_255(const TensorT<S>& x) {
  if (x.rank() < 2) throw std::invalid_argument("scale_0_255: need rank >= 2");
  const size_t plane = x.extent(x.rank() - 2) * x.extent(x.rank() - 1);
  const size_t n_planes = x.size() / plane;

  std::vector<S> out(x.size());
  std::vector<size_t> arg_mn(n_planes), arg_mx(n_planes);
  std::vector<double> mins(n_planes), maxs(n_planes);
  for (size_t p = 0; p < n_planes; ++p) {
    const S* src = x.data() + p * plane;
    size_t a = 0, b = 0;
    for (size_t i = 1; i < plane; ++i) {
      if (src[i] < src[a]) a = i;
      if (src[i] > src[b]) b = i;
    }
    arg_mn[p] = a;
    arg_mx[p] = b;
    const double mn = src[a], mx = src[b];
    mins[p] = mn;
    maxs[p] = mx;
    S* dst = out.data() + p * plane;
    if (mx == mn) {
      std::fill(dst, dst + plane, static_cast<S>(127.5));
    } else {
      const double s = 255.0 / (mx - mn);
      for (size_t i = 0; i < plane; ++i) dst[i] = static_cast<S>((src[i] - mn) * s);
    }
  }
  auto xn = x.node();
  return TensorT<S>::make(
      x.shape(), std::move(out), "scale_0_255", {x},
      [xn, arg_mn = std::move(arg_mn), arg_mx = std::move(arg_mx), mins = std::move(mins),
       maxs = std::move(maxs), plane, n_planes](auto& self, auto& parents) {
        for (size_t p = 0; p < n_planes; ++p) {
          const double mn = mins[p], mx = maxs[p];
          if (mx == mn) continue;  // constant plane, zero gradient
          const double s = 255.0 / (mx - mn);
          const double s2 = s / (mx - mn);
          const S* g = self.grad.data() + p * plane;
          const S* xv = xn->values.data() + p * plane;
          S* gx = parents[0]->grad.data() + p * plane;
          double acc_mn = 0.0, acc_mx = 0.0;
          for (size_t i = 0; i < plane; ++i) {
            gx[i] += static_cast<S>(g[i] * s);
            acc_mn += static_cast<double>(g[i]) * (xv[i] - mx) * s2;
            acc_mx -= static_cast<double>(g[i]) * (xv[i] - mn) * s2;
          }
          gx[arg_mn[p]] += static_cast<S>(acc_mn);
          gx[arg_mx[p]] += static_cast<S>(acc_mx);
        }
      });
}

// Stack three [B, H, W] planes into [B, 3, H, W].
template <typename S>
TensorT<S> stack3(const TensorT<S>& a, const TensorT<S>& b, const TensorT<S>& c) {
  if (a.rank() != 3 || a.shape() != b.shape() || a.shape() != c.shape()) {
    throw std::invalid_argument("stack3: inputs must be three equal [B, H, W] tensors");
  }
  const size_t batch = a.extent(0), plane = a.extent(1) * a.extent(2);
  std::vector<S> out(3 * a.size());
  for (size_t bi = 0; bi < batch; ++bi) {
    std::copy(a.data() + bi * plane, a.data() + (bi + 1) * plane, out.data() + (bi * 3 + 0) * plane);
    std::copy(b.data() + bi * plane, b.data() + (bi + 1) * plane, out.data() + (bi * 3 + 1) * plane);
    std::copy(c.data() + bi * plane, c.data() + (bi + 1) * plane, out.data() + (bi * 3 + 2) * plane);
  }
  return TensorT<S>::make({batch, 3, a.extent(1), a.extent(2)}, std::move(out), "stack3",
                          {a, b, c}, [batch, plane](auto& self, auto& parents) {
                            for (size_t bi = 0; bi < batch; ++bi) {
                              for (size_t p = 0; p < 3; ++p) {
                                const S* g = self.grad.data() + (bi * 3 + p) * plane;
                                S* dst = parents[p]->grad.data() + bi * plane;
                                for (size_t i = 0; i < plane; ++i) dst[i] += g[i];
                              }
                            }
                          });
}

// [B, C, R, R] -> [B, P, C*p*p] non-overlapping patches in row-major grid
// order; within a patch the layout is (channel, row, col).
template <typename S>
TensorT<S> patchify(const TensorT<S>& x, size_t patch) {
  if (x.rank() != 4) throw std::invalid_argument("patchify: input must be [B, C, H, W]");
  const size_t batch = x.extent(0), chans = x.extent(1), h = x.extent(2), w = x.extent(3);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw std::invalid_argument("patchify: dims must be divisible by patch size");
  }
  const size_t gh = h / patch, gw = w / patch;
  const size_t n_patches = gh * gw;
  const size_t dim = chans * patch * patch;

  std::vector<S> out(batch * n_patches * dim);
  auto src_index = [=](size_t b, size_t c, size_t i, size_t j) {
    return ((b * chans + c) * h + i) * w + j;
  };
  for (size_t b = 0; b < batch; ++b) {
    for (size_t gy = 0; gy < gh; ++gy) {
      for (size_t gx = 0; gx < gw; ++gx) {
        S* dst = out.data() + (b * n_patches + gy * gw + gx) * dim;
        size_t o = 0;
        for (size_t c = 0; c < chans; ++c) {
          for (size_t py = 0; py < patch; ++py) {
            for (size_t px = 0; px < patch; ++px) {
              dst[o++] = x.data()[src_index(b, c, gy * patch + py, gx * patch + px)];
            }
          }
        }
      }
    }
  }
  return TensorT<S>::make(
      {batch, n_patches, dim}, std::move(out), "patchify", {x},
      [batch, chans, h, w, patch, gh, gw, n_patches, dim, src_index](auto& self, auto& parents) {
        for (size_t b = 0; b < batch; ++b) {
          for (size_t gy = 0; gy < gh; ++gy) {
            for (size_t gx = 0; gx < gw; ++gx) {
              const S* g = self.grad.data() + (b * n_patches + gy * gw + gx) * dim;
              size_t o = 0;
              for (size_t c = 0; c < chans; ++c) {
                for (size_t py = 0; py < patch; ++py) {
                  for (size_t px = 0; px < patch; ++px) {
                    parents[0]->grad[src_index(b, c, gy * patch + py, gx * patch + px)] += g[o++];
                  }
                }
              }
            }
          }
        }
      });
}

// Prepend the class and distillation tokens: [B, P, D] -> [B, P+2, D]
// (token order: class, distillation, patches).
template <typename S>
TensorT<S> prepend_tokens(const TensorT<S>& x, const TensorT<S>& class_token,
                          const TensorT<S>& distill_token) {
  if (x.rank() != 3) throw std::invalid_argument("prepend_tokens: input must be [B, P, D]");
  const size_t batch = x.extent(0), patches = x.extent(1), dim = x.extent(2);
  if (class_token.size() != dim || distill_token.size() != dim) {
    throw std::invalid_argument("prepend_tokens: token dim mismatch");
  }
  const size_t seq = patches + 2;
  std::vector<S> out(batch * seq * dim);
  for (size_t b = 0; b < batch; ++b) {
    S* row = out.data() + b * seq * dim;
    std::copy(class_token.data(), class_token.data() + dim, row);
    std::copy(distill_token.data(), distill_token.data() + dim, row + dim);
    std::copy(x.data() + b * patches * dim, x.data() + (b + 1) * patches * dim, row + 2 * dim);
  }
  return TensorT<S>::make({batch, seq, dim}, std::move(out), "prepend_tokens",
                          {x, class_token, distill_token},
                          [batch, patches, dim, seq](auto& self, auto& parents) {
                            for (size_t b = 0; b < batch; ++b) {
                              const S* g = self.grad.data() + b * seq * dim;
                              for (size_t d = 0; d < dim; ++d) {
                                parents[1]->grad[d] += g[d];
                                parents[2]->grad[d] += g[dim + d];
                              }
                              S* gx = parents[0]->grad.data() + b * patches * dim;
                              for (size_t i = 0; i < patches * dim; ++i) gx[i] += g[2 * dim + i];
                            }
                          });
}

// x[B, L, D] + pos[L, D], broadcast over the batch.
template <typename S>
TensorT<S> add_positional(const TensorT<S>& x, const TensorT<S>& pos) {
  if (x.rank() != 3 || pos.rank() != 2 || pos.extent(0) != x.extent(1) ||
      pos.extent(1) != x.extent(2)) {
    throw std::invalid_argument("add_positional: shape mismatch");
  }
  const size_t batch = x.extent(0), per = pos.size();
  std::vector<S> out(x.size());
  for (size_t b = 0; b < batch; ++b) {
    for (size_t i = 0; i < per; ++i) out[b * per + i] = x.data()[b * per + i] + pos.data()[i];
  }
  return TensorT<S>::make(x.shape(), std::move(out), "add_positional", {x, pos},
                          [batch, per](auto& self, auto& parents) {
                            for (size_t b = 0; b < batch; ++b) {
                              for (size_t i = 0; i < per; ++i) {
                                parents[0]->grad[b * per + i] += self.grad[b * per + i];
                                parents[1]->grad[i] += self.grad[b * per + i];
                              }
                            }
                          });
}

// x[B, L, D] -> [B, D], one token.
template <typename S>
TensorT<S> select_token(const TensorT<S>& x, size_t token) {
  if (x.rank() != 3 || token >= x.extent(1)) throw std::invalid_argument("select_token: bad index");
  const size_t batch = x.extent(0), seq = x.extent(1), dim = x.extent(2);
  std::vector<S> out(batch * dim);
  for (size_t b = 0; b < batch; ++b) {
    const S* src = x.data() + (b * seq + token) * dim;
    std::copy(src, src + dim, out.data() + b * dim);
  }
  return TensorT<S>::make({batch, dim}, std::move(out), "select_token", {x},
                          [batch, seq, dim, token](auto& self, auto& parents) {
                            for (size_t b = 0; b < batch; ++b) {
                              S* dst = parents[0]->grad.data() + (b * seq + token) * dim;
                              const S* g = self.grad.data() + b * dim;
                              for (size_t d = 0; d < dim; ++d) dst[d] += g[d];
                            }
                          });
}

// x[B, L, D] -> [B, D], mean over tokens.
template <typename S>
TensorT<S> mean_tokens(const TensorT<S>& x) {
  if (x.rank() != 3) throw std::invalid_argument("mean_tokens: input must be [B, L, D]");
  const size_t batch = x.extent(0), seq = x.extent(1), dim = x.extent(2);
  const double inv = 1.0 / static_cast<double>(seq);
  std::vector<S> out(batch * dim, S(0));
  for (size_t b = 0; b < batch; ++b) {
    for (size_t l = 0; l < seq; ++l) {
      const S* src = x.data() + (b * seq + l) * dim;
      S* dst = out.data() + b * dim;
      for (size_t d = 0; d < dim; ++d) dst[d] += src[d];
    }
  }
  for (auto& v : out) v = static_cast<S>(v * inv);
  return TensorT<S>::make({batch, dim}, std::move(out), "mean_tokens", {x},
                          [batch, seq, dim, inv](auto& self, auto& parents) {
                            for (size_t b = 0; b < batch; ++b) {
                              const S* g = self.grad.data() + b * dim;
                              for (size_t l = 0; l < seq; ++l) {
                                S* dst = parents[0]->grad.data() + (b * seq + l) * dim;
                                for (size_t d = 0; d < dim; ++d) {
                                  dst[d] += static_cast<S>(g[d] * inv);
                                }
                              }
                            }
                          });
}

// Row-wise cosine similarity of a[B, D] and b[B, D] -> [B].
template <typename S>
TensorT<S> cosine_rows(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw std::invalid_argument("cosine_rows: inputs must be equal [B, D]");
  }
  const size_t batch = a.extent(0), dim = a.extent(1);
  constexpr double kEps = 1e-12;
  std::vector<S> out(batch);
  for (size_t r = 0; r < batch; ++r) {
    const S* av = a.data() + r * dim;
    const S* bv = b.data() + r * dim;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t d = 0; d < dim; ++d) {
      dot += static_cast<double>(av[d]) * bv[d];
      na += static_cast<double>(av[d]) * av[d];
      nb += static_cast<double>(bv[d]) * bv[d];
    }
    out[r] = static_cast<S>(dot / std::max(std::sqrt(na) * std::sqrt(nb), kEps));
  }
  auto an = a.node();
  auto bn = b.node();
  return TensorT<S>::make(
      {batch}, std::move(out), "cosine_rows", {a, b},
      [an, bn, batch, dim](auto& self, auto& parents) {
        for (size_t r = 0; r < batch; ++r) {
          const S* av = an->values.data() + r * dim;
          const S* bv = bn->values.data() + r * dim;
          double dot = 0.0, na2 = 0.0, nb2 = 0.0;
          for (size_t d = 0; d < dim; ++d) {
            dot += static_cast<double>(av[d]) * bv[d];
            na2 += static_cast<double>(av[d]) * av[d];
            nb2 += static_cast<double>(bv[d]) * bv[d];
          }
          const double na = std::sqrt(na2), nb = std::sqrt(nb2);
          const double denom = std::max(na * nb, 1e-12);
          if (na * nb <= 1e-12) continue;
          const double c = dot / denom;
          const double g = self.grad[r];
          S* ga = parents[0]->grad.data() + r * dim;
          S* gb = parents[1]->grad.data() + r * dim;
          for (size_t d = 0; d < dim; ++d) {
            ga[d] += static_cast<S>(g * (bv[d] / denom - c * av[d] / na2));
            gb[d] += static_cast<S>(g * (av[d] / denom - c * bv[d] / nb2));
          }
        }
      });
}

// Scalar attention mass the given token sends to other tokens:
// mean over batch and heads of (1 - probs[b, h, token, token]).
template <typename S>
TensorT<S> token_offdiag_mass(const TensorT<S>& probs, size_t token) {
  if (probs.rank() != 4 || probs.extent(2) != probs.extent(3) || token >= probs.extent(2)) {
    throw std::invalid_argument("token_offdiag_mass: probs must be [B, H, L, L]");
  }
  const size_t batch = probs.extent(0), heads = probs.extent(1), seq = probs.extent(2);
  const double inv = 1.0 / static_cast<double>(batch * heads);
  double acc = 0.0;
  for (size_t b = 0; b < batch; ++b) {
    for (size_t h = 0; h < heads; ++h) {
      acc += 1.0 - probs.data()[((b * heads + h) * seq + token) * seq + token];
    }
  }
  return TensorT<S>::make({1}, {static_cast<S>(acc * inv)}, "token_offdiag_mass", {probs},
                          [batch, heads, seq, token, inv](auto& self, auto& parents) {
                            const S g = static_cast<S>(-static_cast<double>(self.grad[0]) * inv);
                            for (size_t b = 0; b < batch; ++b) {
                              for (size_t h = 0; h < heads; ++h) {
                                parents[0]->grad[((b * heads + h) * seq + token) * seq + token] += g;
                              }
                            }
                          });
}

// Pre-norm transformer encoder block parameters.
template <typename S>
struct AttentionParams {
  TensorT<S> ln1_gamma, ln1_beta;
  TensorT<S> wq, bq, wk, bk, wv, bv, wo, bo;
  TensorT<S> ln2_gamma, ln2_beta;
  TensorT<S> w1, b1, w2, b2;  // MLP D -> hidden -> D
};

template <typename S>
struct AttentionOutput {
  TensorT<S> out;    // same shape as the input
  TensorT<S> probs;  // [B, heads, L, L] softmax rows
};

// Pre-norm block: LN -> multi-head scaled-dot-product attention -> residual,
// LN -> 2-layer GELU MLP -> residual. Accepts [L, D] or [B, L, D].
template <typename S>
AttentionOutput<S> attention_block(const TensorT<S>& x, size_t heads,
                                   const AttentionParams<S>& p) {
  const bool batched = x.rank() == 3;
  if (!batched && x.rank() != 2) throw std::invalid_argument("attention: input must be rank 2 or 3");
  TensorT<S> x3 = batched ? x : reshape(x, {1, x.extent(0), x.extent(1)});
  const size_t batch = x3.extent(0), seq = x3.extent(1), dim = x3.extent(2);
  if (heads == 0 || dim % heads != 0) {
    throw std::invalid_argument("attention: embed dim not divisible by heads");
  }
  const size_t dh = dim / heads;

  auto to_heads = [&](const TensorT<S>& t) {
    auto r = reshape(t, {batch, seq, heads, dh});
    auto pm = permute(r, {0, 2, 1, 3});  // [B, h, L, dh]
    return reshape(pm, {batch * heads, seq, dh});
  };

  auto u = layer_norm(x3, p.ln1_gamma, p.ln1_beta);
  auto q = to_heads(linear(u, p.wq, p.bq));
  auto k = to_heads(linear(u, p.wk, p.bk));
  auto v = to_heads(linear(u, p.wv, p.bv));

  auto kt = permute(k, {0, 2, 1});  // [B*h, dh, L]
  auto scores = scale(bmm(q, kt), 1.0 / std::sqrt(static_cast<double>(dh)));
  auto probs = softmax_lastdim(scores);                       // [B*h, L, L]
  auto probs4 = reshape(probs, {batch, heads, seq, seq});     // exposed

  auto ctx = bmm(probs, v);  // [B*h, L, dh]
  auto merged = reshape(permute(reshape(ctx, {batch, heads, seq, dh}), {0, 2, 1, 3}),
                        {batch, seq, dim});
  auto attn_out = linear(merged, p.wo, p.bo);
  auto res1 = add(x3, attn_out);

  auto w = layer_norm(res1, p.ln2_gamma, p.ln2_beta);
  auto hidden = gelu(linear(w, p.w1, p.b1));
  auto mlp_out = linear(hidden, p.w2, p.b2);
  auto res2 = add(res1, mlp_out);

  AttentionOutput<S> out;
  out.out = batched ? res2 : reshape(res2, {seq, dim});
  out.probs = probs4;
  return out;
}

}  // namespace fcdn
