#pragma once

#include <array>
#include <functional>
#include <optional>

#include <json.hpp>

#include "fcdn/adam.hpp"
#include "fcdn/checkpoint.hpp"
#include "fcdn/connectivity.hpp"
#include "fcdn/nn_ops.hpp"
#include "fcdn/tensor.hpp"
#include "fcdn/types.hpp"

namespace fcdn {

// Architecture + training hyperparameters. The defaults realize the
// reference 64-channel / 1000-sample configuration; tests scale the
// resize target, patch size and channel plan down.
struct FcdnConfig {
  size_t n_channels{64};
  size_t n_samples{1000};
  size_t n_classes{4};
  std::vector<BandSpec> bands = default_bands();

  std::array<size_t, 3> conv_channels{40, 80, 160};
  std::array<size_t, 3> kernel_widths{20, 20, 40};
  std::array<size_t, 2> pool_widths{32, 30};
  double dropout_p{0.5};

  size_t resize{224};
  size_t patch{16};
  size_t embed_dim{192};
  size_t depth{4};
  size_t heads{3};

  double alpha{1.0};
  double beta{0.0};
  bool distill_sign_paper_literal{false};  // true: penalize beta*sum(sim*q) as written

  size_t epochs{200};
  size_t batch_size{16};
  double lr{1e-4};
  uint64_t seed{1};

  size_t n_patches() const { return (resize / patch) * (resize / patch); }
  size_t sequence_length() const { return n_patches() + 2; }

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static FcdnConfig from_json(const nlohmann::ordered_json& j);
};

template <typename S>
struct ForwardResult {
  TensorT<S> cls_logits;   // [B, C]
  TensorT<S> dist_logits;  // [B, C]
  std::vector<TensorT<S>> hidden;  // per transformer layer, [B, L, D]
  std::vector<TensorT<S>> attn;    // per transformer layer, [B, heads, L, L]
  // Stage taps (feature export, shape-chain checks):
  // conv_stage[band] = post-BN/activation maps of the three conv layers,
  // pool_stage[band] = the two pooling outputs.
  std::array<std::array<TensorT<S>, 3>, 3> conv_stage;
  std::array<std::array<TensorT<S>, 2>, 3> pool_stage;
  std::array<TensorT<S>, 3> fused_planes;  // per band [B, R, R] after 0..255 scaling
  TensorT<S> fused;                        // [B, 3, R, R]
  TensorT<S> final_tokens;                 // [B, L, D] after the final layer norm
};

// Full network state: three independent per-band conv blocks, the frozen
// FC channel weights, and the class+distillation token transformer.
template <typename S>
struct FcdnT {
  FcdnConfig config;
  std::array<std::vector<double>, 3> band_weights;  // frozen, length K each
  bool distilled{false};  // trained against a teacher; eval fuses both heads

  struct ConvBlock {
    TensorT<S> k1, g1, b1;
    TensorT<S> k2, g2, b2;
    TensorT<S> k3, g3, b3;
    std::vector<S> rm1, rv1, rm2, rv2, rm3, rv3;  // BN running stats
  };
  std::array<ConvBlock, 3> blocks;

  TensorT<S> patch_w, patch_b;
  TensorT<S> cls_token, dist_token, pos_embed;
  std::vector<AttentionParams<S>> layers;
  TensorT<S> final_gamma, final_beta;
  TensorT<S> head_w, head_b;
  TensorT<S> dist_head_w, dist_head_b;

  std::vector<std::pair<std::string, TensorT<S>*>> named_parameters();
  std::vector<TensorT<S>*> parameters();
  FcdnT clone() const;
};

using FcdnModel = FcdnT<float>;

struct EpochRecord {
  size_t epoch{0};
  double train_loss{0.0};
  double val_loss{0.0};
  double val_acc{0.0};
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  size_t best_epoch{0};
};

struct Prediction {
  std::vector<int> labels;
  std::vector<std::vector<double>> probs;  // [N][C], rows sum to 1
};

// Deterministic construction: all weights from a fan-in-scaled uniform
// drawn from one stream per seed, biases zero, norm scales one. `weights`
// may be empty (all-ones FC layer) or hold one entry per band.
template <typename S>
FcdnT<S> build(const FcdnConfig& config, const std::vector<ChannelWeights>& weights,
               uint64_t seed);

template <typename S>
ForwardResult<S> forward(FcdnT<S>& model, const std::array<EpochSet, 3>& band_epochs,
                         std::span<const size_t> trials, bool training, Rng* dropout_rng);

// Convenience: all trials, eval mode.
template <typename S>
ForwardResult<S> forward(FcdnT<S>& model, const std::array<EpochSet, 3>& band_epochs);

// alpha * CE(student class logits, labels) + beta * sum_i f(sim_i) * q_i,
// where sim_i is the batch-mean cosine of mean-pooled layer-i hidden states,
// q_i is the mean attention mass the student's distillation token sends to
// other tokens at layer i, and f(s) = 1 - s (default) or s (paper-literal
// sign). Teacher activations must carry no graph (forward under NoGradGuard).
template <typename S>
TensorT<S> distill_loss(const ForwardResult<S>& student, const ForwardResult<S>* teacher,
                        std::span<const int> labels, double alpha, double beta,
                        bool paper_literal_sign = false);

// Adam training on distill_loss (plain CE when beta == 0). Epoch shuffling,
// dropout and initialization all derive from config.seed. The parameters of
// the best-validation-accuracy epoch are restored at the end.
template <typename S>
TrainHistory train(FcdnT<S>& model, FcdnT<S>* teacher,
                   const std::array<EpochSet, 3>& train_bands,
                   const std::array<EpochSet, 3>& val_bands,
                   const std::function<void(const EpochRecord&)>& on_epoch = nullptr);

// Same loop with beta forced to 0; conventionally run with a wider/deeper
// transformer config to produce the teacher for distillation.
template <typename S>
FcdnT<S> train_teacher(const FcdnConfig& teacher_config, const std::vector<ChannelWeights>& fc,
                       const std::array<EpochSet, 3>& train_bands,
                       const std::array<EpochSet, 3>& val_bands, TrainHistory* history = nullptr);

template <typename S>
Prediction predict(FcdnT<S>& model, const std::array<EpochSet, 3>& band_epochs);

// Copy with the FC layer replaced by all-ones weights.
template <typename S>
FcdnT<S> ablate_fc(const FcdnT<S>& model);

template <typename S>
Checkpoint to_checkpoint(const FcdnT<S>& model);
template <typename S>
FcdnT<S> from_checkpoint(const Checkpoint& ckpt);

// ---- implementation ------------------------------------------------------

inline void FcdnConfig::validate() const {
  if (n_channels < 2) throw std::invalid_argument("config: n_channels must be >= 2");
  if (n_samples < 8) throw std::invalid_argument("config: n_samples must be >= 8");
  if (n_classes < 2) throw std::invalid_argument("config: n_classes must be >= 2");
  if (bands.size() != 3) throw std::invalid_argument("config: exactly 3 bands required");
  if (resize < 4 || patch == 0 || resize % patch != 0) {
    throw std::invalid_argument("config: resize target must be divisible by patch size");
  }
  if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
    throw std::invalid_argument("config: embed dim must be divisible by heads");
  }
  if (depth == 0) throw std::invalid_argument("config: depth must be >= 1");
  if (alpha < 0.0 || beta < 0.0) throw std::invalid_argument("config: alpha, beta must be >= 0");
  if (!(dropout_p >= 0.0) || dropout_p >= 1.0) {
    throw std::invalid_argument("config: dropout must lie in [0, 1)");
  }
  if (batch_size == 0 || epochs == 0) throw std::invalid_argument("config: epochs/batch must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("config: learning rate must be positive");
  for (const auto& c : conv_channels) {
    if (c == 0) throw std::invalid_argument("config: conv channels must be >= 1");
  }
  for (const auto& w : kernel_widths) {
    if (w == 0) throw std::invalid_argument("config: kernel widths must be >= 1");
  }
  for (const auto& p : pool_widths) {
    if (p == 0) throw std::invalid_argument("config: pool widths must be >= 1");
  }
}

inline nlohmann::ordered_json FcdnConfig::to_json() const {
  nlohmann::ordered_json j;
  j["n_channels"] = n_channels;
  j["n_samples"] = n_samples;
  j["n_classes"] = n_classes;
  j["bands"] = nlohmann::json::array();
  for (const auto& b : bands) j["bands"].push_back({{"name", b.name}, {"f_lo", b.f_lo_hz}, {"f_hi", b.f_hi_hz}});
  j["conv_channels"] = conv_channels;
  j["kernel_widths"] = kernel_widths;
  j["pool_widths"] = pool_widths;
  j["dropout_p"] = dropout_p;
  j["resize"] = resize;
  j["patch"] = patch;
  j["embed_dim"] = embed_dim;
  j["depth"] = depth;
  j["heads"] = heads;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["distill_sign_paper_literal"] = distill_sign_paper_literal;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["seed"] = seed;
  return j;
}

inline FcdnConfig FcdnConfig::from_json(const nlohmann::ordered_json& j) {
  FcdnConfig c;
  c.n_channels = j.at("n_channels").get<size_t>();
  c.n_samples = j.at("n_samples").get<size_t>();
  c.n_classes = j.at("n_classes").get<size_t>();
  c.bands.clear();
  for (const auto& b : j.at("bands")) {
    c.bands.push_back({b.at("name").get<std::string>(), b.at("f_lo").get<double>(),
                       b.at("f_hi").get<double>()});
  }
  c.conv_channels = j.at("conv_channels").get<std::array<size_t, 3>>();
  c.kernel_widths = j.at("kernel_widths").get<std::array<size_t, 3>>();
  c.pool_widths = j.at("pool_widths").get<std::array<size_t, 2>>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.resize = j.at("resize").get<size_t>();
  c.patch = j.at("patch").get<size_t>();
  c.embed_dim = j.at("embed_dim").get<size_t>();
  c.depth = j.at("depth").get<size_t>();
  c.heads = j.at("heads").get<size_t>();
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.distill_sign_paper_literal = j.at("distill_sign_paper_literal").get<bool>();
  c.epochs = j.at("epochs").get<size_t>();
  c.batch_size = j.at("batch_size").get<size_t>();
  c.lr = j.at("lr").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

template <typename S>
std::vector<std::pair<std::string, TensorT<S>*>> FcdnT<S>::named_parameters() {
  std::vector<std::pair<std::string, TensorT<S>*>> out;
  for (size_t b = 0; b < 3; ++b) {
    const std::string p = "band" + std::to_string(b) + ".";
    auto& blk = blocks[b];
    out.insert(out.end(), {{p + "conv1.kernels", &blk.k1},
                           {p + "bn1.gamma", &blk.g1},
                           {p + "bn1.beta", &blk.b1},
                           {p + "conv2.kernels", &blk.k2},
                           {p + "bn2.gamma", &blk.g2},
                           {p + "bn2.beta", &blk.b2},
                           {p + "conv3.kernels", &blk.k3},
                           {p + "bn3.gamma", &blk.g3},
                           {p + "bn3.beta", &blk.b3}});
  }
  out.push_back({"patch.w", &patch_w});
  out.push_back({"patch.b", &patch_b});
  out.push_back({"cls_token", &cls_token});
  out.push_back({"dist_token", &dist_token});
  out.push_back({"pos_embed", &pos_embed});
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    auto& l = layers[i];
    out.insert(out.end(), {{p + "ln1.gamma", &l.ln1_gamma}, {p + "ln1.beta", &l.ln1_beta},
                           {p + "wq", &l.wq}, {p + "bq", &l.bq},
                           {p + "wk", &l.wk}, {p + "bk", &l.bk},
                           {p + "wv", &l.wv}, {p + "bv", &l.bv},
                           {p + "wo", &l.wo}, {p + "bo", &l.bo},
                           {p + "ln2.gamma", &l.ln2_gamma}, {p + "ln2.beta", &l.ln2_beta},
                           {p + "mlp.w1", &l.w1}, {p + "mlp.b1", &l.b1},
                           {p + "mlp.w2", &l.w2}, {p + "mlp.b2", &l.b2}});
  }
  out.push_back({"final_ln.gamma", &final_gamma});
  out.push_back({"final_ln.beta", &final_beta});
  out.push_back({"head.w", &head_w});
  out.push_back({"head.b", &head_b});
  out.push_back({"dist_head.w", &dist_head_w});
  out.push_back({"dist_head.b", &dist_head_b});
  return out;
}

template <typename S>
std::vector<TensorT<S>*> FcdnT<S>::parameters() {
  std::vector<TensorT<S>*> out;
  for (auto& [name, p] : named_parameters()) out.push_back(p);
  return out;
}

template <typename S>
FcdnT<S> FcdnT<S>::clone() const {
  FcdnT<S> copy = *this;  // copies tensor handles ...
  auto src = const_cast<FcdnT<S>*>(this)->named_parameters();
  auto dst = copy.named_parameters();
  for (size_t i = 0; i < src.size(); ++i) {
    *dst[i].second = src[i].second->clone_as_parameter();  // ... then deep-copies them
  }
  return copy;
}

namespace detail {

template <typename S>
TensorT<S> init_uniform(Rng& rng, std::vector<size_t> shape, size_t fan_in) {
  const double limit = std::sqrt(3.0 / static_cast<double>(std::max<size_t>(fan_in, 1)));
  std::vector<S> v(TensorT<S>::shape_size(shape));
  for (auto& x : v) x = static_cast<S>(rng.uniform(-limit, limit));
  return TensorT<S>::from_values(std::move(shape), std::move(v), true);
}

template <typename S>
TensorT<S> init_const(std::vector<size_t> shape, double value) {
  std::vector<S> v(TensorT<S>::shape_size(shape), static_cast<S>(value));
  return TensorT<S>::from_values(std::move(shape), std::move(v), true);
}

}  // namespace detail

template <typename S>
FcdnT<S> build(const FcdnConfig& config, const std::vector<ChannelWeights>& weights,
               uint64_t seed) {
  config.validate();
  if (!weights.empty() && weights.size() != 3) {
    throw std::invalid_argument("build: need 0 or 3 per-band weight vectors");
  }
  FcdnT<S> model;
  model.config = config;
  for (size_t b = 0; b < 3; ++b) {
    if (weights.empty()) {
      model.band_weights[b].assign(config.n_channels, 1.0);
    } else {
      if (weights[b].w.size() != config.n_channels) {
        throw std::invalid_argument("build: weight vector length != channel count");
      }
      model.band_weights[b] = weights[b].w;
    }
  }

  Rng rng(seed);
  const auto [c1, c2, c3] = config.conv_channels;
  const auto [w1, w2, w3] = config.kernel_widths;
  for (size_t b = 0; b < 3; ++b) {
    auto& blk = model.blocks[b];
    blk.k1 = detail::init_uniform<S>(rng, {c1, 1, 1, w1}, w1);
    blk.k2 = detail::init_uniform<S>(rng, {c2, c1, 1, w2}, c1 * w2);
    blk.k3 = detail::init_uniform<S>(rng, {c3, c2, 1, w3}, c2 * w3);
    blk.g1 = detail::init_const<S>({c1}, 1.0);
    blk.b1 = detail::init_const<S>({c1}, 0.0);
    blk.g2 = detail::init_const<S>({c2}, 1.0);
    blk.b2 = detail::init_const<S>({c2}, 0.0);
    blk.g3 = detail::init_const<S>({c3}, 1.0);
    blk.b3 = detail::init_const<S>({c3}, 0.0);
    blk.rm1.assign(c1, S(0));
    blk.rv1.assign(c1, S(1));
    blk.rm2.assign(c2, S(0));
    blk.rv2.assign(c2, S(1));
    blk.rm3.assign(c3, S(0));
    blk.rv3.assign(c3, S(1));
  }

  const size_t d = config.embed_dim;
  const size_t patch_dim = 3 * config.patch * config.patch;
  const size_t seq = config.sequence_length();
  model.patch_w = detail::init_uniform<S>(rng, {patch_dim, d}, patch_dim);
  model.patch_b = detail::init_const<S>({d}, 0.0);
  model.cls_token = detail::init_uniform<S>(rng, {d}, d);
  model.dist_token = detail::init_uniform<S>(rng, {d}, d);
  model.pos_embed = detail::init_uniform<S>(rng, {seq, d}, d);

  model.layers.resize(config.depth);
  const size_t hidden = 4 * d;
  for (auto& l : model.layers) {
    l.ln1_gamma = detail::init_const<S>({d}, 1.0);
    l.ln1_beta = detail::init_const<S>({d}, 0.0);
    l.wq = detail::init_uniform<S>(rng, {d, d}, d);
    l.bq = detail::init_const<S>({d}, 0.0);
    l.wk = detail::init_uniform<S>(rng, {d, d}, d);
    l.bk = detail::init_const<S>({d}, 0.0);
    l.wv = detail::init_uniform<S>(rng, {d, d}, d);
    l.bv = detail::init_const<S>({d}, 0.0);
    l.wo = detail::init_uniform<S>(rng, {d, d}, d);
    l.bo = detail::init_const<S>({d}, 0.0);
    l.ln2_gamma = detail::init_const<S>({d}, 1.0);
    l.ln2_beta = detail::init_const<S>({d}, 0.0);
    l.w1 = detail::init_uniform<S>(rng, {d, hidden}, d);
    l.b1 = detail::init_const<S>({hidden}, 0.0);
    l.w2 = detail::init_uniform<S>(rng, {hidden, d}, hidden);
    l.b2 = detail::init_const<S>({d}, 0.0);
  }
  model.final_gamma = detail::init_const<S>({d}, 1.0);
  model.final_beta = detail::init_const<S>({d}, 0.0);
  model.head_w = detail::init_uniform<S>(rng, {d, config.n_classes}, d);
  model.head_b = detail::init_const<S>({config.n_classes}, 0.0);
  model.dist_head_w = detail::init_uniform<S>(rng, {d, config.n_classes}, d);
  model.dist_head_b = detail::init_const<S>({config.n_classes}, 0.0);
  return model;
}

namespace detail {

// Batch tensor for one band with the frozen FC weights already applied:
// [B, 1, K, T].
template <typename S>
TensorT<S> band_input(const EpochSet& set, const std::vector<double>& w,
                      std::span<const size_t> trials) {
  const size_t k_count = set.n_channels, t_len = set.n_samples;
  std::vector<S> v(trials.size() * k_count * t_len);
  size_t o = 0;
  for (size_t i = 0; i < trials.size(); ++i) {
    for (size_t k = 0; k < k_count; ++k) {
      const auto tr = set.trace(trials[i], k);
      const S wk = static_cast<S>(w[k]);
      for (size_t t = 0; t < t_len; ++t) v[o++] = wk * static_cast<S>(tr[t]);
    }
  }
  return TensorT<S>::from_values({trials.size(), 1, k_count, t_len}, std::move(v));
}

}  // namespace detail

template <typename S>
ForwardResult<S> forward(FcdnT<S>& model, const std::array<EpochSet, 3>& band_epochs,
                         std::span<const size_t> trials, bool training, Rng* dropout_rng) {
  const auto& cfg = model.config;
  const size_t batch = trials.size();
  if (batch == 0) throw std::invalid_argument("forward: empty batch");
  for (const auto& set : band_epochs) {
    if (set.n_channels != cfg.n_channels || set.n_samples != cfg.n_samples) {
      throw std::invalid_argument("forward: band set shape does not match config");
    }
    if (set.n_trials != band_epochs[0].n_trials) {
      throw std::invalid_argument("forward: band sets are not trial-aligned");
    }
  }
  Rng fallback_rng(0);
  Rng& rng = dropout_rng ? *dropout_rng : fallback_rng;
  if (training && !dropout_rng && cfg.dropout_p > 0.0) {
    throw std::invalid_argument("forward: training mode needs a dropout rng");
  }

  ForwardResult<S> res;
  std::array<TensorT<S>, 3> planes;
  for (size_t b = 0; b < 3; ++b) {
    auto& blk = model.blocks[b];
    auto x = detail::band_input<S>(band_epochs[b], model.band_weights[b], trials);

    auto conv1 = conv_temporal(x, blk.k1, 1, "valid");
    auto s1 = batchnorm(conv1, blk.g1, blk.b1, blk.rm1, blk.rv1, training);  // no activation
    auto conv2 = conv_temporal(s1, blk.k2, 1, "valid");
    auto s2 = elu(batchnorm(conv2, blk.g2, blk.b2, blk.rm2, blk.rv2, training));
    auto conv3 = conv_temporal(s2, blk.k3, 1, "same");
    auto s3 = elu(batchnorm(conv3, blk.g3, blk.b3, blk.rm3, blk.rv3, training));

    auto p1 = avgpool_temporal(s3, cfg.pool_widths[0]);
    auto a1 = elu(dropout(p1, cfg.dropout_p, training, rng));
    auto p2 = avgpool_temporal(a1, cfg.pool_widths[1]);
    auto d2 = dropout(p2, cfg.dropout_p, training, rng);

    if (d2.extent(3) != 1) {
      throw std::invalid_argument(
          "forward: conv block must reduce the time axis to one sample, got " +
          std::to_string(d2.extent(3)));
    }
    auto map2d = reshape(d2, {batch, cfg.conv_channels[2], cfg.n_channels});
    auto resized = bicubic_resize(map2d, cfg.resize, cfg.resize);
    planes[b] = scale_0_255(resized);

    res.conv_stage[b] = {s1, s2, s3};
    res.pool_stage[b] = {p1, p2};
    res.fused_planes[b] = planes[b];
  }

  auto fused = stack3(planes[0], planes[1], planes[2]);  // [B, 3, R, R]
  res.fused = fused;
  auto tokens = linear(patchify(fused, cfg.patch), model.patch_w, model.patch_b);
  auto seq = add_positional(prepend_tokens(tokens, model.cls_token, model.dist_token),
                            model.pos_embed);

  res.hidden.reserve(cfg.depth);
  res.attn.reserve(cfg.depth);
  for (auto& layer : model.layers) {
    auto out = attention_block(seq, cfg.heads, layer);
    seq = out.out;
    res.hidden.push_back(out.out);
    res.attn.push_back(out.probs);
  }
  auto final_seq = layer_norm(seq, model.final_gamma, model.final_beta);
  res.final_tokens = final_seq;
  res.cls_logits = linear(select_token(final_seq, 0), model.head_w, model.head_b);
  res.dist_logits = linear(select_token(final_seq, 1), model.dist_head_w, model.dist_head_b);
  return res;
}

template <typename S>
ForwardResult<S> forward(FcdnT<S>& model, const std::array<EpochSet, 3>& band_epochs) {
  std::vector<size_t> all(band_epochs[0].n_trials);
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  return forward(model, band_epochs, all, false, nullptr);
}

template <typename S>
TensorT<S> distill_loss(const ForwardResult<S>& student, const ForwardResult<S>* teacher,
                        std::span<const int> labels, double alpha, double beta,
                        bool paper_literal_sign) {
  auto loss = scale(cross_entropy(student.cls_logits, labels), alpha);
  if (beta == 0.0) return loss;
  if (!teacher) throw std::invalid_argument("distill_loss: beta > 0 requires teacher outputs");
  if (teacher->hidden.size() != student.hidden.size()) {
    throw std::invalid_argument("distill_loss: layer-count mismatch");
  }
  TensorT<S> acc = TensorT<S>::scalar(S(0));
  for (size_t i = 0; i < student.hidden.size(); ++i) {
    if (teacher->hidden[i].shape().back() != student.hidden[i].shape().back()) {
      throw std::invalid_argument("distill_loss: hidden dim mismatch at layer " + std::to_string(i));
    }
    auto sim = mean(cosine_rows(mean_tokens(student.hidden[i]), mean_tokens(teacher->hidden[i])));
    auto q = token_offdiag_mass(student.attn[i], 1);
    auto factor = paper_literal_sign ? sim : sub(TensorT<S>::scalar(S(1)), sim);
    acc = add(acc, mul(factor, q));
  }
  return add(loss, scale(acc, beta));
}

namespace detail {

template <typename S>
double eval_split(FcdnT<S>& model, const std::array<EpochSet, 3>& bands, double* out_acc) {
  NoGradGuard off;
  const size_t n = bands[0].n_trials;
  const size_t chunk = std::max<size_t>(1, model.config.batch_size);
  double loss_sum = 0.0;
  size_t correct = 0;
  for (size_t start = 0; start < n; start += chunk) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(n, start + chunk); ++i) idx.push_back(i);
    auto res = forward(model, bands, idx, false, nullptr);
    std::vector<int> lab;
    for (size_t i : idx) lab.push_back(bands[0].labels[i]);
    loss_sum += static_cast<double>(cross_entropy(res.cls_logits, lab).item()) * idx.size();
    const size_t classes = model.config.n_classes;
    for (size_t r = 0; r < idx.size(); ++r) {
      const S* row = res.cls_logits.data() + r * classes;
      size_t best = 0;
      for (size_t c = 1; c < classes; ++c) {
        if (row[c] > row[best]) best = c;
      }
      if (static_cast<int>(best) == lab[r]) ++correct;
    }
  }
  if (out_acc) *out_acc = static_cast<double>(correct) / static_cast<double>(n);
  return loss_sum / static_cast<double>(n);
}

inline void check_band_alignment(const std::array<EpochSet, 3>& bands) {
  for (const auto& set : bands) {
    if (set.n_trials != bands[0].n_trials || set.labels != bands[0].labels) {
      throw std::invalid_argument("band sets are not trial-aligned");
    }
  }
}

}  // namespace detail

template <typename S>
TrainHistory train(FcdnT<S>& model, FcdnT<S>* teacher,
                   const std::array<EpochSet, 3>& train_bands,
                   const std::array<EpochSet, 3>& val_bands,
                   const std::function<void(const EpochRecord&)>& on_epoch) {
  const auto& cfg = model.config;
  detail::check_band_alignment(train_bands);
  detail::check_band_alignment(val_bands);
  if (train_bands[0].n_trials == 0 || val_bands[0].n_trials == 0) {
    throw std::invalid_argument("train: empty split");
  }
  if (cfg.beta > 0.0 && !teacher) {
    throw std::invalid_argument("train: beta > 0 requires a teacher model");
  }

  auto params = model.parameters();
  AdamT<S> opt(params, cfg.lr);
  Rng rng(derive_seed(cfg.seed, 1));
  TrainHistory history;

  std::vector<size_t> order(train_bands[0].n_trials);
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_acc = -1.0;
  double best_loss = 0.0;
  std::vector<std::vector<S>> best_params;

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<size_t> idx(order.begin() + start,
                              order.begin() + std::min(order.size(), start + cfg.batch_size));
      std::vector<int> labels;
      for (size_t i : idx) labels.push_back(train_bands[0].labels[i]);

      opt.zero_grad();
      auto res = forward(model, train_bands, idx, true, &rng);
      TensorT<S> loss;
      if (cfg.beta > 0.0) {
        ForwardResult<S> tres;
        std::vector<int> teacher_hard;
        {
          NoGradGuard off;
          tres = forward(*teacher, train_bands, idx, false, nullptr);
          const size_t classes = cfg.n_classes;
          for (size_t r = 0; r < idx.size(); ++r) {
            const S* row = tres.cls_logits.data() + r * classes;
            size_t best = 0;
            for (size_t c = 1; c < classes; ++c) {
              if (row[c] > row[best]) best = c;
            }
            teacher_hard.push_back(static_cast<int>(best));
          }
        }
        loss = distill_loss(res, &tres, labels, cfg.alpha, cfg.beta,
                            cfg.distill_sign_paper_literal);
        // Hard-label supervision of the distillation head (teacher argmax).
        loss = add(loss, scale(cross_entropy(res.dist_logits, teacher_hard), cfg.beta));
      } else {
        loss = distill_loss<S>(res, nullptr, labels, cfg.alpha, 0.0, false);
      }
      loss.backward();
      opt.step();
      loss_sum += static_cast<double>(loss.item()) * idx.size();
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = detail::eval_split(model, val_bands, &rec.val_acc);
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_acc > best_acc || (rec.val_acc == best_acc && rec.val_loss < best_loss)) {
      best_acc = rec.val_acc;
      best_loss = rec.val_loss;
      history.best_epoch = epoch + 1;
      best_params.clear();
      for (auto* p : params) best_params.push_back(p->values());
    }
  }
  for (size_t i = 0; i < params.size(); ++i) params[i]->values() = best_params[i];
  if (cfg.beta > 0.0) model.distilled = true;
  return history;
}

template <typename S>
FcdnT<S> train_teacher(const FcdnConfig& teacher_config, const std::vector<ChannelWeights>& fc,
                       const std::array<EpochSet, 3>& train_bands,
                       const std::array<EpochSet, 3>& val_bands, TrainHistory* history) {
  FcdnConfig cfg = teacher_config;
  cfg.beta = 0.0;
  auto teacher = build<S>(cfg, fc, cfg.seed);
  auto h = train(teacher, static_cast<FcdnT<S>*>(nullptr), train_bands, val_bands);
  if (history) *history = h;
  return teacher;
}

template <typename S>
Prediction predict(FcdnT<S>& model, const std::array<EpochSet, 3>& band_epochs) {
  NoGradGuard off;
  detail::check_band_alignment(band_epochs);
  const size_t n = band_epochs[0].n_trials;
  const size_t classes = model.config.n_classes;
  const size_t chunk = std::max<size_t>(1, model.config.batch_size);

  Prediction pred;
  pred.labels.resize(n);
  pred.probs.assign(n, std::vector<double>(classes, 0.0));
  for (size_t start = 0; start < n; start += chunk) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(n, start + chunk); ++i) idx.push_back(i);
    auto res = forward(model, band_epochs, idx, false, nullptr);
    // DeiT-style eval: fuse class and distillation heads when the model was
    // trained against a teacher; otherwise the class head alone decides.
    TensorT<S> logits = model.distilled
                            ? scale(add(res.cls_logits, res.dist_logits), 0.5)
                            : res.cls_logits;
    auto probs = softmax_lastdim(logits);
    for (size_t r = 0; r < idx.size(); ++r) {
      const S* row = probs.data() + r * classes;
      size_t best = 0;
      for (size_t c = 0; c < classes; ++c) {
        pred.probs[idx[r]][c] = static_cast<double>(row[c]);
        if (row[c] > row[best]) best = c;
      }
      pred.labels[idx[r]] = static_cast<int>(best);
    }
  }
  return pred;
}

template <typename S>
FcdnT<S> ablate_fc(const FcdnT<S>& model) {
  FcdnT<S> out = model.clone();
  for (auto& w : out.band_weights) w.assign(w.size(), 1.0);
  return out;
}

template <typename S>
Checkpoint to_checkpoint(const FcdnT<S>& model) {
  Checkpoint ckpt;
  auto named = const_cast<FcdnT<S>&>(model).named_parameters();
  for (auto& [name, p] : named) {
    Checkpoint::Entry e;
    e.name = name;
    e.shape = p->shape();
    e.values.assign(p->values().begin(), p->values().end());
    ckpt.entries.push_back(std::move(e));
  }
  auto push_buffer = [&](const std::string& name, const std::vector<S>& v) {
    Checkpoint::Entry e;
    e.name = name;
    e.shape = {v.size()};
    e.values.assign(v.begin(), v.end());
    ckpt.entries.push_back(std::move(e));
  };
  for (size_t b = 0; b < 3; ++b) {
    const std::string p = "band" + std::to_string(b) + ".";
    push_buffer(p + "bn1.running_mean", model.blocks[b].rm1);
    push_buffer(p + "bn1.running_var", model.blocks[b].rv1);
    push_buffer(p + "bn2.running_mean", model.blocks[b].rm2);
    push_buffer(p + "bn2.running_var", model.blocks[b].rv2);
    push_buffer(p + "bn3.running_mean", model.blocks[b].rm3);
    push_buffer(p + "bn3.running_var", model.blocks[b].rv3);
  }
  ckpt.config = model.config.to_json();
  ckpt.config["distilled"] = model.distilled;
  // FC weights live in the manifest: they are double precision and JSON
  // round-trips them exactly, unlike the float32 blob.
  ckpt.config["band_weights"] = model.band_weights;
  return ckpt;
}

template <typename S>
FcdnT<S> from_checkpoint(const Checkpoint& ckpt) {
  FcdnConfig cfg = FcdnConfig::from_json(ckpt.config);
  auto model = build<S>(cfg, {}, cfg.seed);
  model.distilled = ckpt.config.value("distilled", false);
  for (auto& [name, p] : model.named_parameters()) {
    const auto& e = ckpt.find(name);
    if (e.values.size() != p->size()) {
      throw DataFormatError("checkpoint tensor '" + name + "' has wrong size");
    }
    for (size_t i = 0; i < e.values.size(); ++i) p->data()[i] = static_cast<S>(e.values[i]);
  }
  auto pull_buffer = [&](const std::string& name, std::vector<S>& v) {
    const auto& e = ckpt.find(name);
    v.assign(e.values.begin(), e.values.end());
  };
  for (size_t b = 0; b < 3; ++b) {
    const std::string p = "band" + std::to_string(b) + ".";
    pull_buffer(p + "bn1.running_mean", model.blocks[b].rm1);
    pull_buffer(p + "bn1.running_var", model.blocks[b].rv1);
    pull_buffer(p + "bn2.running_mean", model.blocks[b].rm2);
    pull_buffer(p + "bn2.running_var", model.blocks[b].rv2);
    pull_buffer(p + "bn3.running_mean", model.blocks[b].rm3);
    pull_buffer(p + "bn3.running_var", model.blocks[b].rv3);
  }
  const auto weights = ckpt.config.at("band_weights").get<std::array<std::vector<double>, 3>>();
  for (size_t b = 0; b < 3; ++b) {
    if (weights[b].size() != cfg.n_channels) {
      throw DataFormatError("checkpoint band_weights have the wrong length");
    }
    model.band_weights[b] = weights[b];
  }
  return model;
}

}  // namespace fcdn
