#pragma once

#include "fcdn/config.hpp"
#include "fcdn/dsp.hpp"
#include "fcdn/eval.hpp"
#include "fcdn/model.hpp"
#include "fcdn/synth.hpp"

namespace fcdn {

// Pooled-over-training-trials PLV channel weights, one per band.
inline std::vector<ChannelWeights> compute_band_weights(const EpochSet& train_set,
                                                        const std::vector<BandSpec>& bands) {
  std::vector<ChannelWeights> out;
  out.reserve(bands.size());
  for (const auto& band : bands) {
    const auto filtered = filt_zero_phase(
        train_set, fir_bandpass(train_set.fs_hz, band, band_filter_order(train_set.fs_hz, band)));
    out.push_back(channel_weights(plv_matrix(instantaneous_phase(filtered), band)));
  }
  return out;
}

inline std::array<EpochSet, 3> band_triplet(const EpochSet& set,
                                            const std::vector<BandSpec>& bands) {
  if (bands.size() != 3) throw std::invalid_argument("exactly 3 bands required");
  auto v = extract_bands(set, bands);
  return {std::move(v[0]), std::move(v[1]), std::move(v[2])};
}

// Window adapter reusing a trained full-trial model: slices shorter than the
// model's T are right-padded with their edge value before band extraction.
template <typename S>
struct FcdnWindowClassifier : WindowClassifier {
  FcdnT<S>& model;

  explicit FcdnWindowClassifier(FcdnT<S>& m) : model(m) {}

  std::vector<std::vector<double>> predict_probs(const EpochSet& window) override {
    const size_t t_model = model.config.n_samples;
    if (window.n_samples > t_model) {
      throw std::invalid_argument("window is longer than the model input");
    }
    EpochSet padded = window;
    if (window.n_samples < t_model) {
      padded = EpochSet::empty(window.fs_hz, window.n_trials, window.n_channels, t_model);
      padded.labels = window.labels;
      padded.class_names = window.class_names;
      padded.montage = window.montage;
      for (size_t n = 0; n < window.n_trials; ++n) {
        for (size_t k = 0; k < window.n_channels; ++k) {
          const auto src = window.trace(n, k);
          auto dst = padded.trace(n, k);
          std::copy(src.begin(), src.end(), dst.begin());
          std::fill(dst.begin() + static_cast<ptrdiff_t>(src.size()), dst.end(), src.back());
        }
      }
    }
    auto bands = band_triplet(padded, model.config.bands);
    return predict(model, bands).probs;
  }
};

// ---- RunConfig adapters ---------------------------------------------------

inline std::vector<BandSpec> bands_from_config(const RunConfig& cfg) {
  std::vector<BandSpec> bands;
  for (const auto& part : split(cfg.get_str("bands.spec"), ',')) {
    const auto bits = split(trim(part), ':');
    if (bits.size() != 2) throw ConfigError("bands.spec entries must look like name:lo-hi");
    const auto range = split(bits[1], '-');
    if (range.size() != 2) throw ConfigError("bands.spec entries must look like name:lo-hi");
    try {
      bands.push_back({trim(bits[0]), std::stod(range[0]), std::stod(range[1])});
    } catch (const std::exception&) {
      throw ConfigError("bands.spec has a malformed frequency in '" + part + "'");
    }
  }
  if (bands.size() != 3) throw ConfigError("bands.spec must define exactly 3 bands");
  return bands;
}

inline SynthSpec synth_from_config(const RunConfig& cfg) {
  SynthSpec spec;
  spec.n_channels = static_cast<size_t>(cfg.get_int("synth.channels"));
  spec.n_samples = static_cast<size_t>(cfg.get_int("synth.samples"));
  spec.fs_hz = cfg.get_real("synth.fs_hz");
  spec.n_per_class = static_cast<size_t>(cfg.get_int("synth.per_class"));
  spec.n_classes = static_cast<size_t>(cfg.get_int("synth.classes"));
  spec.noise_amplitude = cfg.get_real("synth.noise");
  spec.seed = cfg.get_u64("seed");

  const auto bands = bands_from_config(cfg);
  const std::string plan = trim(cfg.get_str("synth.couplings"));
  if (plan == "auto") {
    // One coupled pair per class, alternating between the two upper bands
    // (sub-second epochs cannot resolve delta-band phase locking), with
    // class-specific channel pairs and phase offsets.
    const double amp = cfg.get_real("synth.coupling_amplitude");
    for (size_t c = 0; c < spec.n_classes; ++c) {
      Coupling cp;
      cp.class_index = c;
      cp.ch_a = (2 * c) % spec.n_channels;
      cp.ch_b = (2 * c + 1) % spec.n_channels;
      cp.band = bands[1 + c % 2];
      cp.phase_offset_rad = 0.4 + 0.3 * static_cast<double>(c);
      cp.amplitude = amp;
      spec.couplings.push_back(cp);
    }
  } else if (!plan.empty()) {
    for (const auto& entry : split(plan, ';')) {
      const auto f = split(trim(entry), ':');
      if (f.size() != 6) {
        throw ConfigError("synth.couplings entries need class:chA:chB:band:offset:amplitude");
      }
      Coupling cp;
      try {
        cp.class_index = static_cast<size_t>(std::stoul(f[0]));
        cp.ch_a = static_cast<size_t>(std::stoul(f[1]));
        cp.ch_b = static_cast<size_t>(std::stoul(f[2]));
        cp.phase_offset_rad = std::stod(f[4]);
        cp.amplitude = std::stod(f[5]);
      } catch (const std::exception&) {
        throw ConfigError("synth.couplings has a malformed entry: '" + entry + "'");
      }
      bool found = false;
      for (const auto& b : bands) {
        if (b.name == f[3]) {
          cp.band = b;
          found = true;
        }
      }
      if (!found) throw ConfigError("synth.couplings names unknown band '" + f[3] + "'");
      spec.couplings.push_back(cp);
    }
  }
  return spec;
}

inline FcdnConfig model_from_config(const RunConfig& cfg, size_t n_channels, size_t n_samples,
                                    size_t n_classes) {
  FcdnConfig m;
  m.n_channels = n_channels;
  m.n_samples = n_samples;
  m.n_classes = n_classes;
  m.bands = bands_from_config(cfg);
  const auto cc = cfg.get_size_list("model.conv_channels");
  const auto kw = cfg.get_size_list("model.kernel_widths");
  const auto pw = cfg.get_size_list("model.pool_widths");
  if (cc.size() != 3 || kw.size() != 3 || pw.size() != 2) {
    throw ConfigError("model.conv_channels/kernel_widths need 3 entries, pool_widths needs 2");
  }
  std::copy(cc.begin(), cc.end(), m.conv_channels.begin());
  std::copy(kw.begin(), kw.end(), m.kernel_widths.begin());
  std::copy(pw.begin(), pw.end(), m.pool_widths.begin());
  m.dropout_p = cfg.get_real("model.dropout");
  m.resize = static_cast<size_t>(cfg.get_int("model.resize"));
  m.patch = static_cast<size_t>(cfg.get_int("model.patch"));
  m.embed_dim = static_cast<size_t>(cfg.get_int("model.embed_dim"));
  m.depth = static_cast<size_t>(cfg.get_int("model.depth"));
  m.heads = static_cast<size_t>(cfg.get_int("model.heads"));
  m.alpha = cfg.get_real("model.alpha");
  m.beta = cfg.get_real("model.beta");
  const std::string sign = cfg.get_str("model.distill_sign");
  if (sign == "paper-literal") {
    m.distill_sign_paper_literal = true;
  } else if (sign == "agree") {
    m.distill_sign_paper_literal = false;
  } else {
    throw ConfigError("model.distill_sign must be 'agree' or 'paper-literal'");
  }
  m.epochs = static_cast<size_t>(cfg.get_int("train.epochs"));
  m.batch_size = static_cast<size_t>(cfg.get_int("train.batch"));
  m.lr = cfg.get_real("train.lr");
  m.seed = cfg.get_u64("seed");
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return m;
}

}  // namespace fcdn
