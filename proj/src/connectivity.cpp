#include "fcdn/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace fcdn {

double plv_pair(const PhaseSeries& phases, size_t k1, size_t k2) {
  if (k1 >= phases.n_channels || k2 >= phases.n_channels) {
    throw std::out_of_range("channel index out of range");
  }
  if (k1 > k2) std::swap(k1, k2);
  double sum_re = 0.0;
  double sum_im = 0.0;
  for (size_t n = 0; n < phases.n_trials; ++n) {
    for (size_t t = 0; t < phases.n_samples; ++t) {
      const double theta = phases.at(n, k1, t) - phases.at(n, k2, t);
      sum_re += std::cos(theta);
      sum_im += std::sin(theta);
    }
  }
  const double m = static_cast<double>(phases.n_trials * phases.n_samples);
  return std::hypot(sum_re / m, sum_im / m);
}

PlvMatrix plv_matrix(const PhaseSeries& phases, const BandSpec& band) {
  PlvMatrix mat;
  mat.n_channels = phases.n_channels;
  mat.band = band;
  mat.s.assign(mat.n_channels * mat.n_channels, 0.0);
  for (size_t k1 = 0; k1 < mat.n_channels; ++k1) {
    for (size_t k2 = k1 + 1; k2 < mat.n_channels; ++k2) {
      const double v = plv_pair(phases, k1, k2);
      mat.at(k1, k2) = v;  // upper triangle ...
      mat.at(k2, k1) = v;  // ... plus its transpose; diagonal stays zero
    }
  }
  return mat;
}

ChannelWeights channel_weights(const PlvMatrix& mat) {
  const size_t k_count = mat.n_channels;
  std::vector<double> sums(k_count, 0.0);
  for (size_t k2 = 0; k2 < k_count; ++k2) {
    for (size_t k1 = 0; k1 < k_count; ++k1) sums[k2] += mat.at(k1, k2);
  }
  const auto [mn_it, mx_it] = std::minmax_element(sums.begin(), sums.end());
  const double mn = *mn_it;
  const double mx = *mx_it;

  ChannelWeights out;
  out.band = mat.band;
  out.w.resize(k_count);
  if (mx == mn) {
    std::fill(out.w.begin(), out.w.end(), 0.5);
  } else {
    for (size_t k = 0; k < k_count; ++k) out.w[k] = (sums[k] - mn) / (mx - mn);
  }
  return out;
}

EpochSet apply_weights(const EpochSet& set, const ChannelWeights& weights) {
  if (weights.w.size() != set.n_channels) {
    throw std::invalid_argument("weight vector length does not match channel count");
  }
  EpochSet out = set;
  for (size_t n = 0; n < set.n_trials; ++n) {
    for (size_t k = 0; k < set.n_channels; ++k) {
      const float w = static_cast<float>(weights.w[k]);
      for (float& v : out.trace(n, k)) v *= w;
    }
  }
  return out;
}

EdgeList strong_edges(const PlvMatrix& mat, double threshold) {
  if (!(threshold >= 0.0) || !(threshold < 1.0)) {
    throw std::invalid_argument("threshold must lie in [0, 1)");
  }
  EdgeList out;
  out.threshold = threshold;
  for (size_t k1 = 0; k1 < mat.n_channels; ++k1) {
    for (size_t k2 = k1 + 1; k2 < mat.n_channels; ++k2) {
      if (mat.at(k1, k2) > threshold) out.edges.push_back({k1, k2, mat.at(k1, k2)});
    }
  }
  std::sort(out.edges.begin(), out.edges.end(), [](const Edge& a, const Edge& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.k1 != b.k1) return a.k1 < b.k1;
    return a.k2 < b.k2;
  });
  return out;
}

double plv_similarity(const PlvMatrix& a, const PlvMatrix& b) {
  if (a.n_channels != b.n_channels) throw std::invalid_argument("PLV matrices differ in size");
  std::vector<double> va, vb;
  for (size_t k1 = 0; k1 < a.n_channels; ++k1) {
    for (size_t k2 = k1 + 1; k2 < a.n_channels; ++k2) {
      va.push_back(a.at(k1, k2));
      vb.push_back(b.at(k1, k2));
    }
  }
  const size_t n = va.size();
  if (n < 2) throw std::invalid_argument("need at least 3 channels for a correlation");
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += va[i];
    mb += vb[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sab += (va[i] - ma) * (vb[i] - mb);
    saa += (va[i] - ma) * (va[i] - ma);
    sbb += (vb[i] - mb) * (vb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw std::invalid_argument("constant PLV vector");
  return sab / std::sqrt(saa * sbb);
}

std::string edges_to_csv(const EdgeList& edges, const Montage& montage) {
  std::ostringstream out;
  out.precision(17);
  out << "k1_name,k2_name,score\n";
  for (const auto& e : edges.edges) {
    out << montage.channel_names.at(e.k1) << "," << montage.channel_names.at(e.k2) << ","
        << e.score << "\n";
  }
  return out.str();
}

std::string edges_to_json(const EdgeList& edges, const Montage& montage) {
  nlohmann::ordered_json j;
  j["threshold"] = edges.threshold;
  j["edges"] = nlohmann::json::array();
  for (const auto& e : edges.edges) {
    j["edges"].push_back({{"k1", montage.channel_names.at(e.k1)},
                          {"k2", montage.channel_names.at(e.k2)},
                          {"score", e.score}});
  }
  return j.dump(2) + "\n";
}

std::string weights_to_json(const ChannelWeights& weights, const Montage& montage) {
  nlohmann::ordered_json j;
  j["band"] = weights.band.name;
  j["channels"] = montage.channel_names;
  j["weights"] = weights.w;
  return j.dump(2) + "\n";
}

}  // namespace fcdn
