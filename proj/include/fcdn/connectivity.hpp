#pragma once

#include <string>
#include <vector>

#include "fcdn/dsp.hpp"
#include "fcdn/types.hpp"

namespace fcdn {

// Symmetrized phase-locking matrix for one band. The strict upper triangle
// holds pairwise PLV; the matrix is the triangle plus its transpose, so the
// diagonal is zero and S == S^T exactly.
struct PlvMatrix {
  size_t n_channels{0};
  BandSpec band;
  std::vector<double> s;  // K*K row-major

  double at(size_t k1, size_t k2) const { return s[k1 * n_channels + k2]; }
  double& at(size_t k1, size_t k2) { return s[k1 * n_channels + k2]; }
};

// Min-max normalized per-channel connectivity strength in [0, 1].
struct ChannelWeights {
  std::vector<double> w;
  BandSpec band;
};

struct Edge {
  size_t k1{0};  // k1 < k2
  size_t k2{0};
  double score{0.0};
};

struct EdgeList {
  std::vector<Edge> edges;  // sorted by descending score
  double threshold{0.0};
};

// |mean over all N*T samples of exp(i*(phi_k1 - phi_k2))|, in [0, 1].
// The pair is canonicalized (k1 <= k2) before computing, so
// plv_pair(a, b) == plv_pair(b, a) bit-for-bit.
double plv_pair(const PhaseSeries& phases, size_t k1, size_t k2);

PlvMatrix plv_matrix(const PhaseSeries& phases, const BandSpec& band);

// Column sums of S, min-max normalized. A constant-sum matrix (e.g. K == 2,
// where symmetry forces both sums equal) degenerates to all 0.5.
ChannelWeights channel_weights(const PlvMatrix& mat);

// out[n][k][t] = w[k] * in[n][k][t]; labels and metadata unchanged.
EpochSet apply_weights(const EpochSet& set, const ChannelWeights& weights);

// All pairs with S > threshold (threshold in [0, 1)), strongest first.
EdgeList strong_edges(const PlvMatrix& mat, double threshold = 0.9);

// Pearson correlation of the vectorized strict upper triangles.
double plv_similarity(const PlvMatrix& a, const PlvMatrix& b);

// Exports consumed by external plotting (chord diagrams, topographies).
std::string edges_to_csv(const EdgeList& edges, const Montage& montage);
std::string edges_to_json(const EdgeList& edges, const Montage& montage);
std::string weights_to_json(const ChannelWeights& weights, const Montage& montage);

}  // namespace fcdn
