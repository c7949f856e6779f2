#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fcdn/types.hpp"

namespace fcdn {

// Train/val/test index lists into an EpochSet. Disjoint, covering, and
// stratified (per-class proportions within one unit of 60/20/20) unless
// stated otherwise.
struct SplitPlan {
  std::vector<size_t> train, val, test;
  uint64_t seed{0};
  bool stratified{true};
};

// Gaussian augmentation: each trial is followed by (factor-1) noisy copies
// with i.i.d. noise of std = sigma_rel * that trial's per-channel std.
// Output layout is origin-grouped: source of output trial i is i / factor,
// and the first trial of each group is the original.
EpochSet augment_gaussian(const EpochSet& set, size_t factor = 5, double sigma_rel = 0.05,
                          uint64_t seed = 1);

// Stratified 60/20/20 split with largest-remainder rounding per class.
// `origin_group` is the number of consecutive trials forming one origin
// group (augment_gaussian's factor); groups never straddle splits.
SplitPlan split_62_2(const EpochSet& set, uint64_t seed, size_t origin_group = 1);

// Stratified k-fold (k >= 2): disjoint test folds covering all trials,
// origin-grouped as above. val lists are empty.
std::vector<SplitPlan> kfold(const EpochSet& set, size_t k = 5, uint64_t seed = 1,
                             size_t origin_group = 1);

// Leave-one-subject-out: train = concatenation of every other subject,
// test = the target subject. Montages, rates and classes must agree.
std::pair<EpochSet, EpochSet> loso(const std::vector<EpochSet>& subject_sets,
                                   size_t target_index);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

// Two-sided paired sign-flip permutation test on mean difference.
// Exact enumeration of all 2^n flips when n <= 12 (p = count / 2^n);
// otherwise n_perm sampled flips with p = (count + 1) / (n_perm + 1).
double permutation_test_paired(const std::vector<double>& a, const std::vector<double>& b,
                               size_t n_perm = 10000, uint64_t seed = 1);

// Anything that can score one time-slice of an EpochSet; rows of the
// returned matrix are per-trial class probabilities.
struct WindowClassifier {
  virtual ~WindowClassifier() = default;
  virtual std::vector<std::vector<double>> predict_probs(const EpochSet& window) = 0;
};

struct PseudoOnlineTrial {
  std::vector<int> window_labels;
  std::vector<std::vector<double>> window_probs;
  int fused_label{0};
  size_t correct_windows{0};
  bool success{false};
};

struct PseudoOnlineResult {
  std::vector<PseudoOnlineTrial> trials;
  size_t n_windows{0};
  double window_s{2.0};
  double overlap{0.5};
  double success_threshold{0.75};
  bool strict{false};
  double success_rate{0.0};
};

// Sliding-window replay: the classifier scores each window slice, the fused
// trial label is the argmax of the mean window probabilities, and a trial
// succeeds when correct_windows / n_windows >= threshold (> when strict).
PseudoOnlineResult pseudo_online(WindowClassifier& classifier, const EpochSet& set,
                                 double window_s = 2.0, double overlap = 0.5,
                                 double success_threshold = 0.75, bool strict = false);

// Per-trial CSV: trial,window1..N,fused,correct_windows,success.
std::string pseudo_online_to_csv(const PseudoOnlineResult& result);

}  // namespace fcdn
