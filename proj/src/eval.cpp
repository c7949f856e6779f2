#include "fcdn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fcdn/rng.hpp"

namespace fcdn {

EpochSet augment_gaussian(const EpochSet& set, size_t factor, double sigma_rel, uint64_t seed) {
  if (factor == 0) throw std::invalid_argument("augment factor must be >= 1");
  if (sigma_rel < 0.0) throw std::invalid_argument("sigma_rel must be >= 0");
  set.validate();
  if (factor == 1) return set;

  EpochSet out = EpochSet::empty(set.fs_hz, set.n_trials * factor, set.n_channels, set.n_samples);
  out.class_names = set.class_names;
  out.montage = set.montage;

  Rng rng(seed);
  for (size_t n = 0; n < set.n_trials; ++n) {
    for (size_t copy = 0; copy < factor; ++copy) {
      const size_t dst_trial = n * factor + copy;
      out.labels[dst_trial] = set.labels[n];
      for (size_t k = 0; k < set.n_channels; ++k) {
        const auto src = set.trace(n, k);
        auto dst = out.trace(dst_trial, k);
        if (copy == 0) {
          std::copy(src.begin(), src.end(), dst.begin());
          continue;
        }
        double mean = 0.0;
        for (float v : src) mean += v;
        mean /= static_cast<double>(src.size());
        double var = 0.0;
        for (float v : src) var += (v - mean) * (v - mean);
        var /= static_cast<double>(src.size());
        const double sigma = sigma_rel * std::sqrt(var);
        for (size_t t = 0; t < src.size(); ++t) {
          dst[t] = static_cast<float>(src[t] + sigma * rng.normal());
        }
      }
    }
  }
  return out;
}

namespace {

// Origin groups per class: each group is `origin_group` consecutive trials
// sharing one label.
std::vector<std::vector<size_t>> groups_by_class(const EpochSet& set, size_t origin_group,
                                                 size_t n_classes) {
  if (origin_group == 0 || set.n_trials % origin_group != 0) {
    throw std::invalid_argument("trial count is not a multiple of the origin group size");
  }
  const size_t n_groups = set.n_trials / origin_group;
  std::vector<std::vector<size_t>> by_class(n_classes);
  for (size_t g = 0; g < n_groups; ++g) {
    const int label = set.labels[g * origin_group];
    for (size_t j = 1; j < origin_group; ++j) {
      if (set.labels[g * origin_group + j] != label) {
        throw std::invalid_argument("origin group spans different labels");
      }
    }
    by_class[static_cast<size_t>(label)].push_back(g);
  }
  return by_class;
}

void expand_group(std::vector<size_t>& dst, size_t group, size_t origin_group) {
  for (size_t j = 0; j < origin_group; ++j) dst.push_back(group * origin_group + j);
}

// Largest-remainder apportionment of n into the given fractions.
std::vector<size_t> apportion(size_t n, const std::vector<double>& fractions) {
  std::vector<size_t> counts(fractions.size());
  std::vector<std::pair<double, size_t>> remainders;
  size_t assigned = 0;
  for (size_t i = 0; i < fractions.size(); ++i) {
    const double exact = static_cast<double>(n) * fractions[i];
    counts[i] = static_cast<size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.push_back({exact - std::floor(exact), i});
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (size_t i = 0; assigned < n; ++i, ++assigned) {
    counts[remainders[i % remainders.size()].second] += 1;
  }
  return counts;
}

}  // namespace

SplitPlan split_62_2(const EpochSet& set, uint64_t seed, size_t origin_group) {
  set.validate();
  auto by_class = groups_by_class(set, origin_group, set.n_classes());
  for (const auto& groups : by_class) {
    if (groups.size() < 5) throw std::invalid_argument("too few trials per class for 60/20/20");
  }

  SplitPlan plan;
  plan.seed = seed;
  plan.stratified = true;
  Rng rng(seed);
  for (auto& groups : by_class) {
    rng.shuffle(groups);
    const auto counts = apportion(groups.size(), {0.6, 0.2, 0.2});
    size_t pos = 0;
    for (size_t i = 0; i < counts[0]; ++i) expand_group(plan.train, groups[pos++], origin_group);
    for (size_t i = 0; i < counts[1]; ++i) expand_group(plan.val, groups[pos++], origin_group);
    for (size_t i = 0; i < counts[2]; ++i) expand_group(plan.test, groups[pos++], origin_group);
  }
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.val.begin(), plan.val.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

std::vector<SplitPlan> kfold(const EpochSet& set, size_t k, uint64_t seed, size_t origin_group) {
  set.validate();
  if (k < 2) throw std::invalid_argument("k must be >= 2");
  if (k > set.n_trials / origin_group) throw std::invalid_argument("k exceeds group count");
  auto by_class = groups_by_class(set, origin_group, set.n_classes());

  std::vector<std::vector<size_t>> folds(k);
  Rng rng(seed);
  for (auto& groups : by_class) {
    rng.shuffle(groups);
    for (size_t i = 0; i < groups.size(); ++i) {
      expand_group(folds[i % k], groups[i], origin_group);
    }
  }
  std::vector<SplitPlan> plans(k);
  for (size_t f = 0; f < k; ++f) {
    plans[f].seed = seed;
    plans[f].stratified = true;
    plans[f].test = folds[f];
    for (size_t other = 0; other < k; ++other) {
      if (other == f) continue;
      plans[f].train.insert(plans[f].train.end(), folds[other].begin(), folds[other].end());
    }
    std::sort(plans[f].train.begin(), plans[f].train.end());
    std::sort(plans[f].test.begin(), plans[f].test.end());
  }
  return plans;
}

std::pair<EpochSet, EpochSet> loso(const std::vector<EpochSet>& subject_sets,
                                   size_t target_index) {
  if (subject_sets.size() < 2) throw std::invalid_argument("LOSO needs at least 2 subjects");
  if (target_index >= subject_sets.size()) throw std::out_of_range("target index out of range");
  const auto& ref = subject_sets[0];
  for (const auto& s : subject_sets) {
    if (s.montage.channel_names != ref.montage.channel_names) {
      throw std::invalid_argument("montage mismatch between subjects");
    }
    if (s.fs_hz != ref.fs_hz || s.n_samples != ref.n_samples ||
        s.class_names != ref.class_names) {
      throw std::invalid_argument("subject sets are not compatible");
    }
  }

  size_t train_trials = 0;
  for (size_t i = 0; i < subject_sets.size(); ++i) {
    if (i != target_index) train_trials += subject_sets[i].n_trials;
  }
  EpochSet train = EpochSet::empty(ref.fs_hz, train_trials, ref.n_channels, ref.n_samples);
  train.class_names = ref.class_names;
  train.montage = ref.montage;
  size_t pos = 0;
  for (size_t i = 0; i < subject_sets.size(); ++i) {
    if (i == target_index) continue;
    const auto& s = subject_sets[i];
    std::copy(s.samples.begin(), s.samples.end(),
              train.samples.begin() + static_cast<ptrdiff_t>(pos * ref.n_channels * ref.n_samples));
    std::copy(s.labels.begin(), s.labels.end(), train.labels.begin() + static_cast<ptrdiff_t>(pos));
    pos += s.n_trials;
  }
  return {train, subject_sets[target_index]};
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("length mismatch");
  if (predicted.empty()) throw std::invalid_argument("empty label vectors");
  size_t hits = 0;
  for (size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double permutation_test_paired(const std::vector<double>& a, const std::vector<double>& b,
                               size_t n_perm, uint64_t seed) {
  if (a.size() != b.size()) throw std::invalid_argument("length mismatch");
  const size_t n = a.size();
  if (n < 2) throw std::invalid_argument("need at least 2 pairs");

  std::vector<double> d(n);
  for (size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double inv_n = 1.0 / static_cast<double>(n);
  double observed = 0.0;
  for (double v : d) observed += v;
  observed = std::abs(observed * inv_n);

  if (n <= 12) {
    const uint64_t total = uint64_t{1} << n;
    uint64_t count = 0;
    for (uint64_t mask = 0; mask < total; ++mask) {
      double stat = 0.0;
      for (size_t i = 0; i < n; ++i) stat += (mask >> i) & 1 ? -d[i] : d[i];
      if (std::abs(stat * inv_n) >= observed) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(total);
  }

  Rng rng(seed);
  size_t count = 0;
  for (size_t p = 0; p < n_perm; ++p) {
    double stat = 0.0;
    for (size_t i = 0; i < n; ++i) stat += rng.next_u64() & 1 ? -d[i] : d[i];
    if (std::abs(stat * inv_n) >= observed) ++count;
  }
  return static_cast<double>(count + 1) / static_cast<double>(n_perm + 1);
}

PseudoOnlineResult pseudo_online(WindowClassifier& classifier, const EpochSet& set,
                                 double window_s, double overlap, double success_threshold,
                                 bool strict) {
  set.validate();
  if (!(window_s > 0.0)) throw std::invalid_argument("window length must be positive");
  if (!(overlap >= 0.0) || overlap >= 1.0) throw std::invalid_argument("overlap must lie in [0, 1)");
  const size_t win = static_cast<size_t>(std::lround(window_s * set.fs_hz));
  if (win < 1 || win > set.n_samples) throw std::invalid_argument("window longer than trial");
  const size_t hop = std::max<size_t>(1, static_cast<size_t>(std::lround(window_s * (1.0 - overlap) * set.fs_hz)));
  const size_t n_windows = (set.n_samples - win) / hop + 1;
  if (n_windows == 0) throw std::invalid_argument("window schedule yields zero windows");

  const size_t n_classes = set.n_classes();
  PseudoOnlineResult res;
  res.n_windows = n_windows;
  res.window_s = window_s;
  res.overlap = overlap;
  res.success_threshold = success_threshold;
  res.strict = strict;
  res.trials.resize(set.n_trials);
  for (auto& tr : res.trials) {
    tr.window_probs.assign(n_windows, std::vector<double>(n_classes, 0.0));
    tr.window_labels.assign(n_windows, 0);
  }

  for (size_t w = 0; w < n_windows; ++w) {
    const EpochSet slice = set.slice_time(w * hop, win);
    const auto probs = classifier.predict_probs(slice);
    if (probs.size() != set.n_trials) {
      throw std::invalid_argument("classifier returned wrong trial count");
    }
    for (size_t n = 0; n < set.n_trials; ++n) {
      if (probs[n].size() != n_classes) {
        throw std::invalid_argument("classifier returned wrong class count");
      }
      res.trials[n].window_probs[w] = probs[n];
      res.trials[n].window_labels[w] = static_cast<int>(
          std::distance(probs[n].begin(), std::max_element(probs[n].begin(), probs[n].end())));
    }
  }

  size_t successes = 0;
  for (size_t n = 0; n < set.n_trials; ++n) {
    auto& tr = res.trials[n];
    std::vector<double> fused(n_classes, 0.0);
    for (size_t w = 0; w < n_windows; ++w) {
      for (size_t c = 0; c < n_classes; ++c) fused[c] += tr.window_probs[w][c];
      if (tr.window_labels[w] == set.labels[n]) ++tr.correct_windows;
    }
    tr.fused_label = static_cast<int>(
        std::distance(fused.begin(), std::max_element(fused.begin(), fused.end())));
    const double frac = static_cast<double>(tr.correct_windows) / static_cast<double>(n_windows);
    tr.success = strict ? frac > success_threshold : frac >= success_threshold;
    successes += tr.success;
  }
  res.success_rate = static_cast<double>(successes) / static_cast<double>(set.n_trials);
  return res;
}

std::string pseudo_online_to_csv(const PseudoOnlineResult& result) {
  std::ostringstream out;
  out << "trial";
  for (size_t w = 0; w < result.n_windows; ++w) out << ",window" << (w + 1);
  out << ",fused,correct_windows,success\n";
  for (size_t n = 0; n < result.trials.size(); ++n) {
    const auto& tr = result.trials[n];
    out << n;
    for (int label : tr.window_labels) out << "," << label;
    out << "," << tr.fused_label << "," << tr.correct_windows << "," << (tr.success ? 1 : 0)
        << "\n";
  }
  return out.str();
}

}  // namespace fcdn
