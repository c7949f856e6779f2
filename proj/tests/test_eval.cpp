#include <doctest.h>

#include <set>

#include "fcdn/eval.hpp"
#include "fcdn/rng.hpp"
#include "oracles.hpp"

using namespace fcdn;

namespace {

EpochSet labeled_set(size_t per_class, size_t classes, size_t k = 2, size_t t = 16,
                     uint64_t seed = 1) {
  EpochSet s = EpochSet::empty(250.0, per_class * classes, k, t);
  for (size_t c = 0; c < classes; ++c) s.class_names.push_back("c" + std::to_string(c));
  for (size_t ch = 0; ch < k; ++ch) s.montage.channel_names.push_back("ch" + std::to_string(ch));
  Rng rng(seed);
  for (auto& v : s.samples) v = static_cast<float>(rng.normal());
  // Interleave labels so shuffles matter.
  for (size_t n = 0; n < s.n_trials; ++n) s.labels[n] = static_cast<int>(n % classes);
  return s;
}

void check_disjoint_cover(const SplitPlan& plan, size_t n) {
  std::set<size_t> seen;
  for (const auto* part : {&plan.train, &plan.val, &plan.test}) {
    for (size_t i : *part) {
      CHECK(i < n);
      CHECK(seen.insert(i).second);  // disjoint
    }
  }
  CHECK(seen.size() == n);  // covering
}

// Always predicts the window's true label.
struct PerfectStub : WindowClassifier {
  std::vector<std::vector<double>> predict_probs(const EpochSet& window) override {
    std::vector<std::vector<double>> out(window.n_trials,
                                         std::vector<double>(window.n_classes(), 0.0));
    for (size_t n = 0; n < window.n_trials; ++n) {
      out[n][static_cast<size_t>(window.labels[n])] = 1.0;
    }
    return out;
  }
};

// Correct exactly on the windows flagged in `pattern` (indexed by call order).
struct PatternStub : WindowClassifier {
  std::vector<bool> pattern;
  size_t call{0};
  std::vector<std::vector<double>> predict_probs(const EpochSet& window) override {
    const bool correct = pattern.at(call++);
    std::vector<std::vector<double>> out(window.n_trials,
                                         std::vector<double>(window.n_classes(), 0.0));
    for (size_t n = 0; n < window.n_trials; ++n) {
      const auto truth = static_cast<size_t>(window.labels[n]);
      out[n][correct ? truth : (truth + 1) % window.n_classes()] = 1.0;
    }
    return out;
  }
};

}  // namespace

TEST_CASE("augmentation: 800 trials become 4000 with originals retained") {
  auto s = labeled_set(200, 4);  // N = 800
  auto aug = augment_gaussian(s, 5, 0.05, 42);
  CHECK(aug.n_trials == 4000);
  for (size_t n = 0; n < s.n_trials; ++n) {
    CHECK(aug.labels[n * 5] == s.labels[n]);
    // First trial of each group is the untouched original.
    CHECK(std::equal(s.trace(n, 0).begin(), s.trace(n, 0).end(), aug.trace(n * 5, 0).begin()));
    for (size_t copy = 1; copy < 5; ++copy) CHECK(aug.labels[n * 5 + copy] == s.labels[n]);
  }
}

TEST_CASE("augment factor 1 is the identity, sigma 0 copies bits") {
  auto s = labeled_set(5, 2);
  CHECK(augment_gaussian(s, 1, 0.05, 1).samples == s.samples);
  auto aug = augment_gaussian(s, 3, 0.0, 1);
  for (size_t n = 0; n < s.n_trials; ++n) {
    for (size_t copy = 0; copy < 3; ++copy) {
      CHECK(std::equal(s.trace(n, 1).begin(), s.trace(n, 1).end(),
                       aug.trace(n * 3 + copy, 1).begin()));
    }
  }
  CHECK_THROWS_AS(augment_gaussian(s, 0, 0.05, 1), std::invalid_argument);
}

TEST_CASE("augment noise scale follows the per-channel std") {
  auto s = labeled_set(3, 2, 2, 512, 7);
  // Make channel 1 ten times louder.
  for (size_t n = 0; n < s.n_trials; ++n) {
    for (float& v : s.trace(n, 1)) v *= 10.0f;
  }
  auto aug = augment_gaussian(s, 30, 0.1, 9);
  double dev0 = 0.0, dev1 = 0.0;
  size_t count = 0;
  for (size_t n = 0; n < s.n_trials; ++n) {
    for (size_t copy = 1; copy < 30; ++copy) {
      for (size_t t = 0; t < s.n_samples; ++t) {
        const double d0 = aug.at(n * 30 + copy, 0, t) - s.at(n, 0, t);
        const double d1 = aug.at(n * 30 + copy, 1, t) - s.at(n, 1, t);
        dev0 += d0 * d0;
        dev1 += d1 * d1;
        ++count;
      }
    }
  }
  // Noise variance tracks the 10x louder channel (100x power).
  CHECK(dev1 / dev0 == doctest::Approx(100.0).epsilon(0.15));
  (void)count;
}

TEST_CASE("60/20/20 split: exact on divisible classes") {
  auto s = labeled_set(100, 4);
  auto plan = split_62_2(s, 3);
  check_disjoint_cover(plan, 400);
  CHECK(plan.train.size() == 240);
  CHECK(plan.val.size() == 80);
  CHECK(plan.test.size() == 80);
  // Stratified: 60/20/20 within every class.
  for (size_t c = 0; c < 4; ++c) {
    size_t tr = 0;
    for (size_t i : plan.train) tr += s.labels[i] == static_cast<int>(c);
    CHECK(tr == 60);
  }
}

TEST_CASE("41 per class rounds to 25/8/8 by largest remainder") {
  auto s = labeled_set(41, 2);
  auto plan = split_62_2(s, 5);
  check_disjoint_cover(plan, 82);
  for (size_t c = 0; c < 2; ++c) {
    size_t tr = 0, va = 0, te = 0;
    for (size_t i : plan.train) tr += s.labels[i] == static_cast<int>(c);
    for (size_t i : plan.val) va += s.labels[i] == static_cast<int>(c);
    for (size_t i : plan.test) te += s.labels[i] == static_cast<int>(c);
    CHECK(tr == 25);
    CHECK(va == 8);
    CHECK(te == 8);
  }
}

TEST_CASE("splits hold disjointness and coverage for 100 seeds") {
  auto s = labeled_set(13, 3);
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    check_disjoint_cover(split_62_2(s, seed), 39);
  }
}

TEST_CASE("origin groups never straddle a split boundary") {
  auto s = labeled_set(10, 2);
  auto aug = augment_gaussian(s, 4, 0.05, 6);
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    auto plan = split_62_2(aug, seed, 4);
    check_disjoint_cover(plan, 80);
    auto bucket_of = [&](size_t idx) {
      for (size_t i : plan.train) {
        if (i == idx) return 0;
      }
      for (size_t i : plan.val) {
        if (i == idx) return 1;
      }
      return 2;
    };
    for (size_t g = 0; g < 20; ++g) {
      const int b = bucket_of(g * 4);
      for (size_t j = 1; j < 4; ++j) CHECK(bucket_of(g * 4 + j) == b);
    }
  }
}

TEST_CASE("too few trials per class is an error") {
  auto s = labeled_set(4, 2);
  CHECK_THROWS_AS(split_62_2(s, 1), std::invalid_argument);
}

TEST_CASE("kfold: five disjoint folds of 20 covering 100 trials") {
  auto s = labeled_set(25, 4);
  auto folds = kfold(s, 5, 11);
  REQUIRE(folds.size() == 5);
  std::set<size_t> seen;
  for (const auto& plan : folds) {
    CHECK(plan.test.size() == 20);
    CHECK(plan.train.size() == 80);
    for (size_t i : plan.test) CHECK(seen.insert(i).second);
    // train = complement of test.
    std::set<size_t> tr(plan.train.begin(), plan.train.end());
    for (size_t i : plan.test) CHECK(tr.count(i) == 0);
  }
  CHECK(seen.size() == 100);
  CHECK_THROWS_AS(kfold(s, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(kfold(s, 101, 1), std::invalid_argument);
}

TEST_CASE("loso concatenates the other subjects") {
  std::vector<EpochSet> subjects;
  for (uint64_t sub = 0; sub < 5; ++sub) {
    auto s = labeled_set(10, 4, 2, 8, sub + 1);
    // Tag every sample with the subject id so provenance is checkable.
    for (auto& v : s.samples) v = static_cast<float>(sub);
    subjects.push_back(s);
  }
  auto [train, test] = loso(subjects, 2);
  CHECK(train.n_trials == 160);
  CHECK(test.n_trials == 40);
  for (float v : train.samples) CHECK(v != 2.0f);
  for (float v : test.samples) CHECK(v == 2.0f);

  SUBCASE("two subjects: train is the other one entirely") {
    std::vector<EpochSet> pair = {subjects[0], subjects[1]};
    auto [tr, te] = loso(pair, 0);
    CHECK(tr.n_trials == 40);
    for (float v : tr.samples) CHECK(v == 1.0f);
  }
  SUBCASE("montage mismatch is rejected") {
    auto odd = subjects;
    odd[1].montage.channel_names = {"x0", "x1"};
    CHECK_THROWS_AS(loso(odd, 0), std::invalid_argument);
    CHECK_THROWS_AS(loso(subjects, 9), std::out_of_range);
  }
}

TEST_CASE("accuracy basics") {
  CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(accuracy({1, 2, 3}, {2, 3, 1}) == 0.0);
  CHECK(accuracy({0, 1, 2, 3}, {0, 1, 2, 0}) == 0.75);
  CHECK_THROWS_AS(accuracy({1}, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(accuracy({}, {}), std::invalid_argument);
}

TEST_CASE("permutation test: identical samples give p = 1") {
  std::vector<double> a = {0.5, 0.6, 0.7, 0.8};
  CHECK(permutation_test_paired(a, a) == 1.0);
}

TEST_CASE("permutation test: differences (1,2,3) give exactly 2/8") {
  std::vector<double> a = {1.0, 2.0, 3.0};
  std::vector<double> b = {0.0, 0.0, 0.0};
  CHECK(permutation_test_paired(a, b) == 0.25);
}

TEST_CASE("n <= 12 equals the full enumeration oracle bit-for-bit") {
  Rng rng(13);
  for (int round = 0; round < 20; ++round) {
    const size_t n = 2 + rng.index(11);
    std::vector<double> a(n), b(n), d(n);
    for (size_t i = 0; i < n; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
      d[i] = a[i] - b[i];
    }
    CHECK(permutation_test_paired(a, b) == oracle::perm_test_reference(d));
  }
}

TEST_CASE("sampled path: p-values are deterministic per seed and sane") {
  Rng rng(14);
  std::vector<double> a(20), b(20);
  for (size_t i = 0; i < 20; ++i) {
    a[i] = rng.normal();
    b[i] = a[i] + 2.0 + 0.1 * rng.normal();  // strong effect
  }
  const double p1 = permutation_test_paired(a, b, 2000, 5);
  const double p2 = permutation_test_paired(a, b, 2000, 5);
  CHECK(p1 == p2);
  CHECK(p1 < 0.01);
  CHECK_THROWS_AS(permutation_test_paired(a, {1.0}, 100, 1), std::invalid_argument);
}

TEST_CASE("pseudo-online: 5 s at 250 Hz yields exactly 4 windows") {
  auto s = labeled_set(8, 4, 2, 1250);
  s.fs_hz = 250.0;
  PerfectStub stub;
  auto res = pseudo_online(stub, s);
  CHECK(res.n_windows == 4);
  CHECK(res.success_rate == 1.0);
  for (const auto& tr : res.trials) CHECK(tr.correct_windows == 4);
  for (size_t n = 0; n < s.n_trials; ++n) {
    CHECK(res.trials[n].fused_label == s.labels[n]);
  }
}

TEST_CASE("3-of-4 correct windows: success under >=, failure under strict >") {
  auto s = labeled_set(6, 3, 2, 1250);
  s.fs_hz = 250.0;
  PatternStub stub;
  stub.pattern = {true, true, true, false};
  auto res = pseudo_online(stub, s, 2.0, 0.5, 0.75, false);
  CHECK(res.success_rate == 1.0);

  stub.call = 0;
  auto strict = pseudo_online(stub, s, 2.0, 0.5, 0.75, true);
  CHECK(strict.success_rate == 0.0);
  for (const auto& tr : strict.trials) CHECK(tr.correct_windows == 3);
}

TEST_CASE("pseudo-online success rate is invariant under trial reordering") {
  auto s = labeled_set(10, 2, 2, 1250);
  s.fs_hz = 250.0;
  PatternStub stub;
  stub.pattern = {true, false, true, true};
  const double rate = pseudo_online(stub, s).success_rate;

  std::vector<size_t> perm(s.n_trials);
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = perm.size() - 1 - i;
  auto shuffled = s.select_trials(perm);
  PatternStub stub2;
  stub2.pattern = stub.pattern;
  CHECK(pseudo_online(stub2, shuffled).success_rate == rate);
}

TEST_CASE("pseudo-online rejects impossible window schedules") {
  auto s = labeled_set(2, 2, 2, 100);
  s.fs_hz = 250.0;  // 0.4 s trials
  PerfectStub stub;
  CHECK_THROWS_AS(pseudo_online(stub, s, 2.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(pseudo_online(stub, s, 0.0, 0.5), std::invalid_argument);
}

TEST_CASE("pseudo-online CSV lists one row per trial") {
  auto s = labeled_set(3, 2, 2, 1250);
  s.fs_hz = 250.0;
  PerfectStub stub;
  const auto csv = pseudo_online_to_csv(pseudo_online(stub, s));
  CHECK(csv.find("trial,window1,window2,window3,window4,fused,correct_windows,success") !=
        std::string::npos);
  size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  CHECK(lines == 1 + s.n_trials);
}
