#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "mvtrack/metrics.hpp"
#include "test_util.hpp"

using namespace mvtrack;

namespace {

std::vector<int> RandomLabels(int n, int n_classes, std::mt19937_64& rng) {
  std::vector<int> out(n);
  for (int& x : out) x = static_cast<int>(rng() % n_classes);
  return out;
}

// Textbook entropy-formula oracle with explicit probability tables.
std::tuple<double, double, double> HcvOracle(const std::vector<int>& pred,
                                             const std::vector<int>& truth) {
  const double n = static_cast<double>(pred.size());
  std::map<int, double> pc, pk;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pk[pred[i]] += 1.0 / n;
    pc[truth[i]] += 1.0 / n;
    joint[{pred[i], truth[i]}] += 1.0 / n;
  }
  double h_c = 0, h_k = 0, h_ck = 0, h_kc = 0;
  for (auto& [c, p] : pc) h_c -= p * std::log(p);
  for (auto& [k, p] : pk) h_k -= p * std::log(p);
  for (auto& [ck, p] : joint) {
    h_ck -= p * std::log(p / pk[ck.first]);   // H(C|K)
    h_kc -= p * std::log(p / pc[ck.second]);  // H(K|C)
  }
  const double h = h_c > 0 ? 1.0 - h_ck / h_c : 1.0;
  const double c = h_k > 0 ? 1.0 - h_kc / h_k : 1.0;
  const double v = h + c > 0 ? 2 * h * c / (h + c) : 0.0;
  return {h, c, v};
}

// Exhaustive one-to-one matching for small class counts.
double AccuracyByPermutation(const std::vector<int>& pred, const std::vector<int>& truth) {
  std::set<int> clusters(pred.begin(), pred.end());
  std::set<int> classes(truth.begin(), truth.end());
  std::vector<int> cl(clusters.begin(), clusters.end());
  std::vector<int> cs(classes.begin(), classes.end());
  // Permute over the larger side mapped onto the smaller.
  const bool permute_classes = cs.size() >= cl.size();
  std::vector<int>& longer = permute_classes ? cs : cl;
  std::vector<int>& shorter = permute_classes ? cl : cs;
  std::sort(longer.begin(), longer.end());
  double best = 0.0;
  do {
    double matched = 0.0;
    for (std::size_t s = 0; s < shorter.size(); ++s) {
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const int cluster = permute_classes ? shorter[s] : longer[s];
        const int cls = permute_classes ? longer[s] : shorter[s];
        if (pred[i] == cluster && truth[i] == cls) matched += 1.0;
      }
    }
    best = std::max(best, matched);
  } while (std::next_permutation(longer.begin(), longer.end()));
  return best / static_cast<double>(pred.size());
}

}  // namespace

TEST_CASE("homogeneity, completeness, v-measure") {
  SUBCASE("perfect prediction") {
    std::vector<int> truth{0, 0, 1, 1, 2};
    std::vector<int> pred{5, 5, 9, 9, 7};  // same partition, different names
    auto [h, c, v] = homogeneity_completeness_v(pred, truth);
    CHECK(h == doctest::Approx(1.0));
    CHECK(c == doctest::Approx(1.0));
    CHECK(v == doctest::Approx(1.0));
  }
  SUBCASE("single cluster on two balanced classes") {
    std::vector<int> truth{0, 0, 1, 1};
    std::vector<int> pred{3, 3, 3, 3};
    auto [h, c, v] = homogeneity_completeness_v(pred, truth);
    CHECK(h == doctest::Approx(0.0));
    CHECK(c == doctest::Approx(1.0));
    CHECK(v == doctest::Approx(0.0));
  }
  SUBCASE("random labelings match the entropy-formula oracle") {
    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 20 + static_cast<int>(rng() % 100);
      auto pred = RandomLabels(n, 2 + static_cast<int>(rng() % 6), rng);
      auto truth = RandomLabels(n, 2 + static_cast<int>(rng() % 6), rng);
      auto [h, c, v] = homogeneity_completeness_v(pred, truth);
      auto [oh, oc, ov] = HcvOracle(pred, truth);
      CHECK(h == doctest::Approx(oh).epsilon(1e-9));
      CHECK(c == doctest::Approx(oc).epsilon(1e-9));
      CHECK(v == doctest::Approx(ov).epsilon(1e-9));
      // Swapping pred and truth swaps h and c; v is symmetric.
      auto [h2, c2, v2] = homogeneity_completeness_v(truth, pred);
      CHECK(h2 == doctest::Approx(c).epsilon(1e-9));
      CHECK(c2 == doctest::Approx(h).epsilon(1e-9));
      CHECK(v2 == doctest::Approx(v).epsilon(1e-9));
    }
  }
  SUBCASE("relabeling invariance") {
    std::mt19937_64 rng(72);
    auto pred = RandomLabels(60, 4, rng);
    auto truth = RandomLabels(60, 5, rng);
    auto renamed = pred;
    for (int& x : renamed) x = 17 - 3 * x;  // injective rename
    CHECK(std::get<2>(homogeneity_completeness_v(pred, truth)) ==
          doctest::Approx(std::get<2>(homogeneity_completeness_v(renamed, truth))));
  }
  SUBCASE("length mismatch") {
    std::vector<int> a{0, 1}, b{0};
    CHECK_THROWS_AS(homogeneity_completeness_v(a, b), ValueError);
  }
}

TEST_CASE("purity and accuracy") {
  SUBCASE("perfect prediction") {
    std::vector<int> truth{0, 1, 2, 0};
    auto [purity, accuracy] = purity_accuracy(truth, truth);
    CHECK(purity == doctest::Approx(1.0));
    CHECK(accuracy == doctest::Approx(1.0));
  }
  SUBCASE("hand case: two clusters, skewed classes") {
    std::vector<int> pred{0, 0, 1, 1};
    std::vector<int> truth{0, 0, 0, 1};
    auto [purity, accuracy] = purity_accuracy(pred, truth);
    CHECK(purity == doctest::Approx(0.75));
    CHECK(accuracy == doctest::Approx(0.75));
  }
  SUBCASE("random labelings match the brute-force matching") {
    std::mt19937_64 rng(73);
    for (int trial = 0; trial < 25; ++trial) {
      const int n = 10 + static_cast<int>(rng() % 40);
      auto pred = RandomLabels(n, 2 + static_cast<int>(rng() % 5), rng);
      auto truth = RandomLabels(n, 2 + static_cast<int>(rng() % 5), rng);
      auto [purity, accuracy] = purity_accuracy(pred, truth);
      CHECK(accuracy == doctest::Approx(AccuracyByPermutation(pred, truth)).epsilon(1e-12));
      CHECK(accuracy <= purity + 1e-12);
      CHECK(purity <= 1.0);
      CHECK(accuracy >= 0.0);
    }
  }
  SUBCASE("more clusters than classes and vice versa") {
    std::vector<int> pred{0, 1, 2, 3};
    std::vector<int> truth{0, 0, 1, 1};
    auto [purity, accuracy] = purity_accuracy(pred, truth);
    CHECK(purity == doctest::Approx(1.0));
    CHECK(accuracy == doctest::Approx(0.5));
    auto [p2, a2] = purity_accuracy(truth, pred);
    CHECK(p2 == doctest::Approx(0.5));
    CHECK(a2 == doctest::Approx(0.5));
  }
}

TEST_CASE("hungarian assignment") {
  SUBCASE("known 3x3 instance") {
    MatrixD score(3, 3);
    score << 7, 5, 11, 5, 4, 1, 9, 3, 2;
    auto [cols, total] = solve_assignment_max(score);
    CHECK(total == doctest::Approx(24.0));  // 11 + 4 + 9
    CHECK(cols[0] == 2);
    CHECK(cols[1] == 1);
    CHECK(cols[2] == 0);
  }
  SUBCASE("random instances beat or equal greedy and match brute force") {
    std::mt19937_64 rng(74);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 2 + static_cast<int>(rng() % 5);
      MatrixD score = testutil::RandomMatrix(n, n, rng);
      auto [cols, total] = solve_assignment_max(score);
      // Brute force over permutations.
      std::vector<int> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      double best = -1e300;
      do {
        double s = 0;
        for (int i = 0; i < n; ++i) s += score(i, perm[i]);
        best = std::max(best, s);
      } while (std::next_permutation(perm.begin(), perm.end()));
      CHECK(total == doctest::Approx(best).epsilon(1e-9));
    }
  }
}

TEST_CASE("over-clustering index") {
  SUBCASE("perfect clustering gives 1") {
    std::vector<int> truth{0, 0, 1, 1, 2};
    CHECK(over_clustering_index(truth, truth) == doctest::Approx(1.0));
  }
  SUBCASE("one class split into three") {
    // Class 0 lands in clusters {0,1,2}; classes 1..3 intact: (3+1+1+1)/4.
    std::vector<int> pred{0, 1, 2, 3, 3, 4, 4, 5, 5};
    std::vector<int> truth{0, 0, 0, 1, 1, 2, 2, 3, 3};
    CHECK(over_clustering_index(pred, truth) == doctest::Approx((3.0 + 3.0) / 4.0));
  }
  SUBCASE("random labels match a set recount") {
    std::mt19937_64 rng(75);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 30 + static_cast<int>(rng() % 50);
      auto pred = RandomLabels(n, 2 + static_cast<int>(rng() % 8), rng);
      auto truth = RandomLabels(n, 2 + static_cast<int>(rng() % 5), rng);
      std::map<int, std::set<int>> seen;
      for (int i = 0; i < n; ++i) seen[truth[i]].insert(pred[i]);
      double sum = 0;
      for (auto& [cls, cl] : seen) sum += static_cast<double>(cl.size());
      CHECK(over_clustering_index(pred, truth) ==
            doctest::Approx(sum / static_cast<double>(seen.size())));
      CHECK(over_clustering_index(pred, truth) >= 1.0);
    }
  }
  SUBCASE("majority variant ignores stray members") {
    // Cluster 0 is majority class 0 with one stray class-1 member; the
    // default variant charges class 1 for it, the majority one does not.
    std::vector<int> pred{0, 0, 0, 1, 1};
    std::vector<int> truth{0, 0, 1, 1, 1};
    CHECK(over_clustering_index(pred, truth, false) == doctest::Approx(1.5));
    CHECK(over_clustering_index(pred, truth, true) == doctest::Approx(1.0));
  }
}

TEST_CASE("metric report bundle") {
  std::vector<int> truth{0, 0, 1, 1, 2, 2};
  MetricReport r = evaluate_clustering(truth, truth);
  CHECK(r.v_measure == doctest::Approx(1.0));
  CHECK(r.accuracy == doctest::Approx(1.0));
  CHECK(r.oci == doctest::Approx(1.0));
  CHECK(r.v_measure ==
        doctest::Approx(2 * r.homogeneity * r.completeness / (r.homogeneity + r.completeness)));
}

TEST_CASE("verification pairs") {
  SUBCASE("three tracks, two labels") {
    std::vector<int> labels{0, 0, 1};
    auto pairs = verification_pairs(labels);
    REQUIRE(pairs.size() == 3);
    int same = 0;
    for (const auto& p : pairs) same += p.same;
    CHECK(same == 1);
  }
  SUBCASE("all same label") {
    std::vector<int> labels{4, 4, 4, 4};
    auto pairs = verification_pairs(labels);
    CHECK(pairs.size() == 6);
    for (const auto& p : pairs) CHECK(p.same);
  }
  SUBCASE("pair counts match the combinatorial identity") {
    std::mt19937_64 rng(76);
    auto labels = RandomLabels(100, 7, rng);
    auto pairs = verification_pairs(labels);
    CHECK(pairs.size() == 100 * 99 / 2);
    std::map<int, double> counts;
    for (int l : labels) counts[l] += 1;
    double expect_same = 0;
    for (auto& [l, c] : counts) expect_same += c * (c - 1) / 2;
    double same = 0;
    for (const auto& p : pairs) same += p.same;
    CHECK(same == doctest::Approx(expect_same));
  }
}

TEST_CASE("tpr at fpr") {
  SUBCASE("perfect separation") {
    std::vector<double> scores{0.9, 0.8, 0.7, 0.2, 0.1};
    std::vector<char> same{1, 1, 1, 0, 0};
    CHECK(tpr_at_fpr(scores, same, 0.0) == doctest::Approx(1.0));
    CHECK(tpr_at_fpr(scores, same, 0.1) == doctest::Approx(1.0));
  }
  SUBCASE("identical scores collapse to the trivial operating points") {
    std::vector<double> scores{0.5, 0.5, 0.5, 0.5};
    std::vector<char> same{1, 0, 1, 0};
    CHECK(tpr_at_fpr(scores, same, 0.1) == doctest::Approx(0.0));
    CHECK(tpr_at_fpr(scores, same, 1.0) == doctest::Approx(1.0));
  }
  SUBCASE("single-class input is rejected") {
    std::vector<double> scores{0.5, 0.4};
    std::vector<char> same{1, 1};
    CHECK_THROWS_AS(tpr_at_fpr(scores, same, 0.1), ValueError);
  }
  SUBCASE("random scores match the exhaustive threshold sweep") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 1000;
      std::vector<double> scores(n);
      std::vector<char> same(n);
      for (int i = 0; i < n; ++i) {
        same[i] = rng() % 2;
        // Coarse quantization forces plenty of exact score ties.
        scores[i] = std::round(uni(rng) * 20.0) / 20.0 + (same[i] ? 0.05 : 0.0);
      }
      for (double target : {0.0, 0.05, 0.1, 0.3, 0.7, 1.0}) {
        // Oracle: recount TPR/FPR at every distinct threshold.
        std::set<double> thresholds(scores.begin(), scores.end());
        double pos = 0, neg = 0;
        for (char s : same) (s ? pos : neg) += 1;
        double best = 0.0;
        for (double th : thresholds) {
          double tp = 0, fp = 0;
          for (int i = 0; i < n; ++i)
            if (scores[i] >= th) (same[i] ? tp : fp) += 1;
          if (fp / neg <= target) best = std::max(best, tp / pos);
        }
        CHECK(tpr_at_fpr(scores, same, target) == doctest::Approx(best).epsilon(1e-12));
      }
      // Monotone in the target.
      double prev = -1.0;
      for (double target : {0.0, 0.1, 0.2, 0.5, 1.0}) {
        const double tpr = tpr_at_fpr(scores, same, target);
        CHECK(tpr >= prev);
        prev = tpr;
      }
    }
  }
}
