#pragma once

#include <span>
#include <tuple>
#include <vector>

#include "mvtrack/types.hpp"

namespace mvtrack {

struct MetricReport {
  double homogeneity = 0.0;
  double completeness = 0.0;
  double v_measure = 0.0;
  double purity = 0.0;
  double accuracy = 0.0;
  double oci = 0.0;
};

// Entropy-based homogeneity/completeness (natural log) and their harmonic
// mean. h = 1 when the truth labeling has zero entropy; v = 0 when
// h + c = 0.
std::tuple<double, double, double> homogeneity_completeness_v(std::span<const int> pred,
                                                              std::span<const int> truth);

// purity: dominant-class fraction per cluster (equivalently the accuracy
// of per-cluster majority voting). accuracy: best one-to-one
// cluster-to-class matching (Hungarian), matched fraction.
std::pair<double, double> purity_accuracy(std::span<const int> pred,
                                          std::span<const int> truth);

// Mean over true classes of the number of distinct predicted clusters
// containing at least one member of the class. The majority variant
// counts only clusters whose majority class it is.
double over_clustering_index(std::span<const int> pred, std::span<const int> truth,
                             bool majority = false);

MetricReport evaluate_clustering(std::span<const int> pred, std::span<const int> truth);

// Maximum-weight assignment over a (rows x cols) score matrix; returns
// the selected column per row (-1 when unmatched) and the total weight.
// O(n^3) Hungarian with potentials.
std::pair<std::vector<int>, double> solve_assignment_max(const MatrixD& score);

struct VerificationPair {
  int first = 0;
  int second = 0;
  bool same = false;
};

// All C(T, 2) unordered pairs, tagged same iff labels are equal.
std::vector<VerificationPair> verification_pairs(std::span<const int> labels);

// Max TPR over score thresholds whose FPR stays <= fpr_target, with the
// step-function convention (no interpolation). Pairs with score >= the
// threshold are predicted "same" (nonzero flag). Throws ValueError unless
// both classes are present.
double tpr_at_fpr(std::span<const double> scores, std::span<const char> same,
                  double fpr_target = 0.1);

}  // namespace mvtrack
