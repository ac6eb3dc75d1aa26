#include "mvtrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

namespace mvtrack {

namespace {

void CheckLengths(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size())
    throw ValueError("clustering metrics: label length mismatch");
  if (pred.empty()) throw ValueError("clustering metrics: empty labelings");
}

// Contingency counts n[cluster][class] with dense reindexing.
struct Contingency {
  std::vector<std::vector<double>> counts;  // clusters x classes
  std::vector<double> cluster_totals, class_totals;
  double n = 0.0;

  Contingency(std::span<const int> pred, std::span<const int> truth) {
    std::unordered_map<int, int> cluster_ids, class_ids;
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      auto [ci, _1] = cluster_ids.emplace(pred[i], static_cast<int>(cluster_ids.size()));
      auto [ki, _2] = class_ids.emplace(truth[i], static_cast<int>(class_ids.size()));
      pairs.emplace_back(ci->second, ki->second);
    }
    counts.assign(cluster_ids.size(), std::vector<double>(class_ids.size(), 0.0));
    cluster_totals.assign(cluster_ids.size(), 0.0);
    class_totals.assign(class_ids.size(), 0.0);
    for (auto [c, k] : pairs) {
      counts[c][k] += 1.0;
      cluster_totals[c] += 1.0;
      class_totals[k] += 1.0;
      n += 1.0;
    }
  }
};

double Entropy(const std::vector<double>& totals, double n) {
  double h = 0.0;
  for (double t : totals)
    if (t > 0.0) h -= (t / n) * std::log(t / n);
  return h;
}

}  // namespace

std::tuple<double, double, double> homogeneity_completeness_v(std::span<const int> pred,
                                                              std::span<const int> truth) {
  CheckLengths(pred, truth);
  Contingency ct(pred, truth);

  const double h_truth = Entropy(ct.class_totals, ct.n);
  const double h_pred = Entropy(ct.cluster_totals, ct.n);

  // Conditional entropies from the joint counts.
  double h_truth_given_pred = 0.0, h_pred_given_truth = 0.0;
  for (std::size_t c = 0; c < ct.counts.size(); ++c) {
    for (std::size_t k = 0; k < ct.counts[c].size(); ++k) {
      const double joint = ct.counts[c][k];
      if (joint <= 0.0) continue;
      h_truth_given_pred -= (joint / ct.n) * std::log(joint / ct.cluster_totals[c]);
      h_pred_given_truth -= (joint / ct.n) * std::log(joint / ct.class_totals[k]);
    }
  }

  const double h = h_truth > 0.0 ? 1.0 - h_truth_given_pred / h_truth : 1.0;
  const double c = h_pred > 0.0 ? 1.0 - h_pred_given_truth / h_pred : 1.0;
  const double v = (h + c) > 0.0 ? 2.0 * h * c / (h + c) : 0.0;
  return {h, c, v};
}

std::pair<std::vector<int>, double> solve_assignment_max(const MatrixD& score) {
  // Hungarian algorithm with row/column potentials on the square
  // max(rows, cols) padding of -score (minimization form).
  const int nr = static_cast<int>(score.rows());
  const int nc = static_cast<int>(score.cols());
  const int n = std::max(nr, nc);
  MatrixD cost = MatrixD::Zero(n, n);
  cost.topLeftCorner(nr, nc) = -score;

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match_col(n + 1, 0);  // 1-based; match_col[j] = row matched to column j
  std::vector<int> way(n + 1, 0);

  for (int i = 1; i <= n; ++i) {
    match_col[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match_col[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match_col[j0] != 0);
    do {
      const int j1 = way[j0];
      match_col[j0] = match_col[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(nr, -1);
  double total = 0.0;
  for (int j = 1; j <= n; ++j) {
    const int i = match_col[j];
    if (i >= 1 && i <= nr && j <= nc) {
      row_to_col[i - 1] = j - 1;
      total += score(i - 1, j - 1);
    }
  }
  return {row_to_col, total};
}

std::pair<double, double> purity_accuracy(std::span<const int> pred,
                                          std::span<const int> truth) {
  CheckLengths(pred, truth);
  Contingency ct(pred, truth);

  double purity = 0.0;
  for (const auto& row : ct.counts)
    purity += *std::max_element(row.begin(), row.end());
  purity /= ct.n;

  MatrixD score(ct.counts.size(), ct.counts[0].size());
  for (std::size_t c = 0; c < ct.counts.size(); ++c)
    for (std::size_t k = 0; k < ct.counts[c].size(); ++k)
      score(static_cast<int>(c), static_cast<int>(k)) = ct.counts[c][k];
  const double matched = solve_assignment_max(score).second;
  return {purity, matched / ct.n};
}

double over_clustering_index(std::span<const int> pred, std::span<const int> truth,
                             bool majority) {
  CheckLengths(pred, truth);
  if (!majority) {
    std::map<int, std::set<int>> clusters_of_class;
    for (std::size_t i = 0; i < pred.size(); ++i)
      clusters_of_class[truth[i]].insert(pred[i]);
    double sum = 0.0;
    for (const auto& [cls, clusters] : clusters_of_class)
      sum += static_cast<double>(clusters.size());
    return sum / static_cast<double>(clusters_of_class.size());
  }
  // Majority variant: each cluster belongs to its plurality class (ties to
  // the smaller class label); count clusters per class.
  std::map<int, std::map<int, int>> cluster_class_counts;
  for (std::size_t i = 0; i < pred.size(); ++i)
    cluster_class_counts[pred[i]][truth[i]] += 1;
  std::map<int, int> clusters_per_class;
  std::set<int> classes;
  for (int t : truth) classes.insert(t);
  for (const auto& [cluster, class_counts] : cluster_class_counts) {
    int best_class = 0, best = -1;
    for (const auto& [cls, cnt] : class_counts) {
      if (cnt > best) {
        best = cnt;
        best_class = cls;
      }
    }
    clusters_per_class[best_class] += 1;
  }
  double sum = 0.0;
  for (int cls : classes) {
    auto it = clusters_per_class.find(cls);
    sum += it == clusters_per_class.end() ? 0.0 : static_cast<double>(it->second);
  }
  return sum / static_cast<double>(classes.size());
}

MetricReport evaluate_clustering(std::span<const int> pred, std::span<const int> truth) {
  MetricReport r;
  std::tie(r.homogeneity, r.completeness, r.v_measure) =
      homogeneity_completeness_v(pred, truth);
  std::tie(r.purity, r.accuracy) = purity_accuracy(pred, truth);
  r.oci = over_clustering_index(pred, truth);
  return r;
}

std::vector<VerificationPair> verification_pairs(std::span<const int> labels) {
  if (labels.size() < 2) throw ValueError("verification_pairs: need at least two tracks");
  std::vector<VerificationPair> out;
  out.reserve(labels.size() * (labels.size() - 1) / 2);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j)
      out.push_back({static_cast<int>(i), static_cast<int>(j), labels[i] == labels[j]});
  return out;
}

double tpr_at_fpr(std::span<const double> scores, std::span<const char> same,
                  double fpr_target) {
  if (scores.size() != same.size()) throw ValueError("tpr_at_fpr: length mismatch");
  if (fpr_target < 0.0 || fpr_target > 1.0)
    throw ValueError("tpr_at_fpr: fpr_target must be in [0, 1]");
  double pos = 0.0, neg = 0.0;
  for (char s : same) (s ? pos : neg) += 1.0;
  if (pos == 0.0 || neg == 0.0)
    throw ValueError("tpr_at_fpr: need both same and different pairs");

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Sweep thresholds downward across distinct scores; each operating
  // point predicts "same" for score >= threshold. The empty predictor
  // (0, 0) is always feasible.
  double best_tpr = 0.0;
  double tp = 0.0, fp = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      (same[order[i]] ? tp : fp) += 1.0;
      ++i;
    }
    if (fp / neg <= fpr_target) best_tpr = std::max(best_tpr, tp / pos);
  }
  return best_tpr;
}

}  // namespace mvtrack
