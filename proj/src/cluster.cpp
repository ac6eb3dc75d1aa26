#include "mvtrack/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace mvtrack {

Linkage LinkageFromString(const std::string& name) {
  if (name == "single") return Linkage::kSingle;
  if (name == "complete") return Linkage::kComplete;
  if (name == "average") return Linkage::kAverage;
  if (name == "ward") return Linkage::kWard;
  throw ValueError("unknown linkage '" + name +
                   "' (expected single, complete, average or ward)");
}

std::string LinkageToString(Linkage l) {
  switch (l) {
    case Linkage::kSingle: return "single";
    case Linkage::kComplete: return "complete";
    case Linkage::kAverage: return "average";
    case Linkage::kWard: return "ward";
  }
  throw ValueError("invalid linkage value");
}

namespace {

// Relabel arbitrary cluster representatives to contiguous ids in order of
// first appearance over the point sequence.
std::vector<int> Contiguous(const std::vector<int>& raw, int* n_out) {
  std::vector<int> out(raw.size());
  std::unordered_map<int, int> remap;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto [it, fresh] = remap.emplace(raw[i], static_cast<int>(remap.size()));
    out[i] = it->second;
    (void)fresh;
  }
  if (n_out) *n_out = static_cast<int>(remap.size());
  return out;
}

}  // namespace

ClusteringResult hac(const DistanceMatrix& distances, int n_clusters, Linkage linkage) {
  const int n = distances.size();
  if (n < 1) throw ValueError("hac: empty input");
  if (n_clusters < 1 || n_clusters > n)
    throw ValueError("hac: n_clusters must be in [1, " + std::to_string(n) + "]");

  // Working linkage distances; ward operates on squared inputs.
  MatrixD w = distances.matrix();
  if (linkage == Linkage::kWard) w = w.cwiseProduct(w);

  std::vector<char> active(n, 1);
  std::vector<double> size(n, 1.0);
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;

  int remaining = n;
  while (remaining > n_clusters) {
    int bi = -1, bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (w(i, j) < best) {
          best = w(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    if (bi < 0 || bj < 0) throw NumericError("hac: no finite pair distance found");
    // Lance-Williams update of the merged cluster (kept under index bi).
    const double ni = size[bi], nj = size[bj];
    for (int k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double dik = w(bi, k), djk = w(bj, k);
      double merged;
      switch (linkage) {
        case Linkage::kSingle: merged = std::min(dik, djk); break;
        case Linkage::kComplete: merged = std::max(dik, djk); break;
        case Linkage::kAverage: merged = (ni * dik + nj * djk) / (ni + nj); break;
        case Linkage::kWard: {
          const double nk = size[k];
          merged = ((ni + nk) * dik + (nj + nk) * djk - nk * w(bi, bj)) / (ni + nj + nk);
          break;
        }
        default: throw ValueError("hac: invalid linkage");
      }
      w(bi, k) = merged;
      w(k, bi) = merged;
    }
    active[bj] = 0;
    size[bi] = ni + nj;
    for (int p = 0; p < n; ++p)
      if (parent[p] == bj) parent[p] = bi;
    --remaining;
  }

  ClusteringResult result;
  result.method = "hac-" + LinkageToString(linkage);
  result.assignments = Contiguous(parent, &result.n_clusters);
  return result;
}

ClusteringResult hac(const MatrixD& embeddings, int n_clusters, Linkage linkage,
                     Metric metric) {
  if (embeddings.cols() == 1) {
    ClusteringResult r;
    r.method = "hac-" + LinkageToString(linkage);
    r.assignments = {0};
    r.n_clusters = 1;
    if (n_clusters != 1) throw ValueError("hac: n_clusters exceeds point count");
    return r;
  }
  return hac(pairwise_distances(embeddings, metric), n_clusters, linkage);
}

MatrixD similarity_from_embeddings(const MatrixD& embeddings, Metric metric) {
  return -pairwise_distances(embeddings, metric).matrix();
}

ClusteringResult affinity_propagation(const MatrixD& similarity,
                                      std::optional<double> preference, double damping,
                                      int max_iter, int convergence_iter) {
  const int n = static_cast<int>(similarity.rows());
  if (n < 1 || similarity.cols() != n) throw ValueError("affinity_propagation: not square");
  double pref;
  if (preference) {
    pref = *preference;
  } else {
    std::vector<double> off;
    off.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off.push_back(similarity(i, j));
    if (off.empty()) {
      pref = 0.0;
    } else {
      std::sort(off.begin(), off.end());
      const std::size_t mid = off.size() / 2;
      pref = off.size() % 2 ? off[mid] : 0.5 * (off[mid - 1] + off[mid]);
    }
  }
  return affinity_propagation(similarity, VectorD(VectorD::Constant(n, pref)), damping,
                              max_iter, convergence_iter);
}

ClusteringResult affinity_propagation(const MatrixD& similarity, const VectorD& preferences,
                                      double damping, int max_iter, int convergence_iter) {
  const int n = static_cast<int>(similarity.rows());
  if (n < 1 || similarity.cols() != n) throw ValueError("affinity_propagation: not square");
  if (preferences.size() != n)
    throw ValueError("affinity_propagation: preference vector size mismatch");
  if (!similarity.transpose().isApprox(similarity, 1e-9))
    throw ValueError("affinity_propagation: similarity must be symmetric");
  if (damping < 0.5 || damping >= 1.0)
    throw ValueError("affinity_propagation: damping must be in [0.5, 1)");
  if (max_iter < 1 || convergence_iter < 1)
    throw ValueError("affinity_propagation: iteration counts must be positive");

  MatrixD s = similarity;
  s.diagonal() = preferences;
  MatrixD r = MatrixD::Zero(n, n);
  MatrixD a = MatrixD::Zero(n, n);

  std::vector<char> exemplar(n, 0), prev_exemplar(n, 0);
  int stable = 0;
  bool converged = false;

  for (int iter = 0; iter < max_iter; ++iter) {
    // Responsibilities: r(i,k) = s(i,k) - max_{k' != k} [a(i,k') + s(i,k')].
    for (int i = 0; i < n; ++i) {
      double max1 = -std::numeric_limits<double>::infinity();
      double max2 = max1;
      int arg1 = -1;
      for (int k = 0; k < n; ++k) {
        const double v = a(i, k) + s(i, k);
        if (v > max1) {
          max2 = max1;
          max1 = v;
          arg1 = k;
        } else if (v > max2) {
          max2 = v;
        }
      }
      for (int k = 0; k < n; ++k) {
        const double nv = s(i, k) - (k == arg1 ? max2 : max1);
        r(i, k) = damping * r(i, k) + (1.0 - damping) * nv;
      }
    }
    // Availabilities: a(i,k) = min(0, r(k,k) + sum_{i' != i,k} max(0, r(i',k)));
    // self-availability a(k,k) = sum_{i' != k} max(0, r(i',k)).
    for (int k = 0; k < n; ++k) {
      double pos_sum = 0.0;
      for (int i = 0; i < n; ++i)
        if (i != k) pos_sum += std::max(0.0, r(i, k));
      for (int i = 0; i < n; ++i) {
        double nv;
        if (i == k) {
          nv = pos_sum;
        } else {
          nv = std::min(0.0, r(k, k) + pos_sum - std::max(0.0, r(i, k)));
        }
        a(i, k) = damping * a(i, k) + (1.0 - damping) * nv;
      }
    }

    for (int k = 0; k < n; ++k) exemplar[k] = (a(k, k) + r(k, k) > 0.0) ? 1 : 0;
    if (iter > 0 && exemplar == prev_exemplar) {
      if (++stable >= convergence_iter) {
        converged = true;
        break;
      }
    } else {
      stable = 0;
    }
    prev_exemplar = exemplar;
  }

  std::vector<int> exemplars;
  for (int k = 0; k < n; ++k)
    if (exemplar[k]) exemplars.push_back(k);
  if (exemplars.empty()) {
    // Degenerate run: fall back to the strongest self-evidence.
    int arg = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
      const double v = a(k, k) + r(k, k);
      if (v > best) {
        best = v;
        arg = k;
      }
    }
    exemplars.push_back(arg);
    converged = false;
  }

  std::vector<int> raw(n);
  for (int i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    int arg = exemplars.front();
    for (int e : exemplars) {
      if (s(i, e) > best) {
        best = s(i, e);
        arg = e;
      }
    }
    raw[i] = arg;
  }
  for (int e : exemplars) raw[e] = e;  // exemplars always claim themselves

  ClusteringResult result;
  result.method = "affinity-propagation";
  result.converged = converged;
  result.exemplars = exemplars;
  result.assignments = Contiguous(raw, &result.n_clusters);
  return result;
}

}  // namespace mvtrack
