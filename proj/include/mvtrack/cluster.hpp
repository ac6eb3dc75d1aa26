#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvtrack/distance.hpp"
#include "mvtrack/mining.hpp"

namespace mvtrack {

struct ClusteringResult {
  std::vector<int> assignments;  // per input point, cluster ids contiguous from 0
  int n_clusters = 0;
  std::string method;
  std::vector<int> exemplars;  // affinity propagation only
  bool converged = true;
};

enum class Linkage { kSingle, kComplete, kAverage, kWard };

Linkage LinkageFromString(const std::string& name);
std::string LinkageToString(Linkage l);

// Agglomerative clustering by Lance-Williams distance updates: repeatedly
// merge the closest active pair until n_clusters remain. A merged cluster
// keeps the smaller of the two representative indices, and the closest
// pair is chosen with ties broken by smallest (i, j) lexicographically
// on representative indices. Ward linkage operates on squared input
// distances (exact when those are Euclidean).
ClusteringResult hac(const DistanceMatrix& distances, int n_clusters,
                     Linkage linkage = Linkage::kAverage);

// Columns of `embeddings` are the points; distances via `metric`.
ClusteringResult hac(const MatrixD& embeddings, int n_clusters,
                     Linkage linkage = Linkage::kAverage,
                     Metric metric = Metric::kNormalizedEuclidean);

// Frey-Dueck affinity propagation on a symmetric similarity matrix.
// The diagonal is overwritten with `preference` (median off-diagonal
// similarity when unset). Runs damped responsibility/availability
// updates until the exemplar set is stable for convergence_iter
// iterations or max_iter is reached; a non-converged result is flagged
// but still returned.
ClusteringResult affinity_propagation(const MatrixD& similarity,
                                      std::optional<double> preference = std::nullopt,
                                      double damping = 0.9, int max_iter = 1000,
                                      int convergence_iter = 50);

// Per-point preferences.
ClusteringResult affinity_propagation(const MatrixD& similarity, const VectorD& preferences,
                                      double damping = 0.9, int max_iter = 1000,
                                      int convergence_iter = 50);

// Negative pairwise metric distance, the similarity used by the pipeline.
MatrixD similarity_from_embeddings(const MatrixD& embeddings,
                                   Metric metric = Metric::kNormalizedEuclidean);

}  // namespace mvtrack
