#pragma once

#include <string>

#include "mvtrack/types.hpp"

namespace mvtrack {

// Distance used for mining, clustering and verification. The paper-style
// default is Euclidean distance between unit-l2-normalized vectors;
// cosine is provided as the alternative reading.
enum class Metric {
  kNormalizedEuclidean,
  kCosine,
  kEuclidean,
};

Metric MetricFromString(const std::string& name);
std::string MetricToString(Metric m);

inline constexpr double kNormEpsilon = 1e-12;

// Unit-l2 scaling. Throws NumericError when |v| <= eps; division by a
// near-zero norm is never silent.
VectorD l2_normalize(const VectorD& v, double eps = kNormEpsilon);

// Euclidean distance between l2_normalize(x) and l2_normalize(y).
// Range [0, 2]; invariant to positive scaling of either argument.
double norm_euclidean_distance(const VectorD& x, const VectorD& y);

// 1 - cos(x, y).
double cosine_distance(const VectorD& x, const VectorD& y);

double euclidean_distance(const VectorD& x, const VectorD& y);

double metric_distance(Metric m, const VectorD& x, const VectorD& y);

// Columns of `m` transformed so that plain Euclidean distance on the
// result induces the same neighbor ordering as `metric` on the input
// (identity for kEuclidean, unit-normalization otherwise). This is the
// canonical representation used by k-NN search and its oracles.
MatrixD prepare_columns(const EmbeddingMatrix& m, Metric metric);
MatrixD prepare_columns(const MatrixD& m, Metric metric);

}  // namespace mvtrack
