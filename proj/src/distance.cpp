#include "mvtrack/distance.hpp"

#include <cmath>

namespace mvtrack {

Metric MetricFromString(const std::string& name) {
  if (name == "norm-euclidean") return Metric::kNormalizedEuclidean;
  if (name == "cosine") return Metric::kCosine;
  if (name == "euclidean") return Metric::kEuclidean;
  throw ValueError("unknown metric '" + name +
                   "' (expected norm-euclidean, cosine or euclidean)");
}

std::string MetricToString(Metric m) {
  switch (m) {
    case Metric::kNormalizedEuclidean: return "norm-euclidean";
    case Metric::kCosine: return "cosine";
    case Metric::kEuclidean: return "euclidean";
  }
  throw ValueError("invalid metric value");
}

VectorD l2_normalize(const VectorD& v, double eps) {
  const double n = v.norm();
  if (!(n > eps))
    throw NumericError("l2_normalize: vector norm " + std::to_string(n) +
                       " below epsilon " + std::to_string(eps));
  return v / n;
}

static void CheckDims(const VectorD& x, const VectorD& y, const char* who) {
  if (x.size() != y.size())
    throw ValueError(std::string(who) + ": dimension mismatch (" +
                     std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
}

double norm_euclidean_distance(const VectorD& x, const VectorD& y) {
  CheckDims(x, y, "norm_euclidean_distance");
  return (l2_normalize(x) - l2_normalize(y)).norm();
}

double cosine_distance(const VectorD& x, const VectorD& y) {
  CheckDims(x, y, "cosine_distance");
  return 1.0 - l2_normalize(x).dot(l2_normalize(y));
}

double euclidean_distance(const VectorD& x, const VectorD& y) {
  CheckDims(x, y, "euclidean_distance");
  return (x - y).norm();
}

double metric_distance(Metric m, const VectorD& x, const VectorD& y) {
  switch (m) {
    case Metric::kNormalizedEuclidean: return norm_euclidean_distance(x, y);
    case Metric::kCosine: return cosine_distance(x, y);
    case Metric::kEuclidean: return euclidean_distance(x, y);
  }
  throw ValueError("invalid metric value");
}

MatrixD prepare_columns(const MatrixD& m, Metric metric) {
  if (metric == Metric::kEuclidean) return m;
  MatrixD out(m.rows(), m.cols());
  for (int i = 0; i < m.cols(); ++i)
    out.col(i) = l2_normalize(m.col(i));
  return out;
}

MatrixD prepare_columns(const EmbeddingMatrix& m, Metric metric) {
  return prepare_columns(MatrixD(m.data.cast<double>()), metric);
}

}  // namespace mvtrack
