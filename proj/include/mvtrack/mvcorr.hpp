#pragma once

#include <filesystem>
#include <vector>

#include "mvtrack/mining.hpp"
#include "mvtrack/types.hpp"

namespace mvtrack {

// M synchronized views of N samples: column i of every view observes the
// same underlying identity.
struct ViewStack {
  std::vector<MatrixD> views;  // M matrices, each d x N
  std::vector<VectorD> means;  // per-view row means (set by center_views)

  int num_views() const { return static_cast<int>(views.size()); }
  int dim() const { return views.empty() ? 0 : static_cast<int>(views[0].rows()); }
  int count() const { return views.empty() ? 0 : static_cast<int>(views[0].cols()); }

  // Throws ValueError unless all views share one d x N shape, M >= 2,
  // and entries are finite.
  void Validate() const;
};

// Sum of between-view covariances R_B and within-view covariances R_W.
// The common (N-1)^-1 M^-1 scaling is omitted; it cancels in the ratio.
struct CovariancePair {
  MatrixD between;  // R_B = sum_{l != k} Xl Xk^T, symmetrized
  MatrixD within;   // R_W = sum_l Xl Xl^T
  int num_views = 0;
  int count = 0;

  int dim() const { return static_cast<int>(within.rows()); }
};

// Shared subspace: columns of V are generalized eigenvectors of
// (R_B, R_W + eps I), normalized so V^T (R_W + eps I) V = I, eigenvalues
// descending.
struct SubspaceModel {
  MatrixD basis;        // d x r
  VectorD eigenvalues;  // length r, descending
  VectorD mean;         // d, subtracted before projecting
  double epsilon = 0.0;
  int num_views = 0;

  int dim() const { return static_cast<int>(basis.rows()); }
  int rank() const { return static_cast<int>(basis.cols()); }
};

// Subtracts each view's row mean (over samples); the removed means are
// stored on the returned stack.
ViewStack center_views(ViewStack stack);

// Assembles R_B and R_W from centered views. R_B is explicitly
// symmetrized; summation order leaves it asymmetric at round-off scale.
CovariancePair covariances(const ViewStack& centered);

// Ridge that guarantees positive definiteness of R_W + eps I when the
// caller does not supply one: 1e-4 * trace(R_W) / d.
double default_ridge(const CovariancePair& cov);

// Top-r generalized eigenpairs of (R_B, R_W + eps I) by symmetric-definite
// reduction: factor R_W + eps I = L L^T, solve the standard symmetric
// problem on L^-1 R_B L^-T, map eigenvectors back through L^-T.
// Throws NumericError (naming the smallest eigenvalue) when R_W + eps I
// is not positive definite.
SubspaceModel solve_subspace(const CovariancePair& cov, int rank, double epsilon);

// Multiview correlation of the model's subspace:
//   rho = tr(V^T R_B V) / ((M - 1) tr(V^T R_W V)),
// the mean generalized-eigenvalue ratio scaled to 1 for identical views.
double mv_corr(const SubspaceModel& model, const CovariancePair& cov);

// V^T (x - mean); the matrix overload projects columnwise.
VectorD project(const SubspaceModel& model, const VectorD& x);
MatrixD project(const SubspaceModel& model, const MatrixD& x);

// Closed-form fit on mined samples: view 1 holds the anchors, views
// 2..P the positives, column i of every view coming from sample i.
// rank <= 0 selects the full rotation r = d; epsilon < 0 selects the
// default ridge. Warns on stderr when fewer than d + 1 samples are given.
SubspaceModel fit_mvcorr(const std::vector<MultiviewSample>& samples, int rank = 0,
                         double epsilon = -1.0);

// Model file: magic "TMVM", version, d, r, M, epsilon (f64), then mean,
// eigenvalues and V as float32.
void write_subspace(const std::filesystem::path& path, const SubspaceModel& model);
SubspaceModel load_subspace(const std::filesystem::path& path);

}  // namespace mvtrack
