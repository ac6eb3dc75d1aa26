#include "mvtrack/mvcorr.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <iostream>

#include "mvtrack/io.hpp"

namespace mvtrack {

void ViewStack::Validate() const {
  if (views.size() < 2) throw ValueError("ViewStack: need at least two views");
  const auto rows = views[0].rows();
  const auto cols = views[0].cols();
  if (rows < 1 || cols < 1) throw ValueError("ViewStack: empty view");
  for (const MatrixD& v : views) {
    if (v.rows() != rows || v.cols() != cols)
      throw ValueError("ViewStack: views must share one d x N shape");
    if (!v.allFinite()) throw NumericError("ViewStack: non-finite entry");
  }
}

ViewStack center_views(ViewStack stack) {
  stack.Validate();
  if (stack.count() < 2) throw ValueError("center_views: need at least two samples");
  stack.means.clear();
  for (MatrixD& v : stack.views) {
    VectorD mean = v.rowwise().mean();
    v.colwise() -= mean;
    stack.means.push_back(std::move(mean));
  }
  return stack;
}

CovariancePair covariances(const ViewStack& centered) {
  centered.Validate();
  if (centered.means.size() != centered.views.size())
    throw ValueError("covariances: views must be centered first");
  const int m = centered.num_views();
  const int d = centered.dim();
  MatrixD within = MatrixD::Zero(d, d);
  MatrixD between = MatrixD::Zero(d, d);
  for (int l = 0; l < m; ++l)
    within.noalias() += centered.views[l] * centered.views[l].transpose();
  for (int l = 0; l < m; ++l)
    for (int k = l + 1; k < m; ++k) {
      const MatrixD cross = centered.views[l] * centered.views[k].transpose();
      between += cross + cross.transpose();
    }
  CovariancePair out;
  out.between = 0.5 * (between + between.transpose());
  out.within = 0.5 * (within + within.transpose());
  out.num_views = m;
  out.count = centered.count();
  return out;
}

double default_ridge(const CovariancePair& cov) {
  return 1e-4 * cov.within.trace() / static_cast<double>(cov.dim());
}

SubspaceModel solve_subspace(const CovariancePair& cov, int rank, double epsilon) {
  const int d = cov.dim();
  if (rank < 1 || rank > d)
    throw ValueError("solve_subspace: rank must be in [1, " + std::to_string(d) + "]");
  if (epsilon < 0.0) throw ValueError("solve_subspace: epsilon must be >= 0");
  if (cov.between.rows() != d || cov.between.cols() != d || cov.within.cols() != d)
    throw ValueError("solve_subspace: covariance shape mismatch");

  const MatrixD ridged = cov.within + epsilon * MatrixD::Identity(d, d);
  Eigen::LLT<MatrixD> llt(ridged);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<MatrixD> es(ridged, Eigen::EigenvaluesOnly);
    throw NumericError("solve_subspace: R_W + eps I is not positive definite "
                       "(smallest eigenvalue " +
                       std::to_string(es.eigenvalues().minCoeff()) + ")");
  }
  const MatrixD l = llt.matrixL();

  // C = L^-1 R_B L^-T, kept symmetric against round-off.
  MatrixD c = l.triangularView<Eigen::Lower>().solve(cov.between);
  c = l.triangularView<Eigen::Lower>().solve(MatrixD(c.transpose()));
  c = 0.5 * (c + c.transpose());

  Eigen::SelfAdjointEigenSolver<MatrixD> es(c);
  if (es.info() != Eigen::Success)
    throw NumericError("solve_subspace: symmetric eigensolver failed");

  SubspaceModel model;
  model.basis.resize(d, rank);
  model.eigenvalues.resize(rank);
  for (int i = 0; i < rank; ++i) {
    const int src = d - 1 - i;  // Eigen sorts ascending
    model.eigenvalues(i) = es.eigenvalues()(src);
    VectorD u = es.eigenvectors().col(src);
    VectorD v = l.transpose().triangularView<Eigen::Upper>().solve(u);
    // Deterministic sign: the coefficient of largest magnitude is positive.
    int arg_max = 0;
    v.cwiseAbs().maxCoeff(&arg_max);
    if (v(arg_max) < 0.0) v = -v;
    model.basis.col(i) = v;
  }
  model.mean = VectorD::Zero(d);
  model.epsilon = epsilon;
  model.num_views = cov.num_views;
  return model;
}

double mv_corr(const SubspaceModel& model, const CovariancePair& cov) {
  if (model.dim() != cov.dim())
    throw ValueError("mv_corr: model and covariance dimensions differ");
  const MatrixD& v = model.basis;
  const double between = (v.transpose() * cov.between * v).trace();
  const double within = (v.transpose() * cov.within * v).trace();
  if (!(within > 0.0))
    throw NumericError("mv_corr: non-positive projected within-view variance");
  return between / (static_cast<double>(cov.num_views - 1) * within);
}

VectorD project(const SubspaceModel& model, const VectorD& x) {
  if (x.size() != model.dim())
    throw ValueError("project: expected dimension " + std::to_string(model.dim()) + ", got " +
                     std::to_string(x.size()));
  return model.basis.transpose() * (x - model.mean);
}

MatrixD project(const SubspaceModel& model, const MatrixD& x) {
  if (x.rows() != model.dim())
    throw ValueError("project: expected dimension " + std::to_string(model.dim()) + ", got " +
                     std::to_string(x.rows()));
  return model.basis.transpose() * (x.colwise() - model.mean);
}

SubspaceModel fit_mvcorr(const std::vector<MultiviewSample>& samples, int rank,
                         double epsilon) {
  if (samples.size() < 2) throw ValueError("fit_mvcorr: need at least two samples");
  const int d = static_cast<int>(samples.front().anchor.size());
  const int m = static_cast<int>(samples.front().positives.size()) + 1;
  const int n = static_cast<int>(samples.size());
  if (m < 2) throw ValueError("fit_mvcorr: samples carry no positives");
  if (n < d + 1)
    std::cerr << "fit_mvcorr: warning: " << n << " samples for dimension " << d
              << "; covariances may be rank-deficient\n";

  ViewStack stack;
  stack.views.assign(m, MatrixD(d, n));
  for (int i = 0; i < n; ++i) {
    const MultiviewSample& s = samples[i];
    if (s.anchor.size() != d || static_cast<int>(s.positives.size()) + 1 != m)
      throw ValueError("fit_mvcorr: inconsistent sample shapes");
    stack.views[0].col(i) = s.anchor;
    for (int v = 1; v < m; ++v) stack.views[v].col(i) = s.positives[v - 1];
  }

  ViewStack centered = center_views(std::move(stack));
  CovariancePair cov = covariances(centered);
  if (rank <= 0) rank = d;
  if (epsilon < 0.0) epsilon = default_ridge(cov);
  SubspaceModel model = solve_subspace(cov, rank, epsilon);

  VectorD grand = VectorD::Zero(d);
  for (const VectorD& mu : centered.means) grand += mu;
  model.mean = grand / static_cast<double>(m);
  return model;
}

namespace {
constexpr char kModelMagic[4] = {'T', 'M', 'V', 'M'};
}

void write_subspace(const std::filesystem::path& path, const SubspaceModel& model) {
  using namespace io_detail;
  auto os = OpenForWrite(path);
  WriteMagicAndVersion(os, kModelMagic, kFormatVersion);
  WritePod(os, static_cast<std::uint32_t>(model.dim()));
  WritePod(os, static_cast<std::uint32_t>(model.rank()));
  WritePod(os, static_cast<std::uint32_t>(model.num_views));
  WritePod(os, model.epsilon);
  WriteVectorF32(os, model.mean);
  WriteVectorF32(os, model.eigenvalues);
  WriteMatrixF32(os, model.basis);
  if (!os) throw IoError("write failed: " + path.string());
}

SubspaceModel load_subspace(const std::filesystem::path& path) {
  using namespace io_detail;
  auto is = OpenForRead(path);
  const std::string what = "subspace model " + path.string();
  CheckMagicAndVersion(is, kModelMagic, kFormatVersion, what);
  const auto d = ReadPod<std::uint32_t>(is, what);
  const auto r = ReadPod<std::uint32_t>(is, what);
  const auto m = ReadPod<std::uint32_t>(is, what);
  SubspaceModel model;
  model.epsilon = ReadPod<double>(is, what);
  model.num_views = static_cast<int>(m);
  model.mean = ReadVectorF32(is, static_cast<int>(d), what);
  model.eigenvalues = ReadVectorF32(is, static_cast<int>(r), what);
  model.basis = ReadMatrixF32(is, static_cast<int>(d), static_cast<int>(r), what);
  if (d == 0 || r == 0 || r > d) throw FormatError(what + ": bad header");
  return model;
}

}  // namespace mvtrack
