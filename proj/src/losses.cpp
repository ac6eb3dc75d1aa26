#include "mvtrack/losses.hpp"

namespace mvtrack {

TripletLossGrad imp_triplet_loss(const MatrixD& anchor, const MatrixD& positive,
                                 const MatrixD& negative, double margin, double margin2,
                                 double lambda) {
  if (anchor.rows() != positive.rows() || anchor.rows() != negative.rows() ||
      anchor.cols() != positive.cols() || anchor.cols() != negative.cols())
    throw ValueError("imp_triplet_loss: batch shape mismatch");
  if (anchor.cols() < 1) throw ValueError("imp_triplet_loss: empty batch");
  if (!anchor.allFinite() || !positive.allFinite() || !negative.allFinite())
    throw NumericError("imp_triplet_loss: non-finite input");

  const int b = static_cast<int>(anchor.cols());
  const double inv_b = 1.0 / static_cast<double>(b);

  TripletLossGrad out;
  out.grad_anchor = MatrixD::Zero(anchor.rows(), b);
  out.grad_positive = MatrixD::Zero(anchor.rows(), b);
  out.grad_negative = MatrixD::Zero(anchor.rows(), b);

  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    const VectorD ap = anchor.col(i) - positive.col(i);
    const VectorD an = anchor.col(i) - negative.col(i);
    const VectorD pn = positive.col(i) - negative.col(i);
    const double d_ap = ap.squaredNorm();
    const double d_an = an.squaredNorm();
    const double d_pn = pn.squaredNorm();

    const double h1 = d_ap - d_an + margin;
    const double h2 = d_ap - d_pn + margin2;
    loss += std::max(0.0, h1) + std::max(0.0, h2) + lambda * d_ap;

    VectorD ga = lambda * 2.0 * ap;
    VectorD gp = lambda * -2.0 * ap;
    VectorD gn = VectorD::Zero(anchor.rows());
    if (h1 > 0.0) {
      ga += 2.0 * ap - 2.0 * an;
      gp += -2.0 * ap;
      gn += 2.0 * an;
    }
    if (h2 > 0.0) {
      ga += 2.0 * ap;
      gp += -2.0 * ap - 2.0 * pn;
      gn += 2.0 * pn;
    }
    out.grad_anchor.col(i) = ga * inv_b;
    out.grad_positive.col(i) = gp * inv_b;
    out.grad_negative.col(i) = gn * inv_b;
  }
  out.loss = loss * inv_b;
  return out;
}

MvCorrLossGrad mvcorr_batch_loss(const std::vector<MatrixD>& views, double eps_num) {
  const int m = static_cast<int>(views.size());
  if (m < 2) throw ValueError("mvcorr_batch_loss: need at least two views");
  const auto rows = views[0].rows();
  const auto cols = views[0].cols();
  if (cols < 2) throw ValueError("mvcorr_batch_loss: batch must hold at least two samples");
  for (const MatrixD& v : views) {
    if (v.rows() != rows || v.cols() != cols)
      throw ValueError("mvcorr_batch_loss: view shape mismatch");
    if (!v.allFinite()) throw NumericError("mvcorr_batch_loss: non-finite input");
  }

  std::vector<MatrixD> centered;
  centered.reserve(m);
  double input_scale = 0.0;
  for (const MatrixD& v : views) {
    MatrixD c = v.colwise() - VectorD(v.rowwise().mean());
    input_scale += v.squaredNorm();
    centered.push_back(std::move(c));
  }

  double trace_within = 0.0;
  for (const MatrixD& c : centered) trace_within += c.squaredNorm();
  double trace_between = 0.0;
  for (int l = 0; l < m; ++l)
    for (int k = l + 1; k < m; ++k)
      trace_between += 2.0 * centered[l].cwiseProduct(centered[k]).sum();

  if (trace_within <= 1e-12 * std::max(1.0, input_scale))
    throw NumericError("mvcorr_batch_loss: degenerate batch (tr R_W ~ 0)");

  const double denom = trace_within + eps_num;
  MvCorrLossGrad out;
  out.loss = -trace_between / denom;

  // d(-T_B/T_W)/dZc_l = -2 sum_{k != l} Zc_k / T_W + T_B * 2 Zc_l / T_W^2;
  // the centering map is its own adjoint, so subtract row means after.
  MatrixD sum_all = MatrixD::Zero(rows, cols);
  for (const MatrixD& c : centered) sum_all += c;
  for (int l = 0; l < m; ++l) {
    MatrixD g = -2.0 * (sum_all - centered[l]) / denom +
                (2.0 * trace_between / (denom * denom)) * centered[l];
    g.colwise() -= VectorD(g.rowwise().mean());
    out.grads.push_back(std::move(g));
  }
  return out;
}

}  // namespace mvtrack
