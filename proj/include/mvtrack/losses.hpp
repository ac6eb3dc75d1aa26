#pragma once

#include <vector>

#include "mvtrack/types.hpp"

namespace mvtrack {

struct TripletLossGrad {
  double loss = 0.0;
  MatrixD grad_anchor, grad_positive, grad_negative;
};

// Improved triplet objective over batches of column vectors:
//   mean_i [ max(0, |a-p|^2 - |a-n|^2 + margin)
//          + max(0, |a-p|^2 - |p-n|^2 + margin2) ] + lambda * mean_i |a-p|^2
// The second hinge pushes the negative away from the positive as well as
// from the anchor. Subgradient 0 exactly at the hinge kinks.
TripletLossGrad imp_triplet_loss(const MatrixD& anchor, const MatrixD& positive,
                                 const MatrixD& negative, double margin = 0.5,
                                 double margin2 = 0.25, double lambda = 0.01);

struct MvCorrLossGrad {
  double loss = 0.0;
  std::vector<MatrixD> grads;  // one per view
};

// Trace-ratio training surrogate on batch-centered view outputs:
//   loss = -tr(R_B) / (tr(R_W) + eps_num)
// Minimum -(M-1) is attained when all views coincide. Throws NumericError
// when the batch is degenerate (tr R_W ~ 0, i.e. constant outputs).
MvCorrLossGrad mvcorr_batch_loss(const std::vector<MatrixD>& views, double eps_num = 1e-12);

}  // namespace mvtrack
