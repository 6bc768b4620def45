#pragma once

#include "semadv/tensor.hpp"

namespace semadv::objectives {

/// Loss terms of one attack objective; total is the exact arithmetic
/// combination total = adv + lambda * smooth.
struct LossBreakdown {
    double adv = 0.0;
    double smooth = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

/// Verification attack metric: max(kappa, distance). Floors at kappa,
/// which is also the success condition. distance must be >= 0.
double identity_adv_loss(double embed_distance, double kappa);

/// Surrogate for structured-prediction attacks: the probability that a
/// standard-normal margin flips the score ordering, times the task loss.
/// Evaluated in closed form via the normal CDF.
double houdini_loss(double score_pred, double score_tgt, double task_loss);

/// Analytic partial derivatives of houdini_loss w.r.t. the two scores.
void houdini_loss_grad(double score_pred, double score_tgt, double task_loss,
                       double& d_score_pred, double& d_score_tgt);

/// Sum of squared spatial neighbour differences of the channel vectors of
/// beta {H,W,C}: vertical plus horizontal. Zero iff spatially constant
/// per channel.
double smoothness_loss(const Tensor& beta);

LossBreakdown total_loss(double adv, double smooth, double lambda);

/// Mean squared coordinate distance between point sets {N,2}.
double landmark_task_loss(const Tensor& y_pred, const Tensor& y_tgt);

/// Standard normal CDF (shared by houdini paths and tests).
double normal_cdf_value(double z);

}  // namespace semadv::objectives
