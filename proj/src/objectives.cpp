#include "semadv/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace semadv::objectives {

double normal_cdf_value(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double identity_adv_loss(double embed_distance, double kappa) {
    if (embed_distance < 0.0)
        throw std::invalid_argument("identity_adv_loss: negative distance");
    if (kappa <= 0.0) throw std::invalid_argument("identity_adv_loss: kappa must be > 0");
    return std::max(kappa, embed_distance);
}

double houdini_loss(double score_pred, double score_tgt, double task_loss) {
    if (task_loss < 0.0) throw std::invalid_argument("houdini_loss: task_loss must be >= 0");
    return normal_cdf_value(score_tgt - score_pred) * task_loss;
}

void houdini_loss_grad(double score_pred, double score_tgt, double task_loss,
                       double& d_score_pred, double& d_score_tgt) {
    const double a = score_tgt - score_pred;
    const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI);
    d_score_tgt = pdf * task_loss;
    d_score_pred = -pdf * task_loss;
}

double smoothness_loss(const Tensor& beta) {
    if (beta.rank() != 3)
        throw std::invalid_argument("smoothness_loss: beta must be {H,W,C}");
    const int h = beta.dim(0), w = beta.dim(1), c = beta.dim(2);
    if (h < 1 || w < 1) throw std::invalid_argument("smoothness_loss: empty spatial dims");
    double s = 0.0;
    for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int i = 0; i < c; ++i) {
                const double d =
                    static_cast<double>(beta.at(y + 1, x, i)) - beta.at(y, x, i);
                s += d * d;
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x)
            for (int i = 0; i < c; ++i) {
                const double d =
                    static_cast<double>(beta.at(y, x + 1, i)) - beta.at(y, x, i);
                s += d * d;
            }
    return s;
}

LossBreakdown total_loss(double adv, double smooth, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");
    LossBreakdown lb;
    lb.adv = adv;
    lb.smooth = smooth;
    lb.lambda = lambda;
    lb.total = adv + lambda * smooth;
    return lb;
}

double landmark_task_loss(const Tensor& y_pred, const Tensor& y_tgt) {
    if (y_pred.rank() != 2 || y_pred.dim(1) != 2 || y_tgt.rank() != 2 || y_tgt.dim(1) != 2)
        throw std::invalid_argument("landmark_task_loss: point sets must be {N,2}");
    if (y_pred.dim(0) != y_tgt.dim(0))
        throw std::invalid_argument("landmark_task_loss: point count mismatch");
    const int n = y_pred.dim(0);
    double s = 0.0;
    for (int k = 0; k < n; ++k) {
        const double dx = static_cast<double>(y_pred[k * 2 + 0]) - y_tgt[k * 2 + 0];
        const double dy = static_cast<double>(y_pred[k * 2 + 1]) - y_tgt[k * 2 + 1];
        s += dx * dx + dy * dy;
    }
    return s / n;
}

}  // namespace semadv::objectives
