#pragma once

#include <map>
#include <string>
#include <vector>

#include "semadv/tensor.hpp"

namespace semadv::eval {

/// Per-instance aggregation of attribute-conditioned attacks: best
/// (any attribute succeeded), worst (all succeeded), average (mean of
/// per-attribute rates).
struct SuccessSummary {
    double best = 0.0;
    double average = 0.0;
    double worst = 0.0;
    std::map<std::string, double> per_attribute;
};

/// results[instance][attribute_name] = success flag. Every instance must
/// carry the same attribute set.
SuccessSummary summarize(const std::vector<std::map<std::string, bool>>& results);

/// Attack success rates of one source model's adversarial examples when
/// evaluated on each model at its own kappa(T-FPR).
struct TransferMatrix {
    std::vector<std::string> model_names;  // row order
    std::string source_model;
    std::string g_fpr, t_fpr;
    std::vector<double> rates;  // aligned with model_names
};

/// Normalized mean landmark error: mean point distance divided by the
/// square root of the ground-truth box area.
double nme(const Tensor& y_pred, const Tensor& y_gt, double box_w, double box_h);

struct Region {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool contains(double x, double y) const {
        // Boundary points count as inside.
        return x >= x0 && x <= x1 && y >= y0 && y <= y1;
    }
};

/// Fraction of predicted points strictly outside the region.
double out_of_region_ratio(const Tensor& y_pred, const Region& box);

/// Renders a run directory (attack result JSONs + threshold tables) into
/// deterministic report files: summary.json, tables, bar-chart images.
void emit_report(const std::string& run_dir, const std::string& out_dir);

}  // namespace semadv::eval
