#pragma once

#include "semadv/attack.hpp"
#include "semadv/defenses.hpp"

namespace semadv::eval {

/// Table 2 style protocol: results must already be filtered to the
/// source model's successes at G-FPR. Each row model re-verifies the
/// stored adversarial images against their re-rendered targets at its
/// own kappa(T-FPR).
TransferMatrix transfer_eval(
    const std::string& source_model,
    const std::vector<std::pair<std::string, const targets::Verifier*>>& eval_models,
    const std::map<std::string, targets::ThresholdTable>& tables,
    const std::vector<attack::AttackResult>& source_successes, const std::string& t_fpr);

}  // namespace semadv::eval

namespace semadv::defense {

/// Fraction of adversarial results still verified as the target identity
/// after the defense transform. Results must carry adversarial images
/// and target references.
double defended_success_rate(const std::vector<attack::AttackResult>& results,
                             const DefenseSpec& spec, const targets::Verifier& model,
                             double kappa);

}  // namespace semadv::defense
