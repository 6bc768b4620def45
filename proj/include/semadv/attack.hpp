#pragma once

#include "semadv/archive.hpp"
#include "semadv/evaluation.hpp"
#include "semadv/generator.hpp"
#include "semadv/interpolation.hpp"
#include "semadv/objectives.hpp"
#include "semadv/targets.hpp"

namespace semadv::attack {

enum class Method { kSemanticFeature, kSemanticAttribute, kPixelCw, kEditThenCw };

std::string to_string(Method m);
Method method_from_string(const std::string& s);  // tokens: semantic-feature,
                                                  // semantic-attribute, cw, stargan-cw

enum class EditDirection { kAdd, kRemove, kFlip };
std::string to_string(EditDirection d);
EditDirection direction_from_string(const std::string& s);

struct AttackConfig {
    Method method = Method::kSemanticFeature;
    std::string layer = "f0";
    int steps = 500;
    float rate = 0.01f;
    float lambda = 0.01f;       // smoothness weight (Eq. 3 balance)
    std::string g_fpr = "1e-2";
    std::string attribute;      // edit target; empty = keep attributes
    EditDirection direction = EditDirection::kFlip;
    uint64_t seed = 0;

    float cw_recon_weight = 5.0f;  // pixel attacks: weight of ||x*-x||^2
    int invert_steps = 50;         // reconstruction inversion preprocessing
    float invert_rate = 0.01f;
    int polish_steps = 10;         // extra steps after first success

    void validate() const;
    std::string to_json() const;
    static AttackConfig from_json(const std::string& text);
};

/// Fills steps/rate from the budget schedule: the strictest grid level
/// runs 200 steps at rate 0.05; looser levels run 500 steps at rate 0.01.
void apply_budget_schedule(AttackConfig& cfg);

struct AdversarialTarget {
    enum class Task { kIdentity, kRotatePoints, kOutOfRegion };
    Task task = Task::kIdentity;

    // Identity verification target.
    Tensor target_image;
    double kappa = 0.0;

    // Landmark targets.
    Tensor target_points;  // {N,2} pixels
    eval::Region region;   // out-of-region box

    static AdversarialTarget identity(Tensor target_image, double kappa);
};

/// One dataset instance under attack: the image, its identity and its
/// at-rest attribute annotation.
struct AttackInstance {
    Tensor image;
    synth::Identity identity;
    synth::AttributeVector attrs;

    static AttackInstance make(int id, uint32_t attr_bits);
};

struct AttackResult {
    Tensor adversarial_image;
    objectives::LossBreakdown final_loss;
    bool success = false;
    double distance_or_metric = 0.0;
    std::vector<double> step_trace;  // per-step totals, length <= steps
    std::string config_json;
    double wall_time_sec = 0.0;

    // Provenance used by the evaluation protocols.
    std::string method;
    std::string attribute;
    int source_id = -1;
    int target_id = -1;
    uint32_t target_bits = 0;        // attribute bits of the target render
    double pre_attack_metric = 0.0;  // landmarks: clean value of the metric

    /// Re-render the target image from (target_id, target_bits).
    Tensor target_image() const;

    std::string to_json(bool include_trace = false) const;
    static AttackResult from_json(const std::string& text);
};

/// Optimizes the feature-space blend (or the attribute scalar) against a
/// verification model. Gradients flow only into the interpolation
/// variable; generator and verifier parameters are frozen.
AttackResult attack_semantic(const AttackInstance& instance, const AttackConfig& cfg,
                             const gen::Generator& generator,
                             const targets::Verifier& target_model,
                             const AdversarialTarget& target);

/// Pixel-space baseline: minimizes adv loss + w*||x*-x||^2 by Adam with
/// pixels clamped to [0,1].
AttackResult attack_cw(const Tensor& image, const AttackConfig& cfg,
                       const targets::Verifier& target_model, const AdversarialTarget& target);

/// Edit-then-perturb baseline: x_edit = G(x, c_new), then attack_cw
/// anchored at x_edit.
AttackResult attack_stargan_cw(const AttackInstance& instance, const AttackConfig& cfg,
                               const gen::Generator& generator,
                               const targets::Verifier& target_model,
                               const AdversarialTarget& target);

enum class LandmarkTask { kRotateEyes, kOutOfRegion };
LandmarkTask landmark_task_from_string(const std::string& s);

/// Builds the task target for an instance: rotate designated keypoints
/// 90 degrees counter-clockwise about their centroid, or pull every point
/// into the designated box.
AdversarialTarget make_landmark_target(const AttackInstance& instance, LandmarkTask task,
                                       const std::vector<int>& rotate_indices = {0, 1});

/// Houdini attack on the landmark regressor through the generator.
AttackResult attack_landmarks(const AttackInstance& instance, const AttackConfig& cfg,
                              const gen::Generator& generator,
                              const targets::Landmarker& landmark_model, LandmarkTask task);

/// Pre-optimization byproducts of the semantic pipeline (inversion and
/// plain edits); used to check that the interpolation optimization, not
/// the editing, carries the attack.
struct Intermediates {
    Tensor x_prime;     // inversion refinement of x under c
    Tensor edit_c;      // G(x', c)
    Tensor edit_cnew;   // G(x', c_new)
};
Intermediates compute_intermediates(const AttackInstance& instance, const AttackConfig& cfg,
                                    const gen::Generator& generator);

/// Runs one attack per (instance, job) pair on a thread pool; per-worker
/// seeds derive from cfg.seed and the job index. Models are shared
/// read-only.
struct BatchJob {
    AttackInstance instance;
    AttackConfig config;
    AdversarialTarget target;
    int target_id = -1;
    uint32_t target_bits = 0;
};
std::vector<AttackResult> run_batch(const std::vector<BatchJob>& jobs,
                                    const gen::Generator* generator,
                                    const targets::Verifier* verifier, int threads);

// ----------------------------------------------------------------- run IO

/// results.json + images archive + thresholds, loadable by the reporting
/// tools.
void save_run(const std::string& dir, const std::vector<AttackResult>& results,
              const targets::ThresholdTable& thresholds, const std::string& meta_json);

struct RunData {
    std::vector<AttackResult> results;
    ImageArchive images;
    targets::ThresholdTable thresholds;
    std::string meta_json;
};
RunData load_run(const std::string& dir);

}  // namespace semadv::attack
