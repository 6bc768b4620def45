#pragma once

#include <map>

#include "semadv/nn.hpp"
#include "semadv/synthdata.hpp"

namespace semadv::targets {

enum class LossKind { kSoftmax, kCosine };
enum class DepthKind { kSmall, kLarge };

std::string to_string(LossKind k);
std::string to_string(DepthKind k);
LossKind loss_kind_from_string(const std::string& s);
DepthKind depth_kind_from_string(const std::string& s);

/// Desk-scale FPR grid, strict last. Keys are the canonical strings used
/// in every serialized table.
const std::vector<std::pair<std::string, double>>& fpr_grid();
double fpr_value(const std::string& level);

struct VerifierConfig {
    LossKind loss_kind = LossKind::kSoftmax;
    DepthKind depth_kind = DepthKind::kSmall;
    int embed_dim = 32;
    int base_channels = 16;
    int n_classes = 0;  // fixed at training time
    uint64_t seed = 1;
};

/// Embedding network for identity verification. Distances are plain L2
/// between L2-normalized embeddings.
class Verifier {
public:
    explicit Verifier(const VerifierConfig& cfg);

    const VerifierConfig& config() const { return cfg_; }
    std::string model_name() const;

    nn::Var embed_var(const nn::Var& images) const;  // {N,H,W,3} -> {N,D}, unnormalized
    /// L2-normalized embedding of one image.
    Tensor embed(const Tensor& image) const;
    Tensor embed_batch(const Tensor& images) const;  // {N,H,W,3} -> {N,D} normalized

    static double distance(const Tensor& e1, const Tensor& e2);
    double image_distance(const Tensor& x1, const Tensor& x2) const;

    nn::Var class_logits_var(const nn::Var& images, const std::vector<int>& labels) const;

    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }

    void save(const std::string& path) const;
    static Verifier load(const std::string& path);

private:
    VerifierConfig cfg_;
    nn::ParamStore ps_;
    std::vector<nn::Conv2d> blocks_;
    nn::Linear embed_head_;
    nn::Linear class_head_;  // softmax head or cosine prototype matrix
};

/// FPR level -> distance threshold kappa; strictly decreasing toward
/// stricter levels.
struct ThresholdTable {
    std::map<std::string, double> kappa;

    double at(const std::string& level) const;
    std::string to_json() const;
    static ThresholdTable from_json(const std::string& text);
    void save(const std::string& path) const;
    static ThresholdTable load(const std::string& path);
};

/// Nearest-rank impostor quantiles: kappa(level) is the ceil(level*n)-th
/// smallest impostor distance. Requires >= 1000 impostor pairs.
ThresholdTable calibrate_thresholds(const Verifier& model,
                                    const std::vector<synth::PairRef>& impostor_pairs);

struct VerifyResult {
    bool same = false;
    double distance = 0.0;
};
/// Same identity iff distance < kappa (strict; equality is different).
VerifyResult verify(const Verifier& model, const Tensor& x1, const Tensor& x2, double kappa);

struct VerifierTrainConfig {
    int steps = 1200;
    int batch = 48;
    float rate = 1.5e-3f;
    int threads = 2;
    float min_dev_accuracy = 0.90f;  // at kappa(1e-2)
    int accuracy_pairs = 2000;       // dev genuine/impostor pairs used for the gate
};

Verifier train_verifier(const synth::Manifest& manifest, LossKind loss_kind,
                        DepthKind depth_kind, uint64_t seed,
                        const VerifierTrainConfig& tcfg = {});

/// Verification accuracy on labelled pairs at a fixed threshold.
double pair_accuracy(const Verifier& model, const std::vector<synth::PairRef>& genuine,
                     const std::vector<synth::PairRef>& impostor, double kappa,
                     int max_pairs_each = -1);

/// Fraction of impostor pairs accepted at kappa (empirical FPR).
double empirical_fpr(const Verifier& model, const std::vector<synth::PairRef>& impostor,
                     double kappa);

// ----------------------------------------------------------------- landmarks

struct LandmarkerConfig {
    int n_points = synth::kNumKeypoints;
    int base_channels = 16;
    uint64_t seed = 1;
};

/// Direct coordinate regressor: image -> {N,2} pixel coordinates.
class Landmarker {
public:
    explicit Landmarker(const LandmarkerConfig& cfg);

    const LandmarkerConfig& config() const { return cfg_; }

    /// {N,H,W,3} -> {N, n_points*2}, coordinates in [0,1] image fractions.
    nn::Var predict_var(const nn::Var& images) const;
    /// One image -> {n_points,2} pixel coordinates.
    Tensor predict(const Tensor& image) const;

    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }

    void save(const std::string& path) const;
    static Landmarker load(const std::string& path);

private:
    LandmarkerConfig cfg_;
    nn::ParamStore ps_;
    std::vector<nn::Conv2d> blocks_;
    nn::Linear head_;
};

struct LandmarkerTrainConfig {
    int steps = 1500;
    int batch = 48;
    float rate = 1.5e-3f;
    int threads = 2;
    float max_clean_nme = 0.05f;
};

Landmarker train_landmarker(const synth::Manifest& manifest, uint64_t seed,
                            const LandmarkerTrainConfig& tcfg = {});

/// Mean NME of the model over fresh renders of the given identities.
double clean_nme(const Landmarker& model, const std::vector<int>& ids, int samples_per_id,
                 uint64_t seed);

}  // namespace semadv::targets
