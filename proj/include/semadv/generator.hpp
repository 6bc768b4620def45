#pragma once

#include <optional>

#include "semadv/nn.hpp"
#include "semadv/synthdata.hpp"

namespace semadv::gen {

/// Feature tensor at a named tap point of the generator chain.
struct FeatureMap {
    Tensor tensor;
    std::string layer_name;
};

struct GeneratorConfig {
    int image_size = synth::kImageSize;
    int n_attributes = synth::kNumAttributes;
    int base_channels = 16;
    uint64_t seed = 1;
};

struct TapInfo {
    std::string name;
    int stage_index;            // chain position the tap reads from
    std::vector<int> shape;     // {H,W,C}
};

/// Attribute-conditioned image editor split into an encoder/decoder
/// chain: stem, two downsampling convs, three residual blocks, two
/// upsampling convs, output conv. Taps: "f-2" and "f-1" after the first
/// and second downsampling, "f0" after the residual blocks (before any
/// upsampling), "f1"/"f2" after each upsampling.
class Generator {
public:
    explicit Generator(const GeneratorConfig& cfg);

    const GeneratorConfig& config() const { return cfg_; }
    const std::vector<TapInfo>& registry() const { return taps_; }
    const TapInfo& tap(const std::string& name) const;

    /// Differentiable forward to a tap. x {N,H,W,3}, attrs {D} or {N,D}.
    nn::Var encode_var(const nn::Var& x, const nn::Var& attrs, const std::string& tap) const;
    /// Differentiable remainder of the chain from a tap.
    nn::Var decode_var(const nn::Var& feature, const std::string& tap) const;
    nn::Var forward_var(const nn::Var& x, const nn::Var& attrs) const;

    FeatureMap encode(const Tensor& image, const synth::AttributeVector& attrs,
                      const std::string& tap = "f0") const;
    Tensor decode(const FeatureMap& feature) const;
    /// decode(encode(x, c, "f0")): the one-shot edit is defined as this
    /// exact composition, so the split is the identity by construction.
    Tensor forward(const Tensor& image, const synth::AttributeVector& attrs) const;

    /// Pixel-space refinement x' minimising ||G(x', c) - x||_2; returns
    /// the best iterate, never worse than x itself.
    Tensor invert_reconstruction(const Tensor& image, const synth::AttributeVector& attrs,
                                 int steps = 50, float rate = 0.01f) const;

    nn::ParamStore& params() { return ps_; }
    const nn::ParamStore& params() const { return ps_; }

    void save(const std::string& path) const;
    static Generator load(const std::string& path);

private:
    nn::Var run_stages(nn::Var h, int first, int last) const;
    static nn::Var attrs_to_var(const synth::AttributeVector& attrs);

    GeneratorConfig cfg_;
    nn::ParamStore ps_;
    std::vector<nn::Conv2d> convs_;  // indexed by stage layout below
    std::vector<TapInfo> taps_;
};

struct GeneratorTrainConfig {
    int steps = 3000;
    int batch = 24;
    float rate = 2e-3f;
    uint64_t seed = 7;
    int threads = 2;
    float target_l1 = 0.045f;   // early stop on a held-out probe
    int eval_every = 250;
};

struct TrainingError : std::runtime_error {
    TrainingError(const std::string& msg, std::vector<double> trace)
        : std::runtime_error(msg), loss_trace(std::move(trace)) {}
    std::vector<double> loss_trace;
};

/// Supervised paired editing on procedural renders: inputs are renders of
/// (id, c_src); targets are ground-truth renders of (id, c_cond).
Generator train_generator(const synth::Manifest& manifest, const GeneratorConfig& cfg,
                          const GeneratorTrainConfig& tcfg);

/// Mean per-pixel L1 editing error over held-out identities: pure
/// reconstruction and single-attribute edits, measured against oracle
/// renders.
struct EditFidelity {
    double recon_l1 = 0.0;
    double edit_l1 = 0.0;
};
EditFidelity measure_edit_fidelity(const Generator& g, const std::vector<int>& ids,
                                   int samples_per_id, uint64_t seed);

}  // namespace semadv::gen
