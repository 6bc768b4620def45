#pragma once

#include "semadv/generator.hpp"

namespace semadv::interp {

/// Feature-space blend variable; every entry lives in [0,1] and the shape
/// matches the tap point's feature map.
struct InterpolationTensor {
    Tensor beta;
    std::string layer_name;

    static InterpolationTensor constant(const gen::Generator& g, const std::string& tap,
                                        float value);
    void clamp01() { beta.clamp(0.0f, 1.0f); }
};

struct InterpolationScalar {
    float alpha = 0.5f;

    explicit InterpolationScalar(float a);
};

/// c* = alpha * c + (1 - alpha) * c_new, elementwise.
synth::AttributeVector attribute_interpolate(const synth::AttributeVector& c,
                                             const synth::AttributeVector& c_new,
                                             InterpolationScalar alpha);

/// x* = decode(beta (.) enc(x, c) + (1-beta) (.) enc(x, c_new)).
Tensor feature_interpolate(const gen::Generator& model, const Tensor& image,
                           const synth::AttributeVector& c, const synth::AttributeVector& c_new,
                           const InterpolationTensor& beta);

/// Differentiable version used by optimization loops; beta_var must be a
/// leaf with the tap's shape {H,W,C}. The encodings are fixed tensors.
nn::Var feature_interpolate_var(const gen::Generator& model, const nn::Var& beta_var,
                                const Tensor& feat_c, const Tensor& feat_cnew,
                                const std::string& tap);

enum class SweepMode { kAttribute, kFeatureScalar };

/// One image per grid value; feature-scalar mode uses a constant beta
/// tensor at tap f0.
std::vector<Tensor> sweep(const gen::Generator& model, SweepMode mode, const Tensor& image,
                          const synth::AttributeVector& c, const synth::AttributeVector& c_new,
                          const std::vector<float>& grid);

}  // namespace semadv::interp
