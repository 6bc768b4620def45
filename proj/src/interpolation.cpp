#include "semadv/interpolation.hpp"

#include <stdexcept>

namespace semadv::interp {

using nn::Var;

InterpolationTensor InterpolationTensor::constant(const gen::Generator& g,
                                                  const std::string& tap, float value) {
    const auto& info = g.tap(tap);
    InterpolationTensor t;
    t.beta = Tensor(info.shape, value);
    t.layer_name = tap;
    return t;
}

InterpolationScalar::InterpolationScalar(float a) : alpha(a) {
    if (!(a >= 0.0f && a <= 1.0f))
        throw std::invalid_argument("interpolation scalar must lie in [0,1]");
}

synth::AttributeVector attribute_interpolate(const synth::AttributeVector& c,
                                             const synth::AttributeVector& c_new,
                                             InterpolationScalar alpha) {
    if (c.values.size() != c_new.values.size())
        throw std::invalid_argument("attribute_interpolate: length mismatch");
    synth::AttributeVector out = c;
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = alpha.alpha * c.values[i] + (1.0f - alpha.alpha) * c_new.values[i];
    return out;
}

Var feature_interpolate_var(const gen::Generator& model, const Var& beta_var,
                            const Tensor& feat_c, const Tensor& feat_cnew,
                            const std::string& tap) {
    const auto& info = model.tap(tap);
    const Tensor& b = beta_var.value();
    if (b.rank() != 3 || b.shape() != info.shape)
        throw std::invalid_argument("feature_interpolate: beta shape " + b.shape_str() +
                                    " does not match tap " + tap);
    if (feat_c.shape() != info.shape || feat_cnew.shape() != info.shape)
        throw std::invalid_argument("feature_interpolate: encoding shape mismatch at " + tap);

    // Blend in {H,W,C}, then add the batch dimension for the decoder.
    Var blend = nn::lerp_gate(beta_var, Var::constant(feat_c), Var::constant(feat_cnew));
    return model.decode_var(nn::unsqueeze0(blend), tap);
}

Tensor feature_interpolate(const gen::Generator& model, const Tensor& image,
                           const synth::AttributeVector& c, const synth::AttributeVector& c_new,
                           const InterpolationTensor& beta) {
    gen::FeatureMap fa = model.encode(image, c, beta.layer_name);
    gen::FeatureMap fb = model.encode(image, c_new, beta.layer_name);
    Var beta_const = Var::constant(beta.beta);
    Var out = feature_interpolate_var(model, beta_const, fa.tensor, fb.tensor, beta.layer_name);
    return Tensor({out.value().dim(1), out.value().dim(2), out.value().dim(3)},
                  out.value().vec());
}

std::vector<Tensor> sweep(const gen::Generator& model, SweepMode mode, const Tensor& image,
                          const synth::AttributeVector& c, const synth::AttributeVector& c_new,
                          const std::vector<float>& grid) {
    std::vector<Tensor> out;
    out.reserve(grid.size());
    for (float g : grid) {
        if (mode == SweepMode::kAttribute) {
            out.push_back(model.forward(image, attribute_interpolate(c, c_new,
                                                                     InterpolationScalar(g))));
        } else {
            InterpolationTensor beta = InterpolationTensor::constant(model, "f0", g);
            out.push_back(feature_interpolate(model, image, c, c_new, beta));
        }
    }
    return out;
}

}  // namespace semadv::interp
