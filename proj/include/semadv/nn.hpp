#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "semadv/autodiff.hpp"

namespace semadv::nn {

/// Named parameter store. Modules register tensors here; optimizers and
/// checkpoint IO work off the flat name -> Var map.
class ParamStore {
public:
    Var create(const std::string& name, std::vector<int> shape, Rng& rng, float fan_in_scale);
    Var create_zeros(const std::string& name, std::vector<int> shape);

    Var& at(const std::string& name);
    const std::map<std::string, Var>& all() const { return params_; }
    std::map<std::string, Var>& all() { return params_; }

    void zero_grads();
    /// Copy of every parameter value, keyed by name.
    std::map<std::string, Tensor> snapshot() const;
    void restore(const std::map<std::string, Tensor>& snap);
    uint64_t fingerprint() const;

private:
    std::map<std::string, Var> params_;
};

/// Adam with bias correction; moments keyed by parameter name.
class Adam {
public:
    explicit Adam(float rate, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
        : rate_(rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& params);
    /// Single-tensor variant used by attack loops (the decision variable
    /// is not part of a ParamStore).
    void step(Tensor& value, const Tensor& grad);

    void reset();
    float rate() const { return rate_; }
    void set_rate(float r) { rate_ = r; }

private:
    struct Moments {
        Tensor m, v;
    };
    void apply(Tensor& value, const Tensor& grad, Moments& mom, int64_t t);

    float rate_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::map<std::string, Moments> named_;
    Moments single_;
};

/// 3x3 conv + bias. Weight init: He-style scaled normal.
struct Conv2d {
    Var w, b;
    int stride = 1;

    static Conv2d make(ParamStore& ps, const std::string& name, int cin, int cout, int stride,
                       Rng& rng);
    Var operator()(const Var& x) const { return conv2d(x, w, b, stride); }
};

struct Linear {
    Var w, b;

    static Linear make(ParamStore& ps, const std::string& name, int din, int dout, Rng& rng);
    Var operator()(const Var& x) const { return linear(x, w, b); }
};

// Checkpoint IO: binary container with a version header followed by
// named float tensors. Shared by all model kinds.
inline constexpr uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const std::string& kind, const std::string& meta_json,
                      const std::map<std::string, Tensor>& tensors);

struct Checkpoint {
    std::string kind;
    std::string meta_json;
    std::map<std::string, Tensor> tensors;
};
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint_file(const std::string& path, const std::string& kind,
                          const std::string& meta_json,
                          const std::map<std::string, Tensor>& tensors);
Checkpoint load_checkpoint_file(const std::string& path);

}  // namespace semadv::nn
