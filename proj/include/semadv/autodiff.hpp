#pragma once

#include <functional>
#include <memory>

#include "semadv/tensor.hpp"

namespace semadv::nn {

/// Reverse-mode autodiff over Tensor values. Ops build a dynamic graph of
/// shared nodes; Var is a cheap handle. Graphs are single-threaded; run
/// independent graphs on separate threads for parallelism.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // scatters node.grad to parents
    int topo_mark = 0;
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    /// Leaf that participates in gradients (parameters, attack variables).
    static Var leaf(Tensor value);
    /// Leaf excluded from gradients (inputs, frozen features).
    static Var constant(Tensor value);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& mutable_grad() { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    std::shared_ptr<Node> node() const { return node_; }

    /// Detached copy of the current value.
    Var detach() const { return constant(node_->value); }

    /// Backpropagate from this scalar (or from an all-ones seed).
    void backward() const;
    void zero_grad() const;

private:
    std::shared_ptr<Node> node_;
};

// ---- elementwise and reductions ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);          // elementwise
Var scale(const Var& a, float s);
Var add_scalar(const Var& a, float s);
Var square(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, float slope = 0.2f);
Var sigmoid(const Var& a);
Var sum(const Var& a);                         // -> scalar {1}
Var mean(const Var& a);                        // -> scalar {1}
Var l1_diff(const Var& a, const Var& b);       // mean |a-b| -> {1}
Var l2sq_diff(const Var& a, const Var& b);     // sum (a-b)^2 -> {1}

// max(floor, a) on a scalar; gradient passes only when a > floor.
Var clamp_min_scalar(const Var& a, float floor);

// Standard normal CDF of a scalar var.
Var normal_cdf(const Var& a);

// sqrt of a scalar var; eps guards the derivative at zero.
Var sqrt_scalar(const Var& a, float eps = 1e-12f);

// Elementwise a * s where s is a {1} var; grad flows to both.
Var mul_scalar_var(const Var& a, const Var& s);

// ---- shape ops ----
/// Broadcast a length-C vector over {N,H,W} and concatenate to image
/// channels: {N,H,W,C1} + {C2} -> {N,H,W,C1+C2}.
Var concat_broadcast(const Var& img, const Var& vec);

// ---- neural-net ops; NHWC layout ----
/// 3x3 convolution, zero padding 1, given stride. weights {K,K,Cin,Cout},
/// bias {Cout}. Input {N,H,W,C}.
Var conv2d(const Var& input, const Var& weights, const Var& bias, int stride);
/// Nearest-neighbour 2x upsampling.
Var upsample2x(const Var& a);
/// Global average pool {N,H,W,C} -> {N,C}.
Var global_avg_pool(const Var& a);
/// Fully connected: input {N,D}, weights {D,M}, bias {M} -> {N,M}.
Var linear(const Var& input, const Var& weights, const Var& bias);
/// Row-wise L2 normalisation of {N,D} (eps keeps zero rows finite).
Var l2_normalize_rows(const Var& a, float eps = 1e-12f);
/// {A,B} -> {B,A}.
Var transpose2d(const Var& a);
/// {N,...} -> {N,D} row-major reshape.
Var flatten_rows(const Var& a);
/// {...} -> {1,...}: prepend a unit batch dimension.
Var unsqueeze0(const Var& a);
/// {1, ...} -> {...}: drop the unit batch dimension.
Var squeeze0(const Var& a);
/// Mean softmax cross-entropy of logits {N,K} against integer labels.
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels);

/// Interpolation blend: beta*a + (1-beta)*b, all same shape. Gradient
/// flows to beta, a and b.
Var lerp_gate(const Var& beta, const Var& a, const Var& b);

/// Spatial smoothness penalty: sum of squared neighbour differences of
/// channel vectors, vertical plus horizontal. Input {H,W,C} -> {1}.
Var smoothness_penalty(const Var& beta);

// ---- plain-tensor helpers shared with inference paths ----
namespace kernels {
void conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                    int stride, Tensor& out);
void gemm(const float* a, const float* b, float* c, int m, int k, int n,
          bool acc = false);
// c[m,n] += or = a[k,m]^T b[k,n]
void gemm_tn(const float* a, const float* b, float* c, int m, int k, int n,
             bool acc = false);
// c[m,k] += or = a[m,n] b[k,n]^T
void gemm_nt(const float* a, const float* b, float* c, int m, int n, int k,
             bool acc = false);
}  // namespace kernels

}  // namespace semadv::nn
