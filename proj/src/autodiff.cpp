#include "semadv/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace semadv::nn {

namespace {

std::shared_ptr<Node> make_node(Tensor value, std::vector<std::shared_ptr<Node>> parents,
                                std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(backward);
    return n;
}

void ensure_grad(Node& n) {
    if (n.grad.empty() && n.value.size() > 0) n.grad = Tensor(n.value.shape());
}

Tensor& pgrad(const std::shared_ptr<Node>& p) {
    ensure_grad(*p);
    return p->grad;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.value().shape_str() + " vs " + b.value().shape_str());
}

}  // namespace

Var Var::leaf(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(n);
}

Var Var::constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(n);
}

void Var::zero_grad() const {
    if (node_) node_->grad = Tensor();
}

void Var::backward() const {
    if (!node_ || !node_->requires_grad) return;
    // Iterative topological order (children before parents).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({node_.get(), 0});
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    ensure_grad(*node_);
    node_->grad.fill(1.0f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a.value();
    const float* pb = b.value().data();
    for (size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
    return Var(make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = n.parents[k];
            if (!p->requires_grad) continue;
            Tensor& g = pgrad(p);
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    }));
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a.value();
    const float* pb = b.value().data();
    for (size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
    return Var(make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& g = pgrad(n.parents[0]);
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = pgrad(n.parents[1]);
            for (size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    }));
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a.value();
    const float* pb = b.value().data();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
    return Var(make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
        const Tensor& va = n.parents[0]->value;
        const Tensor& vb = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor& g = pgrad(n.parents[0]);
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * vb[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = pgrad(n.parents[1]);
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * va[i];
        }
    }));
}

Var scale(const Var& a, float s) {
    Tensor out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return Var(make_node(std::move(out), {a.node()}, [s](Node& n) {
        Tensor& g = pgrad(n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
    }));
}

Var add_scalar(const Var& a, float s) {
    Tensor out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] += s;
    return Var(make_node(std::move(out), {a.node()}, [](Node& n) {
        Tensor& g = pgrad(n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }));
}

Var square(const Var& a) {
    Tensor out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= out[i];
    return Var(make_node(std::move(out), {a.node()}, [](Node& n) {
        const Tensor& v = n.parents[0]->value;
        Tensor& g = pgrad(n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += 2.0f * v[i] * n.grad[i];
    }));
}

Var relu(const Var& a) {
    Tensor out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0f, out[i]);
    return Var(make_node(std::move(out), {a.node()}, [](Node& n) {
        const Tensor& v = n.parents[0]->value;
        Tensor& g = pgrad(n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i)
            if (v[i] > 0.0f) g[i] += n.grad[i];
    }));
}

Var leaky_relu(const Var& a, float slope) {
    Tensor out = a.value();
    for (size_t i = 0; i < out.size(); ++i)
        if (out[i] < 0.0f) out[i] *= slope;
    return Var(make_node(std::move(out), {a.node()}, [slope](Node& n) {
        const Tensor& v = n.parents[0]->value;
        Tensor& g = pgrad(n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += (v[i] > 0.0f ? 1.0f : slope) * n.grad[i];
    }));
}

Var sigmoid(const Var& a) {
    Tensor out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0f / (1.0f + std::exp(-out[i]));
    return Var(make_node(std::move(out), {a.node()}, [](Node& n) {
        const Tensor& y = n.value;
        Tensor& g = pgrad(n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += y[i] * (1.0f - y[i]) * n.grad[i];
    }));
}

Var sum(const Var& a) {
    Tensor out({1});
    out[0] = static_cast<float>(a.value().sum());
    return Var(make_node(std::move(out), {a.node()}, [](Node& n) {
        Tensor& g = pgrad(n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
    }));
}

Var mean(const Var& a) {
    const float inv = 1.0f / static_cast<float>(a.value().size());
    Tensor out({1});
    out[0] = static_cast<float>(a.value().sum()) * inv;
    return Var(make_node(std::move(out), {a.node()}, [inv](Node& n) {
        Tensor& g = pgrad(n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += inv * n.grad[0];
    }));
}

Var l1_diff(const Var& a, const Var& b) {
    check_same_shape(a, b, "l1_diff");
    const float inv = 1.0f / static_cast<float>(a.value().size());
    Tensor out({1});
    double s = 0.0;
    const Tensor &va = a.value(), &vb = b.value();
    for (size_t i = 0; i < va.size(); ++i) s += std::fabs(va[i] - vb[i]);
    out[0] = static_cast<float>(s * inv);
    return Var(make_node(std::move(out), {a.node(), b.node()}, [inv](Node& n) {
        const Tensor &va = n.parents[0]->value, &vb = n.parents[1]->value;
        for (int k = 0; k < 2; ++k) {
            if (!n.parents[k]->requires_grad) continue;
            Tensor& g = pgrad(n.parents[k]);
            const float sgn_mul = (k == 0) ? 1.0f : -1.0f;
            for (size_t i = 0; i < g.size(); ++i) {
                float d = va[i] - vb[i];
                float s = d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
                g[i] += sgn_mul * s * inv * n.grad[0];
            }
        }
    }));
}

Var l2sq_diff(const Var& a, const Var& b) {
    check_same_shape(a, b, "l2sq_diff");
    Tensor out({1});
    double s = 0.0;
    const Tensor &va = a.value(), &vb = b.value();
    for (size_t i = 0; i < va.size(); ++i) {
        double d = static_cast<double>(va[i]) - vb[i];
        s += d * d;
    }
    out[0] = static_cast<float>(s);
    return Var(make_node(std::move(out), {a.node(), b.node()}, [](Node& n) {
        const Tensor &va = n.parents[0]->value, &vb = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor& g = pgrad(n.parents[0]);
            for (size_t i = 0; i < g.size(); ++i) g[i] += 2.0f * (va[i] - vb[i]) * n.grad[0];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = pgrad(n.parents[1]);
            for (size_t i = 0; i < g.size(); ++i) g[i] -= 2.0f * (va[i] - vb[i]) * n.grad[0];
        }
    }));
}

Var clamp_min_scalar(const Var& a, float floor) {
    if (a.value().size() != 1) throw std::invalid_argument("clamp_min_scalar: expects {1}");
    Tensor out({1});
    out[0] = std::max(floor, a.value()[0]);
    return Var(make_node(std::move(out), {a.node()}, [floor](Node& n) {
        if (n.parents[0]->value[0] > floor) pgrad(n.parents[0])[0] += n.grad[0];
    }));
}

Var normal_cdf(const Var& a) {
    if (a.value().size() != 1) throw std::invalid_argument("normal_cdf: expects {1}");
    const double z = a.value()[0];
    Tensor out({1});
    out[0] = static_cast<float>(0.5 * std::erfc(-z / std::sqrt(2.0)));
    return Var(make_node(std::move(out), {a.node()}, [z](Node& n) {
        const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
        pgrad(n.parents[0])[0] += static_cast<float>(pdf) * n.grad[0];
    }));
}

Var sqrt_scalar(const Var& a, float eps) {
    if (a.value().size() != 1) throw std::invalid_argument("sqrt_scalar: expects {1}");
    Tensor out({1});
    const float v = std::max(0.0f, a.value()[0]);
    out[0] = std::sqrt(v);
    return Var(make_node(std::move(out), {a.node()}, [eps](Node& n) {
        float denom = 2.0f * std::max(n.value[0], eps);
        pgrad(n.parents[0])[0] += n.grad[0] / denom;
    }));
}

Var mul_scalar_var(const Var& a, const Var& s) {
    if (s.value().size() != 1) throw std::invalid_argument("mul_scalar_var: s must be {1}");
    const float sv = s.value()[0];
    Tensor out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= sv;
    return Var(make_node(std::move(out), {a.node(), s.node()}, [sv](Node& n) {
        const Tensor& va = n.parents[0]->value;
        if (n.parents[0]->requires_grad) {
            Tensor& g = pgrad(n.parents[0]);
            for (size_t i = 0; i < g.size(); ++i) g[i] += sv * n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            double acc = 0.0;
            for (size_t i = 0; i < va.size(); ++i) acc += static_cast<double>(va[i]) * n.grad[i];
            pgrad(n.parents[1])[0] += static_cast<float>(acc);
        }
    }));
}

// ---------------------------------------------------------------- shape ops

Var concat_broadcast(const Var& img, const Var& vec) {
    const Tensor& x = img.value();
    const Tensor& v = vec.value();
    if (x.rank() != 4 || (v.rank() != 1 && v.rank() != 2))
        throw std::invalid_argument("concat_broadcast: expects {N,H,W,C} and {D} or {N,D}");
    const bool per_row = v.rank() == 2;
    if (per_row && v.dim(0) != x.dim(0))
        throw std::invalid_argument("concat_broadcast: row count mismatch");
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c1 = x.dim(3);
    const int c2 = per_row ? v.dim(1) : v.dim(0);
    const size_t hw = static_cast<size_t>(h) * w;
    Tensor out({n, h, w, c1 + c2});
    for (int b = 0; b < n; ++b) {
        const float* vp = v.data() + (per_row ? static_cast<size_t>(b) * c2 : 0);
        for (size_t p = 0; p < hw; ++p) {
            const size_t idx = static_cast<size_t>(b) * hw + p;
            float* o = out.data() + idx * (c1 + c2);
            const float* xi = x.data() + idx * c1;
            std::copy(xi, xi + c1, o);
            std::copy(vp, vp + c2, o + c1);
        }
    }
    return Var(make_node(std::move(out), {img.node(), vec.node()},
                         [n, hw, c1, c2, per_row](Node& nd) {
        if (nd.parents[0]->requires_grad) {
            Tensor& g = pgrad(nd.parents[0]);
            const size_t px = static_cast<size_t>(n) * hw;
            for (size_t p = 0; p < px; ++p) {
                const float* go = nd.grad.data() + p * (c1 + c2);
                float* gi = g.data() + p * c1;
                for (int i = 0; i < c1; ++i) gi[i] += go[i];
            }
        }
        if (nd.parents[1]->requires_grad) {
            Tensor& g = pgrad(nd.parents[1]);
            for (int b = 0; b < n; ++b) {
                float* gv = g.data() + (per_row ? static_cast<size_t>(b) * c2 : 0);
                for (size_t p = 0; p < hw; ++p) {
                    const float* go =
                        nd.grad.data() + (static_cast<size_t>(b) * hw + p) * (c1 + c2) + c1;
                    for (int i = 0; i < c2; ++i) gv[i] += go[i];
                }
            }
        }
    }));
}

// --------------------------------------------------------------- conv / gemm

namespace {

struct ConvDims {
    int n, h, w, cin, k, cout, stride, ho, wo;
    size_t rows, cols;  // im2col: rows x cols
};

ConvDims conv_dims(const Tensor& input, const Tensor& weights, int stride) {
    if (input.rank() != 4) throw std::invalid_argument("conv2d: input must be {N,H,W,C}");
    if (weights.rank() != 4) throw std::invalid_argument("conv2d: weights must be {K,K,Cin,Cout}");
    ConvDims d;
    d.n = input.dim(0);
    d.h = input.dim(1);
    d.w = input.dim(2);
    d.cin = input.dim(3);
    d.k = weights.dim(0);
    d.cout = weights.dim(3);
    d.stride = stride;
    if (weights.dim(1) != d.k || weights.dim(2) != d.cin)
        throw std::invalid_argument("conv2d: weight shape mismatch");
    const int pad = d.k / 2;
    d.ho = (d.h + 2 * pad - d.k) / stride + 1;
    d.wo = (d.w + 2 * pad - d.k) / stride + 1;
    d.rows = static_cast<size_t>(d.n) * d.ho * d.wo;
    d.cols = static_cast<size_t>(d.k) * d.k * d.cin;
    return d;
}

void im2col(const Tensor& input, const ConvDims& d, std::vector<float>& cols) {
    cols.assign(d.rows * d.cols, 0.0f);
    const int pad = d.k / 2;
    size_t r = 0;
    for (int n = 0; n < d.n; ++n) {
        const float* img = input.data() + static_cast<size_t>(n) * d.h * d.w * d.cin;
        for (int oy = 0; oy < d.ho; ++oy) {
            for (int ox = 0; ox < d.wo; ++ox, ++r) {
                float* dst = cols.data() + r * d.cols;
                for (int ky = 0; ky < d.k; ++ky) {
                    const int iy = oy * d.stride + ky - pad;
                    if (iy < 0 || iy >= d.h) {
                        dst += d.k * d.cin;
                        continue;
                    }
                    for (int kx = 0; kx < d.k; ++kx) {
                        const int ix = ox * d.stride + kx - pad;
                        if (ix >= 0 && ix < d.w) {
                            const float* src = img + (static_cast<size_t>(iy) * d.w + ix) * d.cin;
                            std::copy(src, src + d.cin, dst);
                        }
                        dst += d.cin;
                    }
                }
            }
        }
    }
}

void col2im_add(const std::vector<float>& cols, const ConvDims& d, Tensor& grad_input) {
    const int pad = d.k / 2;
    size_t r = 0;
    for (int n = 0; n < d.n; ++n) {
        float* img = grad_input.data() + static_cast<size_t>(n) * d.h * d.w * d.cin;
        for (int oy = 0; oy < d.ho; ++oy) {
            for (int ox = 0; ox < d.wo; ++ox, ++r) {
                const float* src = cols.data() + r * d.cols;
                for (int ky = 0; ky < d.k; ++ky) {
                    const int iy = oy * d.stride + ky - pad;
                    if (iy < 0 || iy >= d.h) {
                        src += d.k * d.cin;
                        continue;
                    }
                    for (int kx = 0; kx < d.k; ++kx) {
                        const int ix = ox * d.stride + kx - pad;
                        if (ix >= 0 && ix < d.w) {
                            float* dst = img + (static_cast<size_t>(iy) * d.w + ix) * d.cin;
                            for (int c = 0; c < d.cin; ++c) dst[c] += src[c];
                        }
                        src += d.cin;
                    }
                }
            }
        }
    }
}

}  // namespace

namespace kernels {

void conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
                    Tensor& out) {
    ConvDims d = conv_dims(input, weights, stride);
    std::vector<float> cols;
    im2col(input, d, cols);
    out = Tensor({d.n, d.ho, d.wo, d.cout});
    gemm(cols.data(), weights.data(), out.data(), static_cast<int>(d.rows),
         static_cast<int>(d.cols), d.cout);
    float* o = out.data();
    for (size_t r = 0; r < d.rows; ++r)
        for (int c = 0; c < d.cout; ++c) o[r * d.cout + c] += bias[c];
}

}  // namespace kernels

Var conv2d(const Var& input, const Var& weights, const Var& bias, int stride) {
    ConvDims d = conv_dims(input.value(), weights.value(), stride);
    if (bias.value().size() != static_cast<size_t>(d.cout))
        throw std::invalid_argument("conv2d: bias size mismatch");

    auto cols = std::make_shared<std::vector<float>>();
    im2col(input.value(), d, *cols);
    Tensor out({d.n, d.ho, d.wo, d.cout});
    kernels::gemm(cols->data(), weights.value().data(), out.data(), static_cast<int>(d.rows),
                  static_cast<int>(d.cols), d.cout);
    {
        float* o = out.data();
        const float* b = bias.value().data();
        for (size_t r = 0; r < d.rows; ++r)
            for (int c = 0; c < d.cout; ++c) o[r * d.cout + c] += b[c];
    }

    return Var(make_node(std::move(out), {input.node(), weights.node(), bias.node()},
                         [d, cols](Node& n) {
        const int rows = static_cast<int>(d.rows);
        const int colsn = static_cast<int>(d.cols);
        const float* go = n.grad.data();
        if (n.parents[1]->requires_grad) {  // dW = cols^T . gout
            Tensor& gw = pgrad(n.parents[1]);
            kernels::gemm_tn(cols->data(), go, gw.data(), colsn, rows, d.cout, true);
        }
        if (n.parents[2]->requires_grad) {
            Tensor& gb = pgrad(n.parents[2]);
            for (size_t r = 0; r < d.rows; ++r)
                for (int c = 0; c < d.cout; ++c) gb[c] += go[r * d.cout + c];
        }
        if (n.parents[0]->requires_grad) {  // dcols = gout . W^T, then col2im
            std::vector<float> dcols(d.rows * d.cols);
            kernels::gemm_nt(go, n.parents[1]->value.data(), dcols.data(), rows, d.cout, colsn);
            Tensor& gi = pgrad(n.parents[0]);
            col2im_add(dcols, d, gi);
        }
    }));
}

Var upsample2x(const Var& a) {
    const Tensor& x = a.value();
    if (x.rank() != 4) throw std::invalid_argument("upsample2x: expects {N,H,W,C}");
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    Tensor out({n, 2 * h, 2 * w, c});
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < 2 * h; ++y)
            for (int xw = 0; xw < 2 * w; ++xw) {
                const float* src =
                    x.data() + ((static_cast<size_t>(b) * h + y / 2) * w + xw / 2) * c;
                float* dst =
                    out.data() + ((static_cast<size_t>(b) * 2 * h + y) * 2 * w + xw) * c;
                std::copy(src, src + c, dst);
            }
    return Var(make_node(std::move(out), {a.node()}, [n, h, w, c](Node& nd) {
        Tensor& g = pgrad(nd.parents[0]);
        for (int b = 0; b < n; ++b)
            for (int y = 0; y < 2 * h; ++y)
                for (int xw = 0; xw < 2 * w; ++xw) {
                    const float* src =
                        nd.grad.data() + ((static_cast<size_t>(b) * 2 * h + y) * 2 * w + xw) * c;
                    float* dst = g.data() + ((static_cast<size_t>(b) * h + y / 2) * w + xw / 2) * c;
                    for (int i = 0; i < c; ++i) dst[i] += src[i];
                }
    }));
}

Var global_avg_pool(const Var& a) {
    const Tensor& x = a.value();
    if (x.rank() != 4) throw std::invalid_argument("global_avg_pool: expects {N,H,W,C}");
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const float inv = 1.0f / static_cast<float>(h * w);
    Tensor out({n, c});
    for (int b = 0; b < n; ++b) {
        const float* img = x.data() + static_cast<size_t>(b) * h * w * c;
        float* dst = out.data() + static_cast<size_t>(b) * c;
        for (int p = 0; p < h * w; ++p)
            for (int i = 0; i < c; ++i) dst[i] += img[static_cast<size_t>(p) * c + i];
        for (int i = 0; i < c; ++i) dst[i] *= inv;
    }
    return Var(make_node(std::move(out), {a.node()}, [n, h, w, c, inv](Node& nd) {
        Tensor& g = pgrad(nd.parents[0]);
        for (int b = 0; b < n; ++b) {
            const float* src = nd.grad.data() + static_cast<size_t>(b) * c;
            float* img = g.data() + static_cast<size_t>(b) * h * w * c;
            for (int p = 0; p < h * w; ++p)
                for (int i = 0; i < c; ++i) img[static_cast<size_t>(p) * c + i] += src[i] * inv;
        }
    }));
}

Var linear(const Var& input, const Var& weights, const Var& bias) {
    const Tensor& x = input.value();
    const Tensor& w = weights.value();
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
        throw std::invalid_argument("linear: expects {N,D} x {D,M}");
    const int n = x.dim(0), dIn = x.dim(1), m = w.dim(1);
    if (bias.value().size() != static_cast<size_t>(m))
        throw std::invalid_argument("linear: bias size mismatch");
    Tensor out({n, m});
    kernels::gemm(x.data(), w.data(), out.data(), n, dIn, m);
    for (int b = 0; b < n; ++b)
        for (int i = 0; i < m; ++i) out[static_cast<size_t>(b) * m + i] += bias.value()[i];
    return Var(make_node(std::move(out), {input.node(), weights.node(), bias.node()},
                         [n, dIn, m](Node& nd) {
        const float* go = nd.grad.data();
        if (nd.parents[1]->requires_grad) {  // dW = x^T gout
            Tensor& gw = pgrad(nd.parents[1]);
            kernels::gemm_tn(nd.parents[0]->value.data(), go, gw.data(), dIn, n, m, true);
        }
        if (nd.parents[2]->requires_grad) {
            Tensor& gb = pgrad(nd.parents[2]);
            for (int b = 0; b < n; ++b)
                for (int i = 0; i < m; ++i) gb[i] += go[static_cast<size_t>(b) * m + i];
        }
        if (nd.parents[0]->requires_grad) {  // dx = gout W^T
            Tensor& gx = pgrad(nd.parents[0]);
            kernels::gemm_nt(go, nd.parents[1]->value.data(), gx.data(), n, m, dIn, true);
        }
    }));
}

Var l2_normalize_rows(const Var& a, float eps) {
    const Tensor& x = a.value();
    if (x.rank() != 2) throw std::invalid_argument("l2_normalize_rows: expects {N,D}");
    const int n = x.dim(0), d = x.dim(1);
    Tensor out({n, d});
    auto norms = std::make_shared<std::vector<float>>(n);
    for (int b = 0; b < n; ++b) {
        const float* row = x.data() + static_cast<size_t>(b) * d;
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += static_cast<double>(row[i]) * row[i];
        float nv = static_cast<float>(std::sqrt(s + eps));
        (*norms)[b] = nv;
        float* o = out.data() + static_cast<size_t>(b) * d;
        for (int i = 0; i < d; ++i) o[i] = row[i] / nv;
    }
    return Var(make_node(std::move(out), {a.node()}, [n, d, norms](Node& nd) {
        Tensor& g = pgrad(nd.parents[0]);
        for (int b = 0; b < n; ++b) {
            const float* y = nd.value.data() + static_cast<size_t>(b) * d;
            const float* go = nd.grad.data() + static_cast<size_t>(b) * d;
            float* gx = g.data() + static_cast<size_t>(b) * d;
            double dot = 0.0;
            for (int i = 0; i < d; ++i) dot += static_cast<double>(go[i]) * y[i];
            const float nv = (*norms)[b];
            for (int i = 0; i < d; ++i)
                gx[i] += (go[i] - static_cast<float>(dot) * y[i]) / nv;
        }
    }));
}

Var transpose2d(const Var& a) {
    const Tensor& x = a.value();
    if (x.rank() != 2) throw std::invalid_argument("transpose2d: expects {A,B}");
    const int r = x.dim(0), c = x.dim(1);
    Tensor out({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out[static_cast<size_t>(j) * r + i] = x[static_cast<size_t>(i) * c + j];
    return Var(make_node(std::move(out), {a.node()}, [r, c](Node& n) {
        Tensor& g = pgrad(n.parents[0]);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                g[static_cast<size_t>(i) * c + j] += n.grad[static_cast<size_t>(j) * r + i];
    }));
}

namespace {
Var reshape_keep(const Var& a, std::vector<int> shape) {
    Tensor out(std::move(shape), a.value().vec());
    if (out.size() != a.value().size())
        throw std::invalid_argument("reshape: element count mismatch");
    return Var(make_node(std::move(out), {a.node()}, [](Node& nd) {
        Tensor& g = pgrad(nd.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i];
    }));
}
}  // namespace

Var flatten_rows(const Var& a) {
    const Tensor& x = a.value();
    if (x.rank() < 2) throw std::invalid_argument("flatten_rows: expects rank >= 2");
    const int n = x.dim(0);
    const int d = static_cast<int>(x.size()) / n;
    return reshape_keep(a, {n, d});
}

Var unsqueeze0(const Var& a) {
    std::vector<int> shape = {1};
    for (int d : a.value().shape()) shape.push_back(d);
    return reshape_keep(a, std::move(shape));
}

Var squeeze0(const Var& a) {
    const auto& s = a.value().shape();
    if (s.empty() || s[0] != 1) throw std::invalid_argument("squeeze0: leading dim must be 1");
    return reshape_keep(a, std::vector<int>(s.begin() + 1, s.end()));
}

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
    const Tensor& z = logits.value();
    if (z.rank() != 2 || static_cast<size_t>(z.dim(0)) != labels.size())
        throw std::invalid_argument("softmax_cross_entropy: bad shapes");
    const int n = z.dim(0), k = z.dim(1);
    auto probs = std::make_shared<Tensor>(Tensor({n, k}));
    double loss = 0.0;
    for (int b = 0; b < n; ++b) {
        const float* row = z.data() + static_cast<size_t>(b) * k;
        float mx = row[0];
        for (int i = 1; i < k; ++i) mx = std::max(mx, row[i]);
        double denom = 0.0;
        for (int i = 0; i < k; ++i) denom += std::exp(static_cast<double>(row[i]) - mx);
        float* p = probs->data() + static_cast<size_t>(b) * k;
        for (int i = 0; i < k; ++i)
            p[i] = static_cast<float>(std::exp(static_cast<double>(row[i]) - mx) / denom);
        loss -= std::log(std::max(1e-12, static_cast<double>(p[labels[b]])));
    }
    Tensor out({1});
    out[0] = static_cast<float>(loss / n);
    auto lab = std::make_shared<std::vector<int>>(labels);
    return Var(make_node(std::move(out), {logits.node()}, [n, k, probs, lab](Node& nd) {
        Tensor& g = pgrad(nd.parents[0]);
        const float inv = nd.grad[0] / static_cast<float>(n);
        for (int b = 0; b < n; ++b) {
            const float* p = probs->data() + static_cast<size_t>(b) * k;
            float* gr = g.data() + static_cast<size_t>(b) * k;
            for (int i = 0; i < k; ++i) gr[i] += p[i] * inv;
            gr[(*lab)[b]] -= inv;
        }
    }));
}

Var lerp_gate(const Var& beta, const Var& a, const Var& b) {
    check_same_shape(beta, a, "lerp_gate");
    check_same_shape(beta, b, "lerp_gate");
    const Tensor &vb = beta.value(), &va = a.value(), &vc = b.value();
    Tensor out(vb.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = vb[i] * va[i] + (1.0f - vb[i]) * vc[i];
    return Var(make_node(std::move(out), {beta.node(), a.node(), b.node()}, [](Node& n) {
        const Tensor &vb = n.parents[0]->value, &va = n.parents[1]->value,
                     &vc = n.parents[2]->value;
        if (n.parents[0]->requires_grad) {
            Tensor& g = pgrad(n.parents[0]);
            for (size_t i = 0; i < g.size(); ++i) g[i] += (va[i] - vc[i]) * n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = pgrad(n.parents[1]);
            for (size_t i = 0; i < g.size(); ++i) g[i] += vb[i] * n.grad[i];
        }
        if (n.parents[2]->requires_grad) {
            Tensor& g = pgrad(n.parents[2]);
            for (size_t i = 0; i < g.size(); ++i) g[i] += (1.0f - vb[i]) * n.grad[i];
        }
    }));
}

Var smoothness_penalty(const Var& beta) {
    const Tensor& x = beta.value();
    if (x.rank() != 3) throw std::invalid_argument("smoothness_penalty: expects {H,W,C}");
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    double s = 0.0;
    for (int y = 0; y + 1 < h; ++y)
        for (int xw = 0; xw < w; ++xw)
            for (int i = 0; i < c; ++i) {
                double d = static_cast<double>(x.at(y + 1, xw, i)) - x.at(y, xw, i);
                s += d * d;
            }
    for (int y = 0; y < h; ++y)
        for (int xw = 0; xw + 1 < w; ++xw)
            for (int i = 0; i < c; ++i) {
                double d = static_cast<double>(x.at(y, xw + 1, i)) - x.at(y, xw, i);
                s += d * d;
            }
    Tensor out({1});
    out[0] = static_cast<float>(s);
    return Var(make_node(std::move(out), {beta.node()}, [h, w, c](Node& n) {
        const Tensor& x = n.parents[0]->value;
        Tensor& g = pgrad(n.parents[0]);
        const float go = n.grad[0];
        auto at = [&](Tensor& t, int y, int xw, int i) -> float& {
            return t.vec()[(static_cast<size_t>(y) * w + xw) * c + i];
        };
        for (int y = 0; y + 1 < h; ++y)
            for (int xw = 0; xw < w; ++xw)
                for (int i = 0; i < c; ++i) {
                    float d = x.at(y + 1, xw, i) - x.at(y, xw, i);
                    at(g, y + 1, xw, i) += 2.0f * d * go;
                    at(g, y, xw, i) -= 2.0f * d * go;
                }
        for (int y = 0; y < h; ++y)
            for (int xw = 0; xw + 1 < w; ++xw)
                for (int i = 0; i < c; ++i) {
                    float d = x.at(y, xw + 1, i) - x.at(y, xw, i);
                    at(g, y, xw + 1, i) += 2.0f * d * go;
                    at(g, y, xw, i) -= 2.0f * d * go;
                }
    }));
}

}  // namespace semadv::nn
