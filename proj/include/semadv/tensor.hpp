#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace semadv {

/// Dense row-major float tensor. Rank up to 4 in practice; images are
/// stored as {H, W, C} with values in [0, 1], batches as {N, H, W, C}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0f) {}
    Tensor(std::vector<int> shape, float fill)
        : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}
    Tensor(std::vector<int> shape, std::vector<float> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_size(shape_))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }
    static Tensor full_like(const Tensor& t, float v) { return Tensor(t.shape_, v); }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](size_t i) { return data_[i]; }
    float operator[](size_t i) const { return data_[i]; }

    /// {H,W,C} indexing.
    float& at(int h, int w, int c) {
        return data_[(static_cast<size_t>(h) * shape_[1] + w) * shape_[2] + c];
    }
    float at(int h, int w, int c) const {
        return data_[(static_cast<size_t>(h) * shape_[1] + w) * shape_[2] + c];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

    Tensor& fill(float v) {
        std::fill(data_.begin(), data_.end(), v);
        return *this;
    }
    Tensor& clamp(float lo, float hi);

    float min() const;
    float max() const;
    double sum() const;
    double mean_abs() const;

private:
    static size_t checked_size(const std::vector<int>& shape);

    std::vector<int> shape_;
    std::vector<float> data_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);

/// 64-bit hash of shape and raw float bits; used for determinism checks
/// and frozen-parameter assertions.
uint64_t tensor_fingerprint(const Tensor& t);

/// Deterministic RNG with explicit uniform/normal maps so streams are
/// reproducible across platforms (std distributions are not).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int uniform_int(int lo, int hi);  // inclusive bounds
    /// Standard normal via Box-Muller on the explicit uniform stream.
    double normal();

    /// Independent child stream; stable under reordering of sibling draws.
    Rng fork(uint64_t salt) const;

private:
    uint64_t state_;
};

namespace detail {
uint64_t splitmix64(uint64_t& state);
}

}  // namespace semadv
