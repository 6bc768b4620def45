#include "semadv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace semadv {

size_t Tensor::checked_size(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
        n *= static_cast<size_t>(d);
    }
    return n;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "{";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "}";
    return os.str();
}

Tensor& Tensor::clamp(float lo, float hi) {
    for (float& v : data_) v = std::min(hi, std::max(lo, v));
    return *this;
}

float Tensor::min() const {
    float m = std::numeric_limits<float>::infinity();
    for (float v : data_) m = std::min(m, v);
    return m;
}

float Tensor::max() const {
    float m = -std::numeric_limits<float>::infinity();
    for (float v : data_) m = std::max(m, v);
    return m;
}

double Tensor::sum() const {
    double s = 0.0;
    for (float v : data_) s += v;
    return s;
}

double Tensor::mean_abs() const {
    if (data_.empty()) return 0.0;
    double s = 0.0;
    for (float v : data_) s += std::fabs(v);
    return s / static_cast<double>(data_.size());
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

uint64_t tensor_fingerprint(const Tensor& t) {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](uint64_t v) {
        h ^= v;
        h *= 0x100000001b3ull;
    };
    for (int d : t.shape()) mix(static_cast<uint64_t>(d) + 0x9e37ull);
    const float* p = t.data();
    for (size_t i = 0; i < t.size(); ++i) {
        uint32_t bits;
        std::memcpy(&bits, &p[i], sizeof(bits));
        mix(bits);
    }
    return h;
}

namespace detail {
uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
}  // namespace detail

uint64_t Rng::next_u64() { return detail::splitmix64(state_); }

double Rng::uniform() {
    // 53 random bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int Rng::uniform_int(int lo, int hi) {
    if (hi < lo) throw std::invalid_argument("Rng::uniform_int: hi < lo");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
}

double Rng::normal() {
    // Box-Muller; discards the second deviate to keep the stream simple.
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Rng Rng::fork(uint64_t salt) const {
    uint64_t s = state_;
    uint64_t a = detail::splitmix64(s);
    return Rng(a ^ (salt * 0x9e3779b97f4a7c15ull + 0x7f4a7c15ull));
}

}  // namespace semadv
