#include "semadv/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace semadv::nn {

Var ParamStore::create(const std::string& name, std::vector<int> shape, Rng& rng,
                       float fan_in_scale) {
    Tensor t(shape);
    const float sd = std::sqrt(2.0f / fan_in_scale);
    for (size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.normal()) * sd;
    Var v = Var::leaf(std::move(t));
    if (!params_.emplace(name, v).second)
        throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    return v;
}

Var ParamStore::create_zeros(const std::string& name, std::vector<int> shape) {
    Var v = Var::leaf(Tensor(std::move(shape)));
    if (!params_.emplace(name, v).second)
        throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    return v;
}

Var& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [name, v] : params_) v.zero_grad();
}

std::map<std::string, Tensor> ParamStore::snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : params_) out.emplace(name, v.value());
    return out;
}

void ParamStore::restore(const std::map<std::string, Tensor>& snap) {
    for (auto& [name, v] : params_) {
        auto it = snap.find(name);
        if (it == snap.end()) throw std::invalid_argument("ParamStore: missing tensor " + name);
        if (!(it->second.shape() == v.value().shape()))
            throw std::invalid_argument("ParamStore: shape mismatch for " + name);
        v.mutable_value() = it->second;
    }
}

uint64_t ParamStore::fingerprint() const {
    uint64_t h = 0x811c9dc5u;
    for (const auto& [name, v] : params_) {
        for (char c : name) h = (h ^ static_cast<uint64_t>(c)) * 0x100000001b3ull;
        h ^= tensor_fingerprint(v.value());
        h *= 0x100000001b3ull;
    }
    return h;
}

void Adam::apply(Tensor& value, const Tensor& grad, Moments& mom, int64_t t) {
    if (mom.m.empty()) {
        mom.m = Tensor(value.shape());
        mom.v = Tensor(value.shape());
    }
    const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t));
    const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t));
    for (size_t i = 0; i < value.size(); ++i) {
        const float g = grad[i];
        mom.m[i] = beta1_ * mom.m[i] + (1.0f - beta1_) * g;
        mom.v[i] = beta2_ * mom.v[i] + (1.0f - beta2_) * g * g;
        const float mhat = mom.m[i] / bc1;
        const float vhat = mom.v[i] / bc2;
        value[i] -= rate_ * mhat / (std::sqrt(vhat) + eps_);
    }
}

void Adam::step(ParamStore& params) {
    ++t_;
    for (auto& [name, v] : params.all()) {
        if (v.grad().empty()) continue;
        apply(v.mutable_value(), v.grad(), named_[name], t_);
    }
}

void Adam::step(Tensor& value, const Tensor& grad) {
    ++t_;
    apply(value, grad, single_, t_);
}

void Adam::reset() {
    t_ = 0;
    named_.clear();
    single_ = Moments{};
}

Conv2d Conv2d::make(ParamStore& ps, const std::string& name, int cin, int cout, int stride,
                    Rng& rng) {
    Conv2d c;
    c.w = ps.create(name + ".w", {3, 3, cin, cout}, rng, static_cast<float>(9 * cin));
    c.b = ps.create_zeros(name + ".b", {cout});
    c.stride = stride;
    return c;
}

Linear Linear::make(ParamStore& ps, const std::string& name, int din, int dout, Rng& rng) {
    Linear l;
    l.w = ps.create(name + ".w", {din, dout}, rng, static_cast<float>(din));
    l.b = ps.create_zeros(name + ".b", {dout});
    return l;
}

// ------------------------------------------------------------ checkpoint IO

namespace {
constexpr char kMagic[8] = {'S', 'A', 'D', 'V', 'C', 'K', 'P', 'T'};

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_str(std::istream& is) {
    uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}
}  // namespace

void write_checkpoint(std::ostream& os, const std::string& kind, const std::string& meta_json,
                      const std::map<std::string, Tensor>& tensors) {
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, kCheckpointVersion);
    write_str(os, kind);
    write_str(os, meta_json);
    write_u32(os, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_str(os, name);
        write_u32(os, static_cast<uint32_t>(t.rank()));
        for (int d : t.shape()) write_u32(os, static_cast<uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    uint32_t version = read_u32(is);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint cp;
    cp.kind = read_str(is);
    cp.meta_json = read_str(is);
    uint32_t count = read_u32(is);
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = read_str(is);
        uint32_t rank = read_u32(is);
        std::vector<int> shape(rank);
        size_t total = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<int>(read_u32(is));
            total *= static_cast<size_t>(shape[d]);
        }
        std::vector<float> data(total);
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(total * sizeof(float)));
        cp.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return cp;
}

void save_checkpoint_file(const std::string& path, const std::string& kind,
                          const std::string& meta_json,
                          const std::map<std::string, Tensor>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    write_checkpoint(os, kind, meta_json, tensors);
}

Checkpoint load_checkpoint_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    return read_checkpoint(is);
}

}  // namespace semadv::nn
