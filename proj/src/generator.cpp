#include "semadv/generator.hpp"

#include <cmath>
#include <thread>

#include <json.hpp>

namespace semadv::gen {

using nn::Var;
using synth::AttributeVector;

// Stage layout over convs_:
//   0 stem (s1, in -> b)
//   1 down1 (s2, b -> 2b)            -> tap f-2
//   2 down2 (s2, 2b -> 4b)           -> tap f-1
//   3..8 residual convs (3 blocks)   -> tap f0 after block 3
//   9 up1 conv (s1, 4b -> 2b), preceded by upsample   -> tap f1
//   10 up2 conv (s1, 2b -> b), preceded by upsample   -> tap f2
//   11 output conv (s1, b -> 3), sigmoid
// "Stage index" used by taps counts the logical chain stages 0..8:
//   0 stem, 1 down1, 2 down2, 3 middle, 4 up1, 5 up2, 6 out.
// Taps: f-2 after 1, f-1 after 2, f0 after 3, f1 after 4, f2 after 5.

Generator::Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
    Rng rng(cfg.seed ^ 0x67656e65ull);
    const int b = cfg.base_channels;
    const int in = synth::kImageChannels + cfg.n_attributes;
    convs_.push_back(nn::Conv2d::make(ps_, "stem", in, b, 1, rng));
    convs_.push_back(nn::Conv2d::make(ps_, "down1", b, 2 * b, 2, rng));
    convs_.push_back(nn::Conv2d::make(ps_, "down2", 2 * b, 4 * b, 2, rng));
    for (int i = 0; i < 3; ++i) {
        convs_.push_back(nn::Conv2d::make(ps_, "res" + std::to_string(i) + "a", 4 * b, 4 * b, 1, rng));
        convs_.push_back(nn::Conv2d::make(ps_, "res" + std::to_string(i) + "b", 4 * b, 4 * b, 1, rng));
    }
    convs_.push_back(nn::Conv2d::make(ps_, "up1", 4 * b, 2 * b, 1, rng));
    convs_.push_back(nn::Conv2d::make(ps_, "up2", 2 * b, b, 1, rng));
    convs_.push_back(nn::Conv2d::make(ps_, "out", b, 3, 1, rng));

    const int s = cfg.image_size;
    taps_ = {
        {"f-2", 1, {s / 2, s / 2, 2 * b}},
        {"f-1", 2, {s / 4, s / 4, 4 * b}},
        {"f0", 3, {s / 4, s / 4, 4 * b}},
        {"f1", 4, {s / 2, s / 2, 2 * b}},
        {"f2", 5, {s, s, b}},
    };
}

const TapInfo& Generator::tap(const std::string& name) const {
    for (const auto& t : taps_)
        if (t.name == name) return t;
    throw std::invalid_argument("unknown tap point: " + name);
}

Var Generator::run_stages(Var h, int first, int last) const {
    for (int stage = first; stage <= last; ++stage) {
        switch (stage) {
            case 0:
                h = leaky_relu(convs_[0](h));
                break;
            case 1:
                h = leaky_relu(convs_[1](h));
                break;
            case 2:
                h = leaky_relu(convs_[2](h));
                break;
            case 3:
                for (int blk = 0; blk < 3; ++blk) {
                    Var inner = convs_[4 + 2 * blk](leaky_relu(convs_[3 + 2 * blk](h)));
                    h = add(h, inner);
                }
                break;
            case 4:
                h = leaky_relu(convs_[9](upsample2x(h)));
                break;
            case 5:
                h = leaky_relu(convs_[10](upsample2x(h)));
                break;
            case 6:
                h = sigmoid(convs_[11](h));
                break;
            default:
                throw std::logic_error("bad stage index");
        }
    }
    return h;
}

Var Generator::encode_var(const Var& x, const Var& attrs, const std::string& tap_name) const {
    const TapInfo& t = tap(tap_name);
    Var h = nn::concat_broadcast(x, attrs);
    return run_stages(h, 0, t.stage_index);
}

Var Generator::decode_var(const Var& feature, const std::string& tap_name) const {
    const TapInfo& t = tap(tap_name);
    const Tensor& v = feature.value();
    if (v.rank() != 4 || v.dim(1) != t.shape[0] || v.dim(2) != t.shape[1] ||
        v.dim(3) != t.shape[2])
        throw std::invalid_argument("decode: feature shape " + v.shape_str() +
                                    " does not match tap " + t.name);
    return run_stages(feature, t.stage_index + 1, 6);
}

Var Generator::forward_var(const Var& x, const Var& attrs) const {
    return decode_var(encode_var(x, attrs, "f0"), "f0");
}

Var Generator::attrs_to_var(const AttributeVector& attrs) {
    Tensor t({static_cast<int>(attrs.values.size())});
    for (size_t i = 0; i < attrs.values.size(); ++i) t[i] = attrs.values[i];
    return Var::constant(std::move(t));
}

namespace {
Tensor to_batch1(const Tensor& image) {
    if (image.rank() != 3) throw std::invalid_argument("expected {H,W,C} image");
    Tensor out({1, image.dim(0), image.dim(1), image.dim(2)});
    std::copy(image.data(), image.data() + image.size(), out.data());
    return out;
}
Tensor from_batch1(const Tensor& batch) {
    Tensor out({batch.dim(1), batch.dim(2), batch.dim(3)});
    std::copy(batch.data(), batch.data() + batch.size(), out.data());
    return out;
}
}  // namespace

FeatureMap Generator::encode(const Tensor& image, const AttributeVector& attrs,
                             const std::string& tap_name) const {
    Var x = Var::constant(to_batch1(image));
    Var f = encode_var(x, attrs_to_var(attrs), tap_name);
    return FeatureMap{from_batch1(f.value()), tap_name};
}

Tensor Generator::decode(const FeatureMap& feature) const {
    Var f = Var::constant(to_batch1(feature.tensor));
    return from_batch1(decode_var(f, feature.layer_name).value());
}

Tensor Generator::forward(const Tensor& image, const AttributeVector& attrs) const {
    return decode(encode(image, attrs, "f0"));
}

Tensor Generator::invert_reconstruction(const Tensor& image, const AttributeVector& attrs,
                                        int steps, float rate) const {
    Tensor target = image;
    Tensor best = image;
    Var attrs_var = attrs_to_var(attrs);
    auto recon_err = [&](const Tensor& candidate) {
        Var x = Var::constant(to_batch1(candidate));
        Var y = forward_var(x, attrs_var);
        double s = 0.0;
        const Tensor& v = y.value();
        for (size_t i = 0; i < v.size(); ++i) {
            double d = static_cast<double>(v[i]) - target[i];
            s += d * d;
        }
        return s;
    };
    double best_err = recon_err(image);

    Tensor cur = image;
    nn::Adam opt(rate);
    Var tgt = Var::constant(to_batch1(target));
    for (int it = 0; it < steps; ++it) {
        Var x = Var::leaf(to_batch1(cur));
        Var loss = nn::l2sq_diff(forward_var(x, attrs_var), tgt);
        loss.backward();
        opt.step(x.mutable_value(), x.grad());
        cur = from_batch1(x.value());
        cur.clamp(0.0f, 1.0f);
        double err = recon_err(cur);
        if (err < best_err) {
            best_err = err;
            best = cur;
        }
    }
    return best;
}

void Generator::save(const std::string& path) const {
    nlohmann::json meta;
    meta["image_size"] = cfg_.image_size;
    meta["n_attributes"] = cfg_.n_attributes;
    meta["base_channels"] = cfg_.base_channels;
    meta["seed"] = cfg_.seed;
    nlohmann::json reg = nlohmann::json::array();
    for (const auto& t : taps_)
        reg.push_back({{"name", t.name}, {"stage", t.stage_index}, {"shape", t.shape}});
    meta["registry"] = reg;
    nn::save_checkpoint_file(path, "generator", meta.dump(), ps_.snapshot());
}

Generator Generator::load(const std::string& path) {
    nn::Checkpoint cp = nn::load_checkpoint_file(path);
    if (cp.kind != "generator")
        throw std::runtime_error("checkpoint kind mismatch: " + cp.kind);
    auto meta = nlohmann::json::parse(cp.meta_json);
    GeneratorConfig cfg;
    cfg.image_size = meta.at("image_size").get<int>();
    cfg.n_attributes = meta.at("n_attributes").get<int>();
    cfg.base_channels = meta.at("base_channels").get<int>();
    cfg.seed = meta.at("seed").get<uint64_t>();
    Generator g(cfg);
    g.ps_.restore(cp.tensors);
    return g;
}

// ---------------------------------------------------------------- training

namespace {

struct EditSample {
    int id;
    uint32_t src_bits;
    uint32_t cond_bits;
};

EditSample draw_sample(const std::vector<int>& ids, Rng& rng) {
    EditSample s;
    s.id = ids[rng.uniform_int(0, static_cast<int>(ids.size()) - 1)];
    s.src_bits = static_cast<uint32_t>(rng.next_u64() & 0xffu);
    const double mode = rng.uniform();
    if (mode < 0.25) {
        s.cond_bits = s.src_bits;
    } else if (mode < 0.70) {
        s.cond_bits = s.src_bits ^ (1u << rng.uniform_int(0, synth::kNumAttributes - 1));
    } else {
        s.cond_bits = static_cast<uint32_t>(rng.next_u64() & 0xffu);
    }
    return s;
}

// One worker's forward+backward over its shard; returns grads by name.
std::map<std::string, Tensor> shard_grads(const GeneratorConfig& cfg,
                                          const std::map<std::string, Tensor>& values,
                                          const std::vector<EditSample>& shard,
                                          double& loss_out) {
    Generator worker(cfg);
    worker.params().restore(values);

    const int b = static_cast<int>(shard.size());
    const int s = cfg.image_size;
    Tensor xs({b, s, s, 3}), ys({b, s, s, 3});
    Tensor conds({b, cfg.n_attributes});
    for (int i = 0; i < b; ++i) {
        auto ident = synth::Identity::from_id(shard[i].id);
        Tensor x = synth::render(ident, synth::attributes_from_bits(shard[i].src_bits));
        Tensor y = synth::render(ident, synth::attributes_from_bits(shard[i].cond_bits));
        std::copy(x.data(), x.data() + x.size(), xs.data() + static_cast<size_t>(i) * x.size());
        std::copy(y.data(), y.data() + y.size(), ys.data() + static_cast<size_t>(i) * y.size());
        auto cond = synth::attributes_from_bits(shard[i].cond_bits);
        for (int a = 0; a < cfg.n_attributes; ++a)
            conds[static_cast<size_t>(i) * cfg.n_attributes + a] = cond.values[a];
    }

    Var out = worker.forward_var(Var::constant(std::move(xs)), Var::constant(std::move(conds)));
    Var loss = nn::l1_diff(out, Var::constant(std::move(ys)));
    worker.params().zero_grads();
    loss.backward();
    loss_out = loss.value()[0];

    std::map<std::string, Tensor> grads;
    for (const auto& [name, v] : worker.params().all()) grads.emplace(name, v.grad());
    return grads;
}

}  // namespace

Generator train_generator(const synth::Manifest& manifest, const GeneratorConfig& cfg,
                          const GeneratorTrainConfig& tcfg) {
    Generator model(cfg);
    nn::Adam opt(tcfg.rate);
    Rng rng(tcfg.seed ^ 0x7261696eull);
    std::vector<double> trace;

    const int threads = std::max(1, tcfg.threads);
    for (int step = 0; step < tcfg.steps; ++step) {
        std::vector<EditSample> batch(tcfg.batch);
        for (auto& s : batch) s = draw_sample(manifest.train_ids, rng);

        auto values = model.params().snapshot();
        std::vector<std::map<std::string, Tensor>> grads(threads);
        std::vector<double> losses(threads, 0.0);
        {
            std::vector<std::thread> pool;
            const int per = (tcfg.batch + threads - 1) / threads;
            for (int w = 0; w < threads; ++w) {
                const int lo = w * per, hi = std::min(tcfg.batch, (w + 1) * per);
                if (lo >= hi) break;
                pool.emplace_back([&, w, lo, hi]() {
                    std::vector<EditSample> shard(batch.begin() + lo, batch.begin() + hi);
                    grads[w] = shard_grads(cfg, values, shard, losses[w]);
                });
            }
            for (auto& t : pool) t.join();
        }

        // Merge worker grads (weighted by shard size) into the master.
        model.params().zero_grads();
        double loss = 0.0;
        const int per = (tcfg.batch + threads - 1) / threads;
        for (int w = 0; w < threads; ++w) {
            const int lo = w * per, hi = std::min(tcfg.batch, (w + 1) * per);
            if (lo >= hi) break;
            const float weight = static_cast<float>(hi - lo) / tcfg.batch;
            loss += losses[w] * weight;
            for (auto& [name, g] : grads[w]) {
                if (g.empty()) continue;
                Var& p = model.params().at(name);
                Tensor& dst = p.mutable_grad();
                if (dst.empty()) dst = Tensor(g.shape());
                for (size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * weight;
            }
        }
        opt.step(model.params());
        trace.push_back(loss);

        if ((step + 1) % tcfg.eval_every == 0 || step + 1 == tcfg.steps) {
            auto fid = measure_edit_fidelity(model, manifest.dev_ids, 4,
                                             tcfg.seed ^ 0xe7a1ull);
            if (fid.recon_l1 < tcfg.target_l1) return model;
        }
    }

    auto fid = measure_edit_fidelity(model, manifest.dev_ids, 4, tcfg.seed ^ 0xe7a1ull);
    if (fid.recon_l1 >= tcfg.target_l1)
        throw TrainingError("generator did not reach reconstruction target (L1=" +
                                std::to_string(fid.recon_l1) + ")",
                            trace);
    return model;
}

EditFidelity measure_edit_fidelity(const Generator& g, const std::vector<int>& ids,
                                   int samples_per_id, uint64_t seed) {
    Rng rng(seed);
    double recon = 0.0, edit = 0.0;
    int n = 0;
    for (int id : ids) {
        for (int k = 0; k < samples_per_id; ++k) {
            auto ident = synth::Identity::from_id(id);
            uint32_t bits = static_cast<uint32_t>(rng.next_u64() & 0xffu);
            auto attrs = synth::attributes_from_bits(bits);
            Tensor x = synth::render(ident, attrs);

            Tensor rec = g.forward(x, attrs);
            double dr = 0.0;
            for (size_t i = 0; i < x.size(); ++i) dr += std::fabs(rec[i] - x[i]);
            recon += dr / static_cast<double>(x.size());

            const auto& names = synth::attribute_names();
            auto flipped = attrs.flipped(names[rng.uniform_int(0, synth::kNumAttributes - 1)]);
            Tensor want = synth::render(ident, flipped);
            Tensor got = g.forward(x, flipped);
            double de = 0.0;
            for (size_t i = 0; i < x.size(); ++i) de += std::fabs(got[i] - want[i]);
            edit += de / static_cast<double>(x.size());
            ++n;
        }
    }
    return EditFidelity{recon / n, edit / n};
}

}  // namespace semadv::gen
