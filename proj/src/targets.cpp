#include "semadv/targets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "semadv/evaluation.hpp"
#include "semadv/generator.hpp"

namespace semadv::targets {

using nn::Var;
using nlohmann::json;

std::string to_string(LossKind k) { return k == LossKind::kSoftmax ? "softmax" : "cosine"; }
std::string to_string(DepthKind k) { return k == DepthKind::kSmall ? "small" : "large"; }

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "softmax") return LossKind::kSoftmax;
    if (s == "cosine") return LossKind::kCosine;
    throw std::invalid_argument("unknown loss kind: " + s);
}

DepthKind depth_kind_from_string(const std::string& s) {
    if (s == "small") return DepthKind::kSmall;
    if (s == "large") return DepthKind::kLarge;
    throw std::invalid_argument("unknown depth kind: " + s);
}

const std::vector<std::pair<std::string, double>>& fpr_grid() {
    static const std::vector<std::pair<std::string, double>> grid = {
        {"1e-2", 1e-2}, {"3e-3", 3e-3}, {"1e-3", 1e-3}};
    return grid;
}

double fpr_value(const std::string& level) {
    for (const auto& [name, v] : fpr_grid())
        if (name == level) return v;
    throw std::invalid_argument("unknown FPR level: " + level);
}

// ------------------------------------------------------------------ verifier

Verifier::Verifier(const VerifierConfig& cfg) : cfg_(cfg) {
    if (cfg.n_classes <= 0)
        throw std::invalid_argument("VerifierConfig.n_classes must be set");
    Rng rng(cfg.seed ^ 0x76657269ull);
    const int b = cfg.base_channels;
    // Small: 4 conv blocks; large: 8 (stride-1 blocks interleaved).
    blocks_.push_back(nn::Conv2d::make(ps_, "c0", 3, b, 2, rng));
    if (cfg.depth_kind == DepthKind::kLarge)
        blocks_.push_back(nn::Conv2d::make(ps_, "c0b", b, b, 1, rng));
    blocks_.push_back(nn::Conv2d::make(ps_, "c1", b, 2 * b, 2, rng));
    if (cfg.depth_kind == DepthKind::kLarge)
        blocks_.push_back(nn::Conv2d::make(ps_, "c1b", 2 * b, 2 * b, 1, rng));
    blocks_.push_back(nn::Conv2d::make(ps_, "c2", 2 * b, 4 * b, 2, rng));
    if (cfg.depth_kind == DepthKind::kLarge)
        blocks_.push_back(nn::Conv2d::make(ps_, "c2b", 4 * b, 4 * b, 1, rng));
    blocks_.push_back(nn::Conv2d::make(ps_, "c3", 4 * b, 4 * b, 1, rng));
    if (cfg.depth_kind == DepthKind::kLarge)
        blocks_.push_back(nn::Conv2d::make(ps_, "c3b", 4 * b, 4 * b, 1, rng));
    embed_head_ = nn::Linear::make(ps_, "embed", 4 * b, cfg.embed_dim, rng);
    class_head_ = nn::Linear::make(ps_, "class", cfg.embed_dim, cfg.n_classes, rng);
}

std::string Verifier::model_name() const {
    return std::string("R-") + (cfg_.depth_kind == DepthKind::kSmall ? "S" : "L") + "-" +
           (cfg_.loss_kind == LossKind::kSoftmax ? "S" : "C") + "-s" +
           std::to_string(cfg_.seed);
}

Var Verifier::embed_var(const Var& images) const {
    Var h = images;
    for (const auto& blk : blocks_) h = leaky_relu(blk(h));
    h = nn::global_avg_pool(h);
    return embed_head_(h);
}

Tensor Verifier::embed(const Tensor& image) const {
    Tensor batch({1, image.dim(0), image.dim(1), image.dim(2)});
    std::copy(image.data(), image.data() + image.size(), batch.data());
    Tensor rows = embed_batch(batch);
    Tensor out({cfg_.embed_dim});
    std::copy(rows.data(), rows.data() + rows.size(), out.data());
    return out;
}

Tensor Verifier::embed_batch(const Tensor& images) const {
    Var e = nn::l2_normalize_rows(embed_var(Var::constant(images)));
    return e.value();
}

double Verifier::distance(const Tensor& e1, const Tensor& e2) {
    if (!e1.same_shape(e2)) throw std::invalid_argument("distance: embedding shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < e1.size(); ++i) {
        const double d = static_cast<double>(e1[i]) - e2[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double Verifier::image_distance(const Tensor& x1, const Tensor& x2) const {
    return distance(embed(x1), embed(x2));
}

Var Verifier::class_logits_var(const Var& images, const std::vector<int>& labels) const {
    Var e = embed_var(images);
    if (cfg_.loss_kind == LossKind::kSoftmax) {
        (void)labels;
        return class_head_(e);
    }
    // Cosine-margin head: scaled cosine between normalized embeddings and
    // normalized class prototypes, margin on the true class.
    constexpr float kScale = 16.0f;
    constexpr float kMargin = 0.2f;
    const int k = class_head_.w.value().dim(1);
    Var en = nn::l2_normalize_rows(e);
    Var protos = nn::l2_normalize_rows(nn::transpose2d(class_head_.w));  // {K,D}
    Var zero_bias = Var::constant(Tensor({k}));
    Var cos = nn::linear(en, nn::transpose2d(protos), zero_bias);
    Tensor margin({static_cast<int>(labels.size()), k});
    for (size_t r = 0; r < labels.size(); ++r) margin[r * k + labels[r]] = -kMargin;
    return scale(add(cos, Var::constant(std::move(margin))), kScale);
}

void Verifier::save(const std::string& path) const {
    json meta;
    meta["loss_kind"] = to_string(cfg_.loss_kind);
    meta["depth_kind"] = to_string(cfg_.depth_kind);
    meta["embed_dim"] = cfg_.embed_dim;
    meta["base_channels"] = cfg_.base_channels;
    meta["n_classes"] = cfg_.n_classes;
    meta["seed"] = cfg_.seed;
    nn::save_checkpoint_file(path, "verifier", meta.dump(), ps_.snapshot());
}

Verifier Verifier::load(const std::string& path) {
    nn::Checkpoint cp = nn::load_checkpoint_file(path);
    if (cp.kind != "verifier") throw std::runtime_error("checkpoint kind mismatch: " + cp.kind);
    json meta = json::parse(cp.meta_json);
    VerifierConfig cfg;
    cfg.loss_kind = loss_kind_from_string(meta.at("loss_kind").get<std::string>());
    cfg.depth_kind = depth_kind_from_string(meta.at("depth_kind").get<std::string>());
    cfg.embed_dim = meta.at("embed_dim").get<int>();
    cfg.base_channels = meta.at("base_channels").get<int>();
    cfg.n_classes = meta.at("n_classes").get<int>();
    cfg.seed = meta.at("seed").get<uint64_t>();
    Verifier v(cfg);
    v.ps_.restore(cp.tensors);
    return v;
}

// ------------------------------------------------------------- calibration

namespace {

/// Embedding cache over (id, attribute-bits) render keys.
class EmbedCache {
public:
    explicit EmbedCache(const Verifier& model) : model_(model) {}

    const Tensor& get(int id, uint32_t bits) {
        const uint64_t key = (static_cast<uint64_t>(id) << 32) | bits;
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        Tensor img = synth::render(synth::Identity::from_id(id), synth::attributes_from_bits(bits));
        return cache_.emplace(key, model_.embed(img)).first->second;
    }

private:
    const Verifier& model_;
    std::map<uint64_t, Tensor> cache_;
};

std::vector<double> pair_distances(const Verifier& model,
                                   const std::vector<synth::PairRef>& pairs, int limit = -1) {
    EmbedCache cache(model);
    const size_t n = limit < 0 ? pairs.size() : std::min<size_t>(limit, pairs.size());
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i)
        out[i] = Verifier::distance(cache.get(pairs[i].id_a, pairs[i].attrs_a),
                                    cache.get(pairs[i].id_b, pairs[i].attrs_b));
    return out;
}

}  // namespace

double ThresholdTable::at(const std::string& level) const {
    auto it = kappa.find(level);
    if (it == kappa.end()) throw std::out_of_range("no threshold for FPR level " + level);
    return it->second;
}

std::string ThresholdTable::to_json() const {
    json j;
    j["schema"] = "semadv-thresholds-v1";
    json k = json::object();
    for (const auto& [level, v] : kappa) k[level] = v;
    j["kappa"] = k;
    return j.dump();
}

ThresholdTable ThresholdTable::from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.value("schema", "") != "semadv-thresholds-v1")
        throw std::runtime_error("thresholds: unknown schema");
    ThresholdTable t;
    for (auto& [level, v] : j.at("kappa").items()) t.kappa[level] = v.get<double>();
    return t;
}

void ThresholdTable::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write thresholds: " + path);
    os << to_json();
}

ThresholdTable ThresholdTable::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read thresholds: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json(text);
}

ThresholdTable calibrate_thresholds(const Verifier& model,
                                    const std::vector<synth::PairRef>& impostor_pairs) {
    if (impostor_pairs.size() < 1000)
        throw std::invalid_argument("calibrate_thresholds: need at least 1000 impostor pairs");
    std::vector<double> d = pair_distances(model, impostor_pairs);
    std::sort(d.begin(), d.end());
    ThresholdTable table;
    const size_t n = d.size();
    for (const auto& [level, p] : fpr_grid()) {
        size_t rank = static_cast<size_t>(std::ceil(p * static_cast<double>(n)));
        rank = std::max<size_t>(1, std::min(rank, n));
        table.kappa[level] = d[rank - 1];
    }
    // Grid order is loose -> strict; kappa must strictly decrease.
    for (size_t i = 1; i < fpr_grid().size(); ++i) {
        const double hi = table.kappa.at(fpr_grid()[i - 1].first);
        const double lo = table.kappa.at(fpr_grid()[i].first);
        if (!(lo < hi))
            throw std::runtime_error("calibrate_thresholds: degenerate impostor distances "
                                     "(thresholds not strictly ordered)");
    }
    return table;
}

VerifyResult verify(const Verifier& model, const Tensor& x1, const Tensor& x2, double kappa) {
    VerifyResult r;
    r.distance = model.image_distance(x1, x2);
    r.same = r.distance < kappa;
    return r;
}

double pair_accuracy(const Verifier& model, const std::vector<synth::PairRef>& genuine,
                     const std::vector<synth::PairRef>& impostor, double kappa,
                     int max_pairs_each) {
    std::vector<double> dg = pair_distances(model, genuine, max_pairs_each);
    std::vector<double> di = pair_distances(model, impostor, max_pairs_each);
    size_t correct = 0;
    for (double d : dg)
        if (d < kappa) ++correct;
    for (double d : di)
        if (!(d < kappa)) ++correct;
    return static_cast<double>(correct) / static_cast<double>(dg.size() + di.size());
}

double empirical_fpr(const Verifier& model, const std::vector<synth::PairRef>& impostor,
                     double kappa) {
    std::vector<double> d = pair_distances(model, impostor);
    size_t hits = 0;
    for (double v : d)
        if (v < kappa) ++hits;
    return static_cast<double>(hits) / static_cast<double>(d.size());
}

// ------------------------------------------------------------- training

namespace {

struct ClassSample {
    int id;
    uint32_t bits;
    int label;
};

std::map<std::string, Tensor> verifier_shard_grads(const VerifierConfig& cfg,
                                                   const std::map<std::string, Tensor>& values,
                                                   const std::vector<ClassSample>& shard,
                                                   double& loss_out) {
    Verifier worker(cfg);
    worker.params().restore(values);
    const int b = static_cast<int>(shard.size());
    Tensor xs({b, synth::kImageSize, synth::kImageSize, 3});
    std::vector<int> labels(b);
    for (int i = 0; i < b; ++i) {
        Tensor img = synth::render(synth::Identity::from_id(shard[i].id),
                                   synth::attributes_from_bits(shard[i].bits));
        std::copy(img.data(), img.data() + img.size(),
                  xs.data() + static_cast<size_t>(i) * img.size());
        labels[i] = shard[i].label;
    }
    Var logits = worker.class_logits_var(Var::constant(std::move(xs)), labels);
    Var loss = nn::softmax_cross_entropy(logits, labels);
    worker.params().zero_grads();
    loss.backward();
    loss_out = loss.value()[0];
    std::map<std::string, Tensor> grads;
    for (const auto& [name, v] : worker.params().all()) grads.emplace(name, v.grad());
    return grads;
}

template <typename SampleT, typename ShardFn>
void run_data_parallel_step(nn::ParamStore& master, nn::Adam& opt,
                            const std::vector<SampleT>& batch, int threads, ShardFn shard_fn,
                            double& loss_out) {
    const int total = static_cast<int>(batch.size());
    const int nthreads = std::max(1, threads);
    auto values = master.snapshot();
    std::vector<std::map<std::string, Tensor>> grads(nthreads);
    std::vector<double> losses(nthreads, 0.0);
    {
        std::vector<std::thread> pool;
        const int per = (total + nthreads - 1) / nthreads;
        for (int w = 0; w < nthreads; ++w) {
            const int lo = w * per, hi = std::min(total, (w + 1) * per);
            if (lo >= hi) break;
            pool.emplace_back([&, w, lo, hi]() {
                std::vector<SampleT> shard(batch.begin() + lo, batch.begin() + hi);
                grads[w] = shard_fn(values, shard, losses[w]);
            });
        }
        for (auto& t : pool) t.join();
    }
    master.zero_grads();
    double loss = 0.0;
    const int per = (total + nthreads - 1) / nthreads;
    for (int w = 0; w < nthreads; ++w) {
        const int lo = w * per, hi = std::min(total, (w + 1) * per);
        if (lo >= hi) break;
        const float weight = static_cast<float>(hi - lo) / total;
        loss += losses[w] * weight;
        for (auto& [name, g] : grads[w]) {
            if (g.empty()) continue;
            Tensor& dst = master.at(name).mutable_grad();
            if (dst.empty()) dst = Tensor(g.shape());
            for (size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * weight;
        }
    }
    opt.step(master);
    loss_out = loss;
}

}  // namespace

Verifier train_verifier(const synth::Manifest& manifest, LossKind loss_kind,
                        DepthKind depth_kind, uint64_t seed, const VerifierTrainConfig& tcfg) {
    VerifierConfig cfg;
    cfg.loss_kind = loss_kind;
    cfg.depth_kind = depth_kind;
    cfg.n_classes = static_cast<int>(manifest.train_ids.size());
    cfg.seed = seed;
    Verifier model(cfg);
    nn::Adam opt(tcfg.rate);
    Rng rng(seed ^ 0x76747261ull);
    std::vector<double> trace;

    for (int step = 0; step < tcfg.steps; ++step) {
        std::vector<ClassSample> batch(tcfg.batch);
        for (auto& s : batch) {
            const int label = rng.uniform_int(0, cfg.n_classes - 1);
            s.id = manifest.train_ids[label];
            s.label = label;
            s.bits = static_cast<uint32_t>(rng.next_u64() & 0xffu);
        }
        double loss = 0.0;
        run_data_parallel_step(
            model.params(), opt, batch, tcfg.threads,
            [&cfg](const std::map<std::string, Tensor>& values,
                   const std::vector<ClassSample>& shard, double& out) {
                return verifier_shard_grads(cfg, values, shard, out);
            },
            loss);
        trace.push_back(loss);
    }

    // Accuracy gate at the loosest FPR threshold.
    ThresholdTable table = calibrate_thresholds(model, manifest.dev_impostor);
    const double acc = pair_accuracy(model, manifest.dev_genuine, manifest.dev_impostor,
                                     table.at("1e-2"), tcfg.accuracy_pairs);
    if (acc < tcfg.min_dev_accuracy)
        throw gen::TrainingError("verifier accuracy gate failed: " + std::to_string(acc), trace);
    return model;
}

// ------------------------------------------------------------- landmarker

Landmarker::Landmarker(const LandmarkerConfig& cfg) : cfg_(cfg) {
    Rng rng(cfg.seed ^ 0x6c616e64ull);
    const int b = cfg.base_channels;
    blocks_.push_back(nn::Conv2d::make(ps_, "c0", 3, b, 2, rng));
    blocks_.push_back(nn::Conv2d::make(ps_, "c1", b, 2 * b, 2, rng));
    blocks_.push_back(nn::Conv2d::make(ps_, "c2", 2 * b, 2 * b, 1, rng));
    // Head reads the flattened 8x8 map.
    const int flat = (synth::kImageSize / 4) * (synth::kImageSize / 4) * 2 * b;
    head_ = nn::Linear::make(ps_, "head", flat, cfg.n_points * 2, rng);
}

Var Landmarker::predict_var(const Var& images) const {
    Var h = images;
    for (const auto& blk : blocks_) h = leaky_relu(blk(h));
    return sigmoid(head_(nn::flatten_rows(h)));
}

Tensor Landmarker::predict(const Tensor& image) const {
    Tensor batch({1, image.dim(0), image.dim(1), image.dim(2)});
    std::copy(image.data(), image.data() + image.size(), batch.data());
    Var out = predict_var(Var::constant(std::move(batch)));
    Tensor pts({cfg_.n_points, 2});
    for (int k = 0; k < cfg_.n_points * 2; ++k)
        pts[k] = out.value()[k] * static_cast<float>(synth::kImageSize);
    return pts;
}

void Landmarker::save(const std::string& path) const {
    json meta;
    meta["n_points"] = cfg_.n_points;
    meta["base_channels"] = cfg_.base_channels;
    meta["seed"] = cfg_.seed;
    nn::save_checkpoint_file(path, "landmarker", meta.dump(), ps_.snapshot());
}

Landmarker Landmarker::load(const std::string& path) {
    nn::Checkpoint cp = nn::load_checkpoint_file(path);
    if (cp.kind != "landmarker")
        throw std::runtime_error("checkpoint kind mismatch: " + cp.kind);
    json meta = json::parse(cp.meta_json);
    LandmarkerConfig cfg;
    cfg.n_points = meta.at("n_points").get<int>();
    cfg.base_channels = meta.at("base_channels").get<int>();
    cfg.seed = meta.at("seed").get<uint64_t>();
    Landmarker l(cfg);
    l.ps_.restore(cp.tensors);
    return l;
}

namespace {
struct LmSample {
    int id;
    uint32_t bits;
};

std::map<std::string, Tensor> landmark_shard_grads(const LandmarkerConfig& cfg,
                                                   const std::map<std::string, Tensor>& values,
                                                   const std::vector<LmSample>& shard,
                                                   double& loss_out) {
    Landmarker worker(cfg);
    worker.params().restore(values);
    const int b = static_cast<int>(shard.size());
    Tensor xs({b, synth::kImageSize, synth::kImageSize, 3});
    Tensor ys({b, cfg.n_points * 2});
    for (int i = 0; i < b; ++i) {
        auto ident = synth::Identity::from_id(shard[i].id);
        Tensor img = synth::render(ident, synth::attributes_from_bits(shard[i].bits));
        std::copy(img.data(), img.data() + img.size(),
                  xs.data() + static_cast<size_t>(i) * img.size());
        Tensor pts = synth::keypoints(ident);
        for (int k = 0; k < cfg.n_points * 2; ++k)
            ys[static_cast<size_t>(i) * cfg.n_points * 2 + k] =
                pts[k] / static_cast<float>(synth::kImageSize);
    }
    Var pred = worker.predict_var(Var::constant(std::move(xs)));
    Var loss = nn::l2sq_diff(pred, Var::constant(std::move(ys)));
    Var scaled = scale(loss, 1.0f / static_cast<float>(b));
    worker.params().zero_grads();
    scaled.backward();
    loss_out = scaled.value()[0];
    std::map<std::string, Tensor> grads;
    for (const auto& [name, v] : worker.params().all()) grads.emplace(name, v.grad());
    return grads;
}
}  // namespace

Landmarker train_landmarker(const synth::Manifest& manifest, uint64_t seed,
                            const LandmarkerTrainConfig& tcfg) {
    LandmarkerConfig cfg;
    cfg.seed = seed;
    Landmarker model(cfg);
    nn::Adam opt(tcfg.rate);
    Rng rng(seed ^ 0x6c6d7472ull);
    std::vector<double> trace;

    for (int step = 0; step < tcfg.steps; ++step) {
        std::vector<LmSample> batch(tcfg.batch);
        for (auto& s : batch) {
            s.id = manifest.train_ids[rng.uniform_int(
                0, static_cast<int>(manifest.train_ids.size()) - 1)];
            s.bits = static_cast<uint32_t>(rng.next_u64() & 0xffu);
        }
        double loss = 0.0;
        run_data_parallel_step(
            model.params(), opt, batch, tcfg.threads,
            [&cfg](const std::map<std::string, Tensor>& values,
                   const std::vector<LmSample>& shard, double& out) {
                return landmark_shard_grads(cfg, values, shard, out);
            },
            loss);
        trace.push_back(loss);
    }

    const double nme = clean_nme(model, manifest.dev_ids, 4, seed ^ 0xabcull);
    if (nme > tcfg.max_clean_nme)
        throw gen::TrainingError("landmarker NME gate failed: " + std::to_string(nme), trace);
    return model;
}

double clean_nme(const Landmarker& model, const std::vector<int>& ids, int samples_per_id,
                 uint64_t seed) {
    Rng rng(seed);
    double total = 0.0;
    int n = 0;
    for (int id : ids) {
        auto ident = synth::Identity::from_id(id);
        Tensor gt = synth::keypoints(ident);
        synth::Box box = synth::keypoint_box(ident);
        for (int k = 0; k < samples_per_id; ++k) {
            uint32_t bits = static_cast<uint32_t>(rng.next_u64() & 0xffu);
            Tensor img = synth::render(ident, synth::attributes_from_bits(bits));
            Tensor pred = model.predict(img);
            total += eval::nme(pred, gt, box.width(), box.height());
            ++n;
        }
    }
    return total / n;
}

}  // namespace semadv::targets
