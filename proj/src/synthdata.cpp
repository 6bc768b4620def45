#include "semadv/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace semadv::synth {

using nlohmann::json;

namespace {

const std::vector<std::string> kNames = {"marker", "badge",      "stripe",  "cross",
                                         "dots",   "hue_shift", "dim_light", "weave"};

// Local glyph regions; pairwise disjoint 6x6 blocks.
struct Region {
    int y0, x0;
};
constexpr Region kRegions[5] = {{2, 2}, {2, 24}, {24, 2}, {24, 24}, {2, 13}};

int attribute_index(const std::string& name) {
    for (size_t i = 0; i < kNames.size(); ++i)
        if (kNames[i] == name) return static_cast<int>(i);
    throw std::invalid_argument("unknown attribute: " + name);
}

void check_schema(const AttributeVector& attrs) {
    if (attrs.values.size() != static_cast<size_t>(kNumAttributes) ||
        attrs.names.size() != attrs.values.size())
        throw std::invalid_argument("attribute vector must have " +
                                    std::to_string(kNumAttributes) + " named entries");
    for (size_t i = 0; i < attrs.names.size(); ++i)
        if (attrs.names[i] != kNames[i])
            throw std::invalid_argument("unknown attribute: " + attrs.names[i]);
}

}  // namespace

bool AttributeVector::is_binary() const {
    for (float v : values)
        if (v != 0.0f && v != 1.0f) return false;
    return true;
}

float AttributeVector::get(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return values[i];
    throw std::invalid_argument("unknown attribute: " + name);
}

AttributeVector AttributeVector::with_set(const std::string& name, float v) const {
    AttributeVector out = *this;
    for (size_t i = 0; i < out.names.size(); ++i)
        if (out.names[i] == name) {
            out.values[i] = v;
            return out;
        }
    throw std::invalid_argument("unknown attribute: " + name);
}

AttributeVector AttributeVector::flipped(const std::string& name) const {
    float cur = get(name);
    return with_set(name, cur == 0.0f ? 1.0f : 0.0f);
}

uint32_t AttributeVector::bits() const {
    if (!is_binary()) throw std::invalid_argument("attrs not binary");
    uint32_t b = 0;
    for (size_t i = 0; i < values.size(); ++i)
        if (values[i] == 1.0f) b |= 1u << i;
    return b;
}

const std::vector<std::string>& attribute_names() { return kNames; }

bool attribute_is_global(const std::string& name) { return attribute_index(name) >= 5; }

AttributeVector attributes_from_bits(uint32_t bits) {
    AttributeVector a;
    a.names = kNames;
    a.values.resize(kNames.size());
    for (size_t i = 0; i < kNames.size(); ++i) a.values[i] = (bits >> i) & 1u ? 1.0f : 0.0f;
    return a;
}

AttributeVector zero_attributes() { return attributes_from_bits(0); }

Identity Identity::from_id(int id) {
    Identity ident;
    ident.id = id;
    uint64_t s = 0x5eed0000ull + static_cast<uint64_t>(id) * 0x9e3779b97f4a7c15ull;
    ident.geometry_seed = s;
    Rng rng(s);
    for (int k = 0; k < kNumKeypoints; ++k) {
        ident.vertex_radius[k] = static_cast<float>(rng.uniform(8.0, 12.5));
        ident.vertex_angle[k] =
            static_cast<float>((k + rng.uniform(-0.22, 0.22)) * 2.0 * M_PI / kNumKeypoints);
    }
    auto channel = [&rng]() { return static_cast<float>(rng.uniform(0.25, 0.95)); };
    ident.base_color = {channel(), channel(), channel()};
    ident.background = {static_cast<float>(rng.uniform(0.05, 0.20)),
                        static_cast<float>(rng.uniform(0.05, 0.20)),
                        static_cast<float>(rng.uniform(0.05, 0.20))};
    return ident;
}

Tensor keypoints(const Identity& ident) {
    Tensor pts({kNumKeypoints, 2});
    const float cx = kImageSize / 2.0f, cy = kImageSize / 2.0f;
    for (int k = 0; k < kNumKeypoints; ++k) {
        pts[k * 2 + 0] = cx + ident.vertex_radius[k] * std::cos(ident.vertex_angle[k]);
        pts[k * 2 + 1] = cy + ident.vertex_radius[k] * std::sin(ident.vertex_angle[k]);
    }
    return pts;
}

Box keypoint_box(const Identity& ident) {
    Tensor pts = keypoints(ident);
    Box b{pts[0], pts[1], pts[0], pts[1]};
    for (int k = 1; k < kNumKeypoints; ++k) {
        b.x0 = std::min(b.x0, pts[k * 2 + 0]);
        b.x1 = std::max(b.x1, pts[k * 2 + 0]);
        b.y0 = std::min(b.y0, pts[k * 2 + 1]);
        b.y1 = std::max(b.y1, pts[k * 2 + 1]);
    }
    return b;
}

namespace {

// Signed coverage of a pixel against the star-shaped polygon: smooth
// falloff over ~1px around the radial boundary.
float polygon_coverage(const Identity& ident, float px, float py) {
    const float cx = kImageSize / 2.0f, cy = kImageSize / 2.0f;
    const float dx = px - cx, dy = py - cy;
    const float r = std::sqrt(dx * dx + dy * dy);
    if (r < 1e-6f) return 1.0f;
    float ang = std::atan2(dy, dx);
    // Radius of the polygon boundary along this direction: interpolate
    // between the two adjacent vertices by angle.
    float best = 0.0f;
    for (int k = 0; k < kNumKeypoints; ++k) {
        int j = (k + 1) % kNumKeypoints;
        float a0 = ident.vertex_angle[k], a1 = ident.vertex_angle[j];
        float span = a1 - a0;
        while (span <= 0.0f) span += 2.0f * static_cast<float>(M_PI);
        float rel = ang - a0;
        while (rel < 0.0f) rel += 2.0f * static_cast<float>(M_PI);
        if (rel <= span) {
            float t = rel / span;
            best = ident.vertex_radius[k] * (1.0f - t) + ident.vertex_radius[j] * t;
            break;
        }
    }
    float d = best - r;  // >0 inside
    return std::clamp(d + 0.5f, 0.0f, 1.0f);
}

void paint_glyph(Tensor& img, int which) {
    const Region reg = kRegions[which];
    auto set = [&img](int y, int x, float r, float g, float b) {
        img.at(y, x, 0) = r;
        img.at(y, x, 1) = g;
        img.at(y, x, 2) = b;
    };
    switch (which) {
        case 0:  // marker: filled dot
            for (int y = 1; y < 5; ++y)
                for (int x = 1; x < 5; ++x) {
                    float dy = y - 2.5f, dx = x - 2.5f;
                    if (dy * dy + dx * dx <= 4.0f)
                        set(reg.y0 + y, reg.x0 + x, 0.95f, 0.85f, 0.15f);
                }
            break;
        case 1:  // badge: square outline
            for (int i = 0; i < 6; ++i) {
                set(reg.y0, reg.x0 + i, 0.15f, 0.85f, 0.9f);
                set(reg.y0 + 5, reg.x0 + i, 0.15f, 0.85f, 0.9f);
                set(reg.y0 + i, reg.x0, 0.15f, 0.85f, 0.9f);
                set(reg.y0 + i, reg.x0 + 5, 0.15f, 0.85f, 0.9f);
            }
            break;
        case 2:  // stripe: horizontal bar
            for (int y = 2; y < 4; ++y)
                for (int x = 0; x < 6; ++x) set(reg.y0 + y, reg.x0 + x, 0.92f, 0.2f, 0.55f);
            break;
        case 3:  // cross
            for (int i = 0; i < 6; ++i) {
                set(reg.y0 + i, reg.x0 + 2, 0.2f, 0.95f, 0.3f);
                set(reg.y0 + i, reg.x0 + 3, 0.2f, 0.95f, 0.3f);
                set(reg.y0 + 2, reg.x0 + i, 0.2f, 0.95f, 0.3f);
                set(reg.y0 + 3, reg.x0 + i, 0.2f, 0.95f, 0.3f);
            }
            break;
        case 4:  // dots: two small squares
            for (int y = 1; y < 3; ++y)
                for (int x = 0; x < 2; ++x) {
                    set(reg.y0 + y, reg.x0 + x, 0.95f, 0.95f, 0.95f);
                    set(reg.y0 + y, reg.x0 + x + 4, 0.95f, 0.95f, 0.95f);
                }
            break;
        default:
            break;
    }
}

}  // namespace

std::vector<uint8_t> attribute_mask(const std::string& name) {
    std::vector<uint8_t> mask(static_cast<size_t>(kImageSize) * kImageSize, 0);
    int idx = attribute_index(name);
    if (idx >= 5) return mask;  // global attributes own no local mask
    const Region reg = kRegions[idx];
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
            mask[static_cast<size_t>(reg.y0 + y) * kImageSize + (reg.x0 + x)] = 1;
    return mask;
}

Tensor render(const Identity& ident, const AttributeVector& attrs) {
    check_schema(attrs);
    if (!attrs.is_binary())
        throw std::invalid_argument("render requires binary attribute values");

    Tensor img({kImageSize, kImageSize, kImageChannels});
    const bool hue = attrs.values[5] == 1.0f;
    const bool dim = attrs.values[6] == 1.0f;
    const bool weave = attrs.values[7] == 1.0f;

    for (int y = 0; y < kImageSize; ++y) {
        for (int x = 0; x < kImageSize; ++x) {
            const float cov = polygon_coverage(ident, x + 0.5f, y + 0.5f);
            float rgb[3];
            for (int c = 0; c < 3; ++c)
                rgb[c] = ident.background[c] + cov * (ident.base_color[c] - ident.background[c]);
            if (weave) {
                const float m = ((x + y) % 6 < 3) ? 1.10f : 0.90f;
                for (float& v : rgb) v *= m;
            }
            if (hue) {
                const float r = rgb[0], g = rgb[1], b = rgb[2];
                rgb[0] = 0.2f * r + 0.8f * g;
                rgb[1] = 0.2f * g + 0.8f * b;
                rgb[2] = 0.2f * b + 0.8f * r;
            }
            if (dim)
                for (float& v : rgb) v = 0.65f * v + 0.05f;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(rgb[c], 0.0f, 1.0f);
        }
    }
    for (int k = 0; k < 5; ++k)
        if (attrs.values[k] == 1.0f) paint_glyph(img, k);
    return img;
}

// ------------------------------------------------------------------- splits

namespace {
json pair_list_json(const std::vector<PairRef>& pairs) {
    json arr = json::array();
    for (const auto& p : pairs) arr.push_back({p.id_a, p.attrs_a, p.id_b, p.attrs_b});
    return arr;
}
std::vector<PairRef> pair_list_from_json(const json& arr) {
    std::vector<PairRef> out;
    out.reserve(arr.size());
    for (const auto& e : arr)
        out.push_back({e.at(0).get<int>(), e.at(1).get<uint32_t>(), e.at(2).get<int>(),
                       e.at(3).get<uint32_t>()});
    return out;
}
}  // namespace

std::string Manifest::to_json() const {
    json j;
    j["schema"] = "semadv-manifest-v1";
    j["n_ids"] = n_ids;
    j["seed"] = seed;
    j["image_size"] = image_size;
    j["n_attributes"] = n_attributes;
    j["attribute_names"] = kNames;
    j["train_ids"] = train_ids;
    j["dev_ids"] = dev_ids;
    j["test_ids"] = test_ids;
    j["dev_genuine"] = pair_list_json(dev_genuine);
    j["dev_impostor"] = pair_list_json(dev_impostor);
    j["test_genuine"] = pair_list_json(test_genuine);
    j["test_impostor"] = pair_list_json(test_impostor);
    return j.dump();
}

Manifest Manifest::from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.value("schema", "") != "semadv-manifest-v1")
        throw std::runtime_error("manifest: unknown schema");
    Manifest m;
    m.n_ids = j.at("n_ids").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    m.image_size = j.at("image_size").get<int>();
    m.n_attributes = j.at("n_attributes").get<int>();
    m.train_ids = j.at("train_ids").get<std::vector<int>>();
    m.dev_ids = j.at("dev_ids").get<std::vector<int>>();
    m.test_ids = j.at("test_ids").get<std::vector<int>>();
    m.dev_genuine = pair_list_from_json(j.at("dev_genuine"));
    m.dev_impostor = pair_list_from_json(j.at("dev_impostor"));
    m.test_genuine = pair_list_from_json(j.at("test_genuine"));
    m.test_impostor = pair_list_from_json(j.at("test_impostor"));
    return m;
}

void Manifest::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest: " + path);
    os << to_json();
}

Manifest Manifest::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read manifest: " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return Manifest::from_json(text);
}

namespace {
uint32_t random_bits(Rng& rng) { return static_cast<uint32_t>(rng.next_u64() & 0xffu); }

void draw_pairs(const std::vector<int>& ids, Rng& rng, int genuine_n, int impostor_n,
                std::vector<PairRef>& genuine, std::vector<PairRef>& impostor) {
    genuine.reserve(genuine_n);
    for (int i = 0; i < genuine_n; ++i) {
        int id = ids[rng.uniform_int(0, static_cast<int>(ids.size()) - 1)];
        uint32_t a = random_bits(rng);
        uint32_t b = random_bits(rng);
        while (b == a) b = random_bits(rng);
        genuine.push_back({id, a, id, b});
    }
    impostor.reserve(impostor_n);
    for (int i = 0; i < impostor_n; ++i) {
        int ia = rng.uniform_int(0, static_cast<int>(ids.size()) - 1);
        int ib = rng.uniform_int(0, static_cast<int>(ids.size()) - 1);
        while (ib == ia) ib = rng.uniform_int(0, static_cast<int>(ids.size()) - 1);
        impostor.push_back({ids[ia], random_bits(rng), ids[ib], random_bits(rng)});
    }
}
}  // namespace

Manifest make_splits(int n_ids, uint64_t seed, const SplitOptions& opts) {
    if (n_ids < 10)
        throw std::invalid_argument("make_splits: need at least 10 identities");
    Manifest m;
    m.n_ids = n_ids;
    m.seed = seed;

    std::vector<int> ids(n_ids);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(seed ^ 0x5eedf00dull);
    for (int i = n_ids - 1; i > 0; --i) std::swap(ids[i], ids[rng.uniform_int(0, i)]);

    const int dev_n = std::max(2, n_ids / 5);
    const int test_n = std::max(2, n_ids / 5);
    m.dev_ids.assign(ids.begin(), ids.begin() + dev_n);
    m.test_ids.assign(ids.begin() + dev_n, ids.begin() + dev_n + test_n);
    m.train_ids.assign(ids.begin() + dev_n + test_n, ids.end());
    std::sort(m.dev_ids.begin(), m.dev_ids.end());
    std::sort(m.test_ids.begin(), m.test_ids.end());
    std::sort(m.train_ids.begin(), m.train_ids.end());

    Rng dev_rng = rng.fork(1);
    draw_pairs(m.dev_ids, dev_rng, opts.genuine_pairs, opts.impostor_pairs, m.dev_genuine,
               m.dev_impostor);
    Rng test_rng = rng.fork(2);
    draw_pairs(m.test_ids, test_rng, opts.genuine_pairs, opts.impostor_pairs, m.test_genuine,
               m.test_impostor);
    return m;
}

}  // namespace semadv::synth
