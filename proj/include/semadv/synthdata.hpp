#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "semadv/tensor.hpp"

namespace semadv::synth {

inline constexpr int kImageSize = 32;
inline constexpr int kImageChannels = 3;
inline constexpr int kNumAttributes = 8;
inline constexpr int kNumKeypoints = 8;

/// Semantic attribute code. At rest every entry is exactly 0 or 1;
/// interpolated codes may be interior.
struct AttributeVector {
    std::vector<float> values;
    std::vector<std::string> names;

    bool is_binary() const;
    float get(const std::string& name) const;
    AttributeVector with_set(const std::string& name, float v) const;
    AttributeVector flipped(const std::string& name) const;
    /// Attribute bitmask; requires binary values.
    uint32_t bits() const;
};

/// Canonical attribute names: five masked local glyph toggles followed by
/// three global colour/pattern toggles.
const std::vector<std::string>& attribute_names();
bool attribute_is_global(const std::string& name);

AttributeVector attributes_from_bits(uint32_t bits);
AttributeVector zero_attributes();

/// Renderer parameters that do not depend on attributes. Fully derived
/// from the integer id so rendering is a pure function.
struct Identity {
    int id = 0;
    uint64_t geometry_seed = 0;
    std::array<float, 3> base_color{};
    std::array<float, 3> background{};
    std::array<float, kNumKeypoints> vertex_radius{};
    std::array<float, kNumKeypoints> vertex_angle{};

    static Identity from_id(int id);
};

/// Deterministic procedural render; {32,32,3} in [0,1]. Each local
/// attribute owns a disjoint pixel mask; global attributes re-colour the
/// whole frame. Throws std::invalid_argument for unknown attribute names
/// or non-binary values.
Tensor render(const Identity& identity, const AttributeVector& attrs);

/// Pixel mask owned by a local attribute (empty for globals). Row-major
/// {H,W} of 0/1.
std::vector<uint8_t> attribute_mask(const std::string& name);

/// Ground-truth keypoints (shape vertices), {N,2} rows of (x, y) pixels.
Tensor keypoints(const Identity& identity);

/// Inclusive pixel bounding box of the keypoints.
struct Box {
    float x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    float width() const { return x1 - x0; }
    float height() const { return y1 - y0; }
};
Box keypoint_box(const Identity& identity);

struct PairRef {
    int id_a = 0;
    uint32_t attrs_a = 0;
    int id_b = 0;
    uint32_t attrs_b = 0;
};

/// Identity partitions plus reproducible genuine/impostor pair lists.
struct Manifest {
    int n_ids = 0;
    uint64_t seed = 0;
    int image_size = kImageSize;
    int n_attributes = kNumAttributes;
    std::vector<int> train_ids, dev_ids, test_ids;
    std::vector<PairRef> dev_genuine, dev_impostor;
    std::vector<PairRef> test_genuine, test_impostor;

    std::string to_json() const;
    static Manifest from_json(const std::string& text);
    void save(const std::string& path) const;
    static Manifest load(const std::string& path);
};

struct SplitOptions {
    int genuine_pairs = 4000;
    int impostor_pairs = 100000;
};

/// Partition identities 60/20/20 and draw pair lists. n_ids must be at
/// least 10 so every split can form impostor pairs.
Manifest make_splits(int n_ids, uint64_t seed, const SplitOptions& opts = {});

}  // namespace semadv::synth
