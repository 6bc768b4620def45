#include "semadv/archive.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace semadv {

namespace {
constexpr char kMagic[8] = {'S', 'A', 'D', 'V', 'I', 'M', 'G', 'S'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
}  // namespace

void ImageArchive::put(const std::string& key, const Tensor& image) {
    entries_[key] = image;
}

const Tensor& ImageArchive::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw std::out_of_range("archive: no entry " + key);
    return it->second;
}

bool ImageArchive::contains(const std::string& key) const { return entries_.count(key) > 0; }

void ImageArchive::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write archive: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(entries_.size()));
    for (const auto& [key, t] : entries_) {
        write_u32(os, static_cast<uint32_t>(key.size()));
        os.write(key.data(), static_cast<std::streamsize>(key.size()));
        write_u32(os, static_cast<uint32_t>(t.rank()));
        for (int d : t.shape()) write_u32(os, static_cast<uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("archive write failed: " + path);
}

ImageArchive ImageArchive::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read archive: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("archive: bad magic in " + path);
    if (read_u32(is) != kVersion) throw std::runtime_error("archive: unsupported version");
    ImageArchive arc;
    const uint32_t count = read_u32(is);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t klen = read_u32(is);
        std::string key(klen, '\0');
        is.read(key.data(), klen);
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
        arc.entries_.emplace(std::move(key), Tensor(std::move(shape), std::move(data)));
    }
    if (!is) throw std::runtime_error("archive: truncated file " + path);
    return arc;
}

// ---------------------------------------------------------------- base64

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}
}  // namespace

std::string base64_encode(const unsigned char* data, size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (size_t i = 0; i < len; i += 3) {
        uint32_t v = static_cast<uint32_t>(data[i]) << 16;
        int rem = static_cast<int>(len - i);
        if (rem > 1) v |= static_cast<uint32_t>(data[i + 1]) << 8;
        if (rem > 2) v |= static_cast<uint32_t>(data[i + 2]);
        out.push_back(kB64[(v >> 18) & 63]);
        out.push_back(kB64[(v >> 12) & 63]);
        out.push_back(rem > 1 ? kB64[(v >> 6) & 63] : '=');
        out.push_back(rem > 2 ? kB64[v & 63] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw std::invalid_argument("base64: length not multiple of 4");
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    for (size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            char c = text[i + k];
            if (c == '=') {
                vals[k] = 0;
                ++pad;
            } else {
                vals[k] = b64_value(c);
                if (vals[k] < 0) throw std::invalid_argument("base64: bad character");
                if (pad > 0) throw std::invalid_argument("base64: data after padding");
            }
        }
        uint32_t v = (static_cast<uint32_t>(vals[0]) << 18) |
                     (static_cast<uint32_t>(vals[1]) << 12) |
                     (static_cast<uint32_t>(vals[2]) << 6) | static_cast<uint32_t>(vals[3]);
        out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xff));
    }
    return out;
}

std::string encode_tensor_b64(const Tensor& t) {
    return base64_encode(reinterpret_cast<const unsigned char*>(t.data()),
                         t.size() * sizeof(float));
}

Tensor decode_tensor_b64(const std::string& b64, const std::vector<int>& shape) {
    std::vector<unsigned char> bytes = base64_decode(b64);
    size_t expect = sizeof(float);
    for (int d : shape) expect *= static_cast<size_t>(d);
    if (bytes.size() != expect)
        throw std::invalid_argument("tensor payload size mismatch");
    std::vector<float> data(bytes.size() / sizeof(float));
    std::memcpy(data.data(), bytes.data(), bytes.size());
    return Tensor(shape, std::move(data));
}

}  // namespace semadv
