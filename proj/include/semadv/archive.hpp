#pragma once

#include <map>
#include <string>

#include "semadv/tensor.hpp"

namespace semadv {

/// Single-file image store: raw float tensors behind a string-keyed
/// index. Used for dataset dumps and adversarial-image outputs.
class ImageArchive {
public:
    void put(const std::string& key, const Tensor& image);
    const Tensor& get(const std::string& key) const;
    bool contains(const std::string& key) const;
    size_t size() const { return entries_.size(); }
    const std::map<std::string, Tensor>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static ImageArchive load(const std::string& path);

private:
    std::map<std::string, Tensor> entries_;
};

std::string base64_encode(const unsigned char* data, size_t len);
std::vector<unsigned char> base64_decode(const std::string& text);

std::string encode_tensor_b64(const Tensor& t);
Tensor decode_tensor_b64(const std::string& b64, const std::vector<int>& shape);

}  // namespace semadv
