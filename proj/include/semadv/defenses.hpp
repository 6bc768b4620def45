#pragma once

#include "semadv/tensor.hpp"

namespace semadv::defense {

enum class Kind { kNone, kBitSqueeze, kGaussianBlur, kJpeg };

struct DefenseSpec {
    Kind kind = Kind::kNone;
    int bits = 4;          // bit-squeeze: 1..7 (8 is the identity on 8-bit data)
    int kernel = 3;        // blur: odd kernel size
    float sigma = 1.0f;    // blur
    float quality = 0.75f; // jpeg: (0,1]

    /// Enforces the parameter ranges above; throws std::invalid_argument.
    void validate() const;
    Tensor apply(const Tensor& image) const;
    std::string name() const;
    static DefenseSpec parse(const std::string& name);
};

/// Quantize each channel value to 2^bits levels, rounding half away from
/// zero. Idempotent.
Tensor bit_squeeze(const Tensor& image, int bits = 4);

/// Per-channel convolution with a normalized Gaussian kernel, reflect
/// padding. Kernel must be odd.
Tensor gaussian_blur(const Tensor& image, int kernel = 3, float sigma = 1.0f);

/// The normalized blur kernel itself ({kernel,kernel}, sums to 1).
Tensor gaussian_kernel(int kernel, float sigma);

/// Encode to a standard JPEG bitstream at the given quality and decode
/// back. quality in (0,1] maps to encoder quality round(q*100).
Tensor jpeg_roundtrip(const Tensor& image, float quality = 0.75f);

}  // namespace semadv::defense
