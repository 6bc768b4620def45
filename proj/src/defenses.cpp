#include "semadv/defenses.hpp"

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include <jpeglib.h>

namespace semadv::defense {

Tensor bit_squeeze(const Tensor& image, int bits) {
    if (bits < 1 || bits > 8) throw std::invalid_argument("bit_squeeze: bits must be 1..8");
    const float levels = static_cast<float>((1 << bits) - 1);
    Tensor out = image;
    for (size_t i = 0; i < out.size(); ++i) {
        // round half away from zero, fixed across platforms
        out[i] = std::round(out[i] * levels) / levels;
    }
    return out;
}

Tensor gaussian_kernel(int kernel, float sigma) {
    if (kernel % 2 == 0) throw std::invalid_argument("gaussian kernel size must be odd");
    if (sigma <= 0.0f) throw std::invalid_argument("gaussian sigma must be > 0");
    Tensor k({kernel, kernel});
    const int r = kernel / 2;
    double sum = 0.0;
    for (int y = 0; y < kernel; ++y)
        for (int x = 0; x < kernel; ++x) {
            const double dy = y - r, dx = x - r;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            k[static_cast<size_t>(y) * kernel + x] = static_cast<float>(v);
            sum += v;
        }
    for (size_t i = 0; i < k.size(); ++i) k[i] = static_cast<float>(k[i] / sum);
    return k;
}

Tensor gaussian_blur(const Tensor& image, int kernel, float sigma) {
    if (image.rank() != 3) throw std::invalid_argument("gaussian_blur: expects {H,W,C}");
    Tensor k = gaussian_kernel(kernel, sigma);
    const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
    const int r = kernel / 2;
    auto reflect = [](int v, int n) {
        while (v < 0 || v >= n) {
            if (v < 0) v = -v - 1;
            if (v >= n) v = 2 * n - v - 1;
        }
        return v;
    };
    Tensor out({h, w, c});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int ky = 0; ky < kernel; ++ky)
                    for (int kx = 0; kx < kernel; ++kx) {
                        const int iy = reflect(y + ky - r, h);
                        const int ix = reflect(x + kx - r, w);
                        acc += static_cast<double>(k[static_cast<size_t>(ky) * kernel + kx]) *
                               image.at(iy, ix, ch);
                    }
                out.at(y, x, ch) = static_cast<float>(acc);
            }
    return out;
}

// ------------------------------------------------------------------- JPEG

namespace {

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    jmp_buf setjmp_buffer;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    longjmp(err->setjmp_buffer, 1);
}

std::vector<unsigned char> to_bytes(const Tensor& image) {
    std::vector<unsigned char> out(image.size());
    for (size_t i = 0; i < image.size(); ++i) {
        float v = std::min(1.0f, std::max(0.0f, image[i]));
        out[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    return out;
}

}  // namespace

Tensor jpeg_roundtrip(const Tensor& image, float quality) {
    if (image.rank() != 3 || image.dim(2) != 3)
        throw std::invalid_argument("jpeg_roundtrip: expects {H,W,3}");
    if (!(quality > 0.0f && quality <= 1.0f))
        throw std::invalid_argument("jpeg_roundtrip: quality must be in (0,1]");
    const int h = image.dim(0), w = image.dim(1);
    std::vector<unsigned char> rgb = to_bytes(image);

    // Encode.
    unsigned char* buf = nullptr;
    unsigned long buf_size = 0;
    {
        jpeg_compress_struct cinfo;
        JpegErrorMgr jerr;
        cinfo.err = jpeg_std_error(&jerr.pub);
        jerr.pub.error_exit = jpeg_error_exit;
        if (setjmp(jerr.setjmp_buffer)) {
            jpeg_destroy_compress(&cinfo);
            if (buf) free(buf);
            throw std::runtime_error(std::string("jpeg encode failed: ") + jerr.message);
        }
        jpeg_create_compress(&cinfo);
        jpeg_mem_dest(&cinfo, &buf, &buf_size);
        cinfo.image_width = static_cast<JDIMENSION>(w);
        cinfo.image_height = static_cast<JDIMENSION>(h);
        cinfo.input_components = 3;
        cinfo.in_color_space = JCS_RGB;
        jpeg_set_defaults(&cinfo);
        jpeg_set_quality(&cinfo, static_cast<int>(std::lround(quality * 100.0f)), TRUE);
        jpeg_start_compress(&cinfo, TRUE);
        while (cinfo.next_scanline < cinfo.image_height) {
            JSAMPROW row = rgb.data() + static_cast<size_t>(cinfo.next_scanline) * w * 3;
            jpeg_write_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_compress(&cinfo);
        jpeg_destroy_compress(&cinfo);
    }

    // Decode.
    Tensor out({h, w, 3});
    {
        jpeg_decompress_struct dinfo;
        JpegErrorMgr jerr;
        dinfo.err = jpeg_std_error(&jerr.pub);
        jerr.pub.error_exit = jpeg_error_exit;
        if (setjmp(jerr.setjmp_buffer)) {
            jpeg_destroy_decompress(&dinfo);
            free(buf);
            throw std::runtime_error(std::string("jpeg decode failed: ") + jerr.message);
        }
        jpeg_create_decompress(&dinfo);
        jpeg_mem_src(&dinfo, buf, buf_size);
        jpeg_read_header(&dinfo, TRUE);
        jpeg_start_decompress(&dinfo);
        std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
        int y = 0;
        while (dinfo.output_scanline < dinfo.output_height) {
            JSAMPROW rp = row.data();
            jpeg_read_scanlines(&dinfo, &rp, 1);
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    out.at(y, x, c) = row[static_cast<size_t>(x) * 3 + c] / 255.0f;
            ++y;
        }
        jpeg_finish_decompress(&dinfo);
        jpeg_destroy_decompress(&dinfo);
    }
    free(buf);
    return out;
}

void DefenseSpec::validate() const {
    switch (kind) {
        case Kind::kNone:
            break;
        case Kind::kBitSqueeze:
            if (bits < 1 || bits > 7)
                throw std::invalid_argument("bit-squeeze defense: bits must be 1..7");
            break;
        case Kind::kGaussianBlur:
            if (kernel % 2 == 0) throw std::invalid_argument("blur defense: kernel must be odd");
            break;
        case Kind::kJpeg:
            if (!(quality > 0.0f && quality <= 1.0f))
                throw std::invalid_argument("jpeg defense: quality must be in (0,1]");
            break;
    }
}

Tensor DefenseSpec::apply(const Tensor& image) const {
    validate();
    switch (kind) {
        case Kind::kNone:
            return image;
        case Kind::kBitSqueeze:
            return bit_squeeze(image, bits);
        case Kind::kGaussianBlur:
            return gaussian_blur(image, kernel, sigma);
        case Kind::kJpeg:
            return jpeg_roundtrip(image, quality);
    }
    throw std::logic_error("bad defense kind");
}

std::string DefenseSpec::name() const {
    switch (kind) {
        case Kind::kNone:
            return "none";
        case Kind::kBitSqueeze:
            return "bit-squeeze";
        case Kind::kGaussianBlur:
            return "gaussian-blur";
        case Kind::kJpeg:
            return "jpeg";
    }
    throw std::logic_error("bad defense kind");
}

DefenseSpec DefenseSpec::parse(const std::string& name) {
    DefenseSpec s;
    if (name == "none")
        s.kind = Kind::kNone;
    else if (name == "bit-squeeze")
        s.kind = Kind::kBitSqueeze;
    else if (name == "gaussian-blur")
        s.kind = Kind::kGaussianBlur;
    else if (name == "jpeg")
        s.kind = Kind::kJpeg;
    else
        throw std::invalid_argument("unknown defense: " + name);
    return s;
}

}  // namespace semadv::defense
