#include "semadv/viz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace semadv::viz {

namespace {
void put_u32(std::vector<unsigned char>& b, uint32_t v) {
    b.push_back(v & 0xff);
    b.push_back((v >> 8) & 0xff);
    b.push_back((v >> 16) & 0xff);
    b.push_back((v >> 24) & 0xff);
}
void put_u16(std::vector<unsigned char>& b, uint16_t v) {
    b.push_back(v & 0xff);
    b.push_back((v >> 8) & 0xff);
}
}  // namespace

void write_bmp(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != 3)
        throw std::invalid_argument("write_bmp: expects {H,W,3}");
    const int h = image.dim(0), w = image.dim(1);
    const int row_bytes = (w * 3 + 3) & ~3;
    const uint32_t data_size = static_cast<uint32_t>(row_bytes) * h;
    std::vector<unsigned char> out;
    out.reserve(54 + data_size);
    out.push_back('B');
    out.push_back('M');
    put_u32(out, 54 + data_size);
    put_u32(out, 0);
    put_u32(out, 54);
    put_u32(out, 40);
    put_u32(out, static_cast<uint32_t>(w));
    put_u32(out, static_cast<uint32_t>(h));
    put_u16(out, 1);
    put_u16(out, 24);
    put_u32(out, 0);
    put_u32(out, data_size);
    put_u32(out, 2835);
    put_u32(out, 2835);
    put_u32(out, 0);
    put_u32(out, 0);
    for (int y = h - 1; y >= 0; --y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 2; c >= 0; --c) {  // BGR order
                float v = std::clamp(image.at(y, x, c), 0.0f, 1.0f);
                out.push_back(static_cast<unsigned char>(std::lround(v * 255.0f)));
            }
        }
        for (int pad = w * 3; pad < row_bytes; ++pad) out.push_back(0);
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write image: " + path);
    os.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
}

void write_bar_chart(const std::string& path, const std::vector<std::string>& categories,
                     const std::vector<BarSeries>& series, int bar_px, int height) {
    if (series.empty()) throw std::invalid_argument("write_bar_chart: no series");
    const int n_cat = static_cast<int>(categories.size());
    const int n_ser = static_cast<int>(series.size());
    const int group_w = n_ser * bar_px + 8;
    const int w = std::max(64, n_cat * group_w + 16);
    const int plot_h = height - 12;
    Tensor img({height, w, 3}, 1.0f);

    // Baseline.
    for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) img.at(height - 12, x, c) = 0.2f;

    const float palette[4][3] = {
        {0.30f, 0.55f, 0.85f}, {0.90f, 0.45f, 0.25f}, {0.35f, 0.75f, 0.40f},
        {0.65f, 0.40f, 0.80f}};
    for (int ci = 0; ci < n_cat; ++ci) {
        for (int si = 0; si < n_ser; ++si) {
            if (ci >= static_cast<int>(series[si].values.size())) continue;
            double v = std::clamp(series[si].values[ci], 0.0, 1.0);
            const int bh = static_cast<int>(std::lround(v * (plot_h - 4)));
            const int x0 = 8 + ci * group_w + si * bar_px;
            const float* col = palette[si % 4];
            for (int y = 0; y < bh; ++y)
                for (int x = x0; x < x0 + bar_px - 2 && x < w; ++x)
                    for (int c = 0; c < 3; ++c)
                        img.at(height - 13 - y, x, c) = col[c];
        }
    }
    write_bmp(path, img);
}

void write_image_strip(const std::string& path, const std::vector<Tensor>& images) {
    if (images.empty()) throw std::invalid_argument("write_image_strip: no images");
    const int h = images[0].dim(0), w = images[0].dim(1);
    const int total_w = static_cast<int>(images.size()) * (w + 2) - 2;
    Tensor strip({h, total_w, 3}, 1.0f);
    int x_off = 0;
    for (const Tensor& im : images) {
        if (im.dim(0) != h || im.dim(1) != w || im.dim(2) != 3)
            throw std::invalid_argument("write_image_strip: size mismatch");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) strip.at(y, x_off + x, c) = im.at(y, x, c);
        x_off += w + 2;
    }
    write_bmp(path, strip);
}

}  // namespace semadv::viz
