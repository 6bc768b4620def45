#pragma once

#include <string>
#include <vector>

#include "semadv/tensor.hpp"

namespace semadv::viz {

/// Writes an {H,W,3} [0,1] image as an uncompressed 24-bit BMP.
void write_bmp(const std::string& path, const Tensor& image);

/// Renders labelled series as a grouped bar chart and writes it as BMP.
/// Values are expected in [0,1].
struct BarSeries {
    std::string label;
    std::vector<double> values;
};
void write_bar_chart(const std::string& path, const std::vector<std::string>& categories,
                     const std::vector<BarSeries>& series, int bar_px = 14, int height = 160);

/// Horizontal strip of equally sized images with 2px separators.
void write_image_strip(const std::string& path, const std::vector<Tensor>& images);

}  // namespace semadv::viz
