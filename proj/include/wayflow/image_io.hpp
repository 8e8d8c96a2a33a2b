#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wayflow/tensor.hpp"

namespace wayflow::img {

struct Image8 {
    int64_t width = 0;
    int64_t height = 0;
    std::vector<uint8_t> rgb;  // 3 bytes per pixel, row-major

    size_t index(int64_t y, int64_t x) const {
        return static_cast<size_t>((y * width + x) * 3);
    }
};

// PNG: 8-bit gray/gray+alpha/RGB/RGBA, non-interlaced. The decoder carries
// its own inflate (stored, fixed and dynamic Huffman blocks).
Image8 decode_png(const std::vector<uint8_t>& bytes);
// 8-bit RGB, filter 0, stored deflate blocks. Byte-deterministic.
std::vector<uint8_t> encode_png(const Image8& im);

// PPM P6 (binary) and P3 (ascii), maxval 255.
Image8 decode_ppm(const std::vector<uint8_t>& bytes);

Image8 load_image(const std::string& path);

// Clamp to [-1, 1], map to [0, 255] rounding half away from zero, write PNG.
void export_image(const Tensor& image, const std::string& path);

// [H, W, 3] in [-1, 1] from 8-bit RGB.
Tensor to_tensor(const Image8& im);

// Center-crop to square then bilinear-resize to size x size.
Image8 center_crop_resize(const Image8& im, int64_t size);

// Raw inflate of a zlib stream (exposed for tests).
std::vector<uint8_t> zlib_decompress(const uint8_t* data, size_t len);

}  // namespace wayflow::img
