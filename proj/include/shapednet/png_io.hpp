#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shapednet/errors.hpp"

namespace shapednet {

struct GrayImage {
    int width = 0, height = 0;
    std::vector<uint8_t> pixels;  // row-major, 8-bit

    GrayImage() = default;
    GrayImage(int w, int h, uint8_t fill = 255)
        : width(w), height(h), pixels(static_cast<size_t>(w) * static_cast<size_t>(h), fill) {}
    uint8_t& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

// Minimal self-contained 8-bit grayscale PNG codec. The writer emits
// uncompressed (stored) deflate blocks, which every PNG reader accepts; the
// reader handles exactly the files this writer produces (stored blocks,
// filter 0) and rejects anything fancier.
void write_png_gray(const std::string& path, const GrayImage& img);
GrayImage read_png_gray(const std::string& path);

// Byte oracles, exposed for tests.
uint32_t png_crc32(const uint8_t* data, size_t len);
uint32_t png_adler32(const uint8_t* data, size_t len);

}  // namespace shapednet
