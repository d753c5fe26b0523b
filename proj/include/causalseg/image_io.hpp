#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace causalseg {

/// 8-bit image, row-major, interleaved channels.
struct Image8 {
    int64_t width = 0;
    int64_t height = 0;
    int64_t channels = 1;
    std::vector<uint8_t> pixels;

    Image8() = default;
    Image8(int64_t w, int64_t h, int64_t c, uint8_t fill = 0)
        : width(w), height(h), channels(c), pixels(static_cast<size_t>(w * h * c), fill) {}

    uint8_t& at(int64_t x, int64_t y, int64_t c = 0) { return pixels[static_cast<size_t>((y * width + x) * channels + c)]; }
    uint8_t at(int64_t x, int64_t y, int64_t c = 0) const {
        return pixels[static_cast<size_t>((y * width + x) * channels + c)];
    }
};

/// Reads any PNG, converted to one (gray) or three (RGB) channels.
Image8 read_png(const std::filesystem::path& path, int64_t channels = 1);
void write_png(const std::filesystem::path& path, const Image8& image);

}  // namespace causalseg
