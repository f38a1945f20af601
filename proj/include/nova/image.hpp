#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace nova {

/// Planar float image: channel c, row y, column x at (c * height + y) * width + x.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    bool empty() const { return data.empty(); }
};

/// 8-bit grayscale image as decoded from disk.
struct GrayImage8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;
};

void write_pgm(const std::filesystem::path& path, const GrayImage8& image);
GrayImage8 read_pgm(const std::filesystem::path& path);
GrayImage8 read_png_gray(const std::filesystem::path& path);

/// Dispatches on the file signature (P5 or PNG).
GrayImage8 read_gray_image(const std::filesystem::path& path);

/// Single-channel float image scaled to [0, 1].
Image to_unit_image(const GrayImage8& gray);

}  // namespace nova
