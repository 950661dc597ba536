#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace omnidist {

// 8-bit raster, 1 (grayscale) or 3 (RGB) channels, row-major, interleaved.
// Stored and exchanged as binary PGM (P5) / PPM (P6).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          pixels(static_cast<std::size_t>(w) * h * c, fill) {}

    std::uint8_t& at(int u, int v, int c = 0) {
        return pixels[(static_cast<std::size_t>(v) * width + u) * channels + c];
    }
    std::uint8_t at(int u, int v, int c = 0) const {
        return pixels[(static_cast<std::size_t>(v) * width + u) * channels + c];
    }
};

// PGM/PPM codecs. Throws FormatError on malformed input.
Image decode_pnm(const std::string& bytes);
std::string encode_pnm(const Image& img);
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Image& img);

// Exact dihedral transforms, used by augmentation tests and tooling.
Image rotate90(const Image& img, int quarter_turns);
Image flip_horizontal(const Image& img);

}  // namespace omnidist
