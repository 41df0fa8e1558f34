#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace phyc {

// Minimal 8-bit grayscale PNG. Writing always produces the same bytes for the
// same pixels (fixed filter, fixed zlib level), which the determinism
// contracts depend on.
void write_png_gray(const std::string& path, int64_t width, int64_t height,
                    const std::vector<uint8_t>& pixels);

struct GrayImage {
    int64_t width = 0, height = 0;
    std::vector<uint8_t> pixels;
};

GrayImage read_png_gray(const std::string& path);

// [-1,1] float <-> byte mapping used for all image latents on disk.
uint8_t latent_to_byte(float v);
float byte_to_latent(uint8_t b);

} // namespace phyc
