#include "phyc/png_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "phyc/common.hpp"

namespace phyc {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void write_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = static_cast<uint32_t>(
        crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
    put_u32(out, crc);
}

} // namespace

void write_png_gray(const std::string& path, int64_t width, int64_t height,
                    const std::vector<uint8_t>& pixels) {
    if (width < 1 || height < 1 || pixels.size() != static_cast<size_t>(width * height))
        fail(Errc::invalid_argument, "png dimensions " + std::to_string(width) + "x" +
                                         std::to_string(height) + " vs " +
                                         std::to_string(pixels.size()) + " pixels");

    // Raw scanlines, filter type 0 per row.
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(height * (width + 1)));
    for (int64_t y = 0; y < height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), pixels.begin() + y * width, pixels.begin() + (y + 1) * width);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        fail(Errc::io_error, "zlib compression failed for " + path);
    compressed.resize(bound);

    std::vector<uint8_t> out;
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(width));
    put_u32(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    write_chunk(out, "IHDR", ihdr);
    write_chunk(out, "IDAT", compressed);
    write_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(Errc::io_error, "cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) fail(Errc::io_error, "short write to " + path);
}

GrayImage read_png_gray(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(Errc::io_error, "cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        fail(Errc::format_error, path + " is not a PNG file");

    int64_t width = 0, height = 0;
    int bit_depth = 0, color_type = -1;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        uint32_t len = get_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) fail(Errc::format_error, path + ": truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const uint8_t* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) fail(Errc::format_error, path + ": bad IHDR");
            width = get_u32(data);
            height = get_u32(data + 4);
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) fail(Errc::format_error, path + ": interlaced PNG unsupported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (width < 1 || height < 1) fail(Errc::format_error, path + ": missing IHDR");
    if (bit_depth != 8 || color_type != 0)
        fail(Errc::format_error, path + ": only 8-bit grayscale supported");

    uLongf raw_len = static_cast<uLongf>(height * (width + 1));
    std::vector<uint8_t> raw(raw_len);
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != static_cast<uLongf>(height * (width + 1)))
        fail(Errc::format_error, path + ": corrupt image data");

    GrayImage img;
    img.width = width;
    img.height = height;
    img.pixels.resize(static_cast<size_t>(width * height));
    std::vector<uint8_t> prev(static_cast<size_t>(width), 0);
    for (int64_t y = 0; y < height; ++y) {
        uint8_t filter = raw[static_cast<size_t>(y * (width + 1))];
        const uint8_t* src = raw.data() + y * (width + 1) + 1;
        uint8_t* dst = img.pixels.data() + y * width;
        for (int64_t x = 0; x < width; ++x) {
            int a = x > 0 ? dst[x - 1] : 0;          // left
            int b = prev[static_cast<size_t>(x)];    // up
            int c = x > 0 ? prev[static_cast<size_t>(x - 1)] : 0;  // up-left
            int recon;
            switch (filter) {
            case 0: recon = src[x]; break;
            case 1: recon = src[x] + a; break;
            case 2: recon = src[x] + b; break;
            case 3: recon = src[x] + (a + b) / 2; break;
            case 4: {
                int p = a + b - c;
                int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
                int pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                recon = src[x] + pred;
                break;
            }
            default: fail(Errc::format_error, path + ": unknown filter type");
            }
            dst[x] = static_cast<uint8_t>(recon & 0xFF);
        }
        std::memcpy(prev.data(), dst, static_cast<size_t>(width));
    }
    return img;
}

uint8_t latent_to_byte(float v) {
    float scaled = (std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f;
    int b = static_cast<int>(std::lround(scaled));
    return static_cast<uint8_t>(std::clamp(b, 0, 255));
}

float byte_to_latent(uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

} // namespace phyc
