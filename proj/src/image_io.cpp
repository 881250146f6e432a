#include "selfsense/image_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "selfsense/errors.hpp"

namespace selfsense {

namespace {

uint8_t quantize(float v) {
    float x = std::round(v * 255.0f);
    if (x < 0.0f) x = 0.0f;
    if (x > 255.0f) x = 255.0f;
    return static_cast<uint8_t>(x);
}

std::vector<uint8_t> with_header(const char* magic, int width, int height,
                                 size_t payload) {
    const std::string header =
        std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) +
        "\n255\n";
    std::vector<uint8_t> out(header.size() + payload);
    std::memcpy(out.data(), header.data(), header.size());
    return out;
}

void write_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

std::vector<uint8_t> encode_pgm(int width, int height, std::span<const float> gray) {
    if (static_cast<size_t>(width) * static_cast<size_t>(height) != gray.size()) {
        throw DimensionError("encode_pgm: pixel count mismatch");
    }
    std::vector<uint8_t> out = with_header("P5", width, height, gray.size());
    uint8_t* p = out.data() + (out.size() - gray.size());
    for (size_t i = 0; i < gray.size(); ++i) p[i] = quantize(gray[i]);
    return out;
}

std::vector<uint8_t> encode_ppm(int width, int height, std::span<const float> chw) {
    const size_t plane = static_cast<size_t>(width) * static_cast<size_t>(height);
    if (chw.size() != 3 * plane) {
        throw DimensionError("encode_ppm: expected 3*H*W values");
    }
    std::vector<uint8_t> out = with_header("P6", width, height, 3 * plane);
    uint8_t* p = out.data() + (out.size() - 3 * plane);
    for (size_t i = 0; i < plane; ++i) {
        p[3 * i + 0] = quantize(chw[i]);
        p[3 * i + 1] = quantize(chw[plane + i]);
        p[3 * i + 2] = quantize(chw[2 * plane + i]);
    }
    return out;
}

void write_pgm(const std::filesystem::path& path, int width, int height,
               std::span<const float> gray) {
    write_bytes(path, encode_pgm(width, height, gray));
}

void write_ppm(const std::filesystem::path& path, int width, int height,
               std::span<const float> chw) {
    write_bytes(path, encode_ppm(width, height, chw));
}

}  // namespace selfsense
