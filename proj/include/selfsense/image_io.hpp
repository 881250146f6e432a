#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace selfsense {

// Binary PGM (P5) / PPM (P6), maxval 255, header exactly
// "P5\n<width> <height>\n255\n". Inputs are floats in [0,1]; PPM takes
// channel-major (C x H x W, C=3) data as used everywhere in this project.
void write_pgm(const std::filesystem::path& path, int width, int height,
               std::span<const float> gray);
void write_ppm(const std::filesystem::path& path, int width, int height,
               std::span<const float> chw);

std::vector<uint8_t> encode_pgm(int width, int height, std::span<const float> gray);
std::vector<uint8_t> encode_ppm(int width, int height, std::span<const float> chw);

}  // namespace selfsense
