#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "selfsense/tensor.hpp"

namespace selfsense {

// Tensor debug dump: magic "TNSR0001", u32 LE rank, rank x u32 LE dims,
// float32 LE payload.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void dump_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Little-endian scalar plumbing shared by the binary formats.
void write_u32(std::ostream& os, uint32_t v);
uint32_t read_u32(std::istream& is);

// CRC-32 (IEEE, reflected).
uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);

// FNV-1a 64-bit; used for manifest/data hashes.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
std::string hex64(uint64_t v);

uint64_t hash_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace selfsense
