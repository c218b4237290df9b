#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace egokd {

// Archive payloads are raw IEEE-754 binary32 little-endian; integers in
// manifests are plain JSON. Only little-endian hosts are supported.
static_assert(std::endian::native == std::endian::little,
              "archive formats assume a little-endian host");

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const void* data, size_t size);
// Writes to a temp file in the same directory, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

uint32_t crc32_bytes(const void* data, size_t size);
uint32_t crc32_file(const std::filesystem::path& path);

void write_f32_file(const std::filesystem::path& path, const std::vector<float>& values);
// Validates element count and CRC; throws TruncatedError / ChecksumError.
std::vector<float> read_f32_file(const std::filesystem::path& path, size_t expected_count,
                                 uint32_t expected_crc);

nlohmann::json load_json_file(const std::filesystem::path& path);
void save_json_file(const std::filesystem::path& path, const nlohmann::json& j);

// CRC over a file, or over a directory tree (sorted relative paths + contents).
uint32_t hash_path(const std::filesystem::path& path);

}  // namespace egokd
