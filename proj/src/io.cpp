#include "egokd/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "egokd/errors.hpp"

namespace egokd {

namespace fs = std::filesystem;

std::vector<unsigned char> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for reading: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_bytes(const fs::path& path, const void* data, size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_file_bytes(tmp, content.data(), content.size());
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("atomic rename failed for " + path.string() + ": " + ec.message());
}

uint32_t crc32_bytes(const void* data, size_t size) {
  return static_cast<uint32_t>(
      ::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(size)));
}

uint32_t crc32_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return crc32_bytes(bytes.data(), bytes.size());
}

void write_f32_file(const fs::path& path, const std::vector<float>& values) {
  write_file_bytes(path, values.data(), values.size() * sizeof(float));
}

std::vector<float> read_f32_file(const fs::path& path, size_t expected_count,
                                 uint32_t expected_crc) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() != expected_count * sizeof(float)) {
    throw TruncatedError("tensor file " + path.string() + " has " +
                         std::to_string(bytes.size()) + " bytes, expected " +
                         std::to_string(expected_count * sizeof(float)));
  }
  const uint32_t crc = crc32_bytes(bytes.data(), bytes.size());
  if (crc != expected_crc) {
    throw ChecksumError("checksum mismatch for " + path.string());
  }
  std::vector<float> values(expected_count);
  std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

nlohmann::json load_json_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  nlohmann::json j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr,
                                           /*allow_exceptions=*/false);
  if (j.is_discarded()) throw DataError("invalid JSON in " + path.string());
  return j;
}

void save_json_file(const fs::path& path, const nlohmann::json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

uint32_t hash_path(const fs::path& path) {
  if (fs::is_directory(path)) {
    std::vector<std::string> rel;
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
      if (entry.is_regular_file()) {
        rel.push_back(fs::relative(entry.path(), path).generic_string());
      }
    }
    std::sort(rel.begin(), rel.end());
    uint32_t crc = 0;
    for (const auto& r : rel) {
      crc = ::crc32(crc, reinterpret_cast<const Bytef*>(r.data()), static_cast<uInt>(r.size()));
      const uint32_t fc = crc32_file(path / r);
      crc = ::crc32(crc, reinterpret_cast<const Bytef*>(&fc), sizeof(fc));
    }
    return crc;
  }
  return crc32_file(path);
}

}  // namespace egokd
