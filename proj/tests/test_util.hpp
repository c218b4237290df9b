#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "egokd/video_data.hpp"

namespace testutil {

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("egokd_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline egokd::DatasetSpec tiny_spec(int pretrain = 6, int ft_train = 4, int ft_val = 4) {
  egokd::DatasetSpec spec;
  spec.n_pretrain = pretrain;
  spec.n_finetune_train = ft_train;
  spec.n_finetune_val = ft_val;
  return spec;
}

inline void flip_one_byte(const std::filesystem::path& file, size_t offset = 5) {
  std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(static_cast<std::streamoff>(offset));
  char c = 0;
  f.read(&c, 1);
  c = static_cast<char>(c ^ 0x40);
  f.seekp(static_cast<std::streamoff>(offset));
  f.write(&c, 1);
}

inline bool same_file_bytes(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return sa == sb;
}

// Byte-compares two directory trees (same relative files, same contents).
inline bool same_tree(const std::filesystem::path& a, const std::filesystem::path& b) {
  namespace fs = std::filesystem;
  std::vector<std::string> ra, rb;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) ra.push_back(fs::relative(e.path(), a).generic_string());
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) rb.push_back(fs::relative(e.path(), b).generic_string());
  }
  std::sort(ra.begin(), ra.end());
  std::sort(rb.begin(), rb.end());
  if (ra != rb) return false;
  for (const auto& r : ra) {
    if (!same_file_bytes(a / r, b / r)) return false;
  }
  return true;
}

}  // namespace testutil
