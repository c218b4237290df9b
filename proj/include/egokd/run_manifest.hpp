#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace egokd {

// Provenance sidecar written next to every CLI output: the command, the full
// resolved configuration, seeds, and content hashes of inputs and outputs.
// Written atomically as <output>.run.json so output archives stay
// byte-reproducible.
class RunRecorder {
 public:
  RunRecorder(std::string command, nlohmann::json resolved_config, uint64_t seed);

  void add_input(const std::string& label, const std::filesystem::path& path);
  void add_output(const std::string& label, const std::filesystem::path& path);

  // Hashes the registered outputs and writes <primary_output>.run.json.
  void finish(const std::filesystem::path& primary_output);

 private:
  nlohmann::json manifest_;
  std::vector<std::pair<std::string, std::filesystem::path>> outputs_;
  std::chrono::steady_clock::time_point start_;
};

// Recomputes the hashes stored in a run manifest; true when they all match.
bool verify_run_manifest(const std::filesystem::path& manifest_path);

}  // namespace egokd
