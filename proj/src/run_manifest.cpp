#include "egokd/run_manifest.hpp"

#include <ctime>

#include "egokd/io.hpp"

namespace egokd {

namespace fs = std::filesystem;
using nlohmann::json;

RunRecorder::RunRecorder(std::string command, json resolved_config, uint64_t seed)
    : start_(std::chrono::steady_clock::now()) {
  manifest_["command"] = std::move(command);
  manifest_["config"] = std::move(resolved_config);
  manifest_["seed"] = seed;
  manifest_["inputs"] = json::object();
  manifest_["outputs"] = json::object();
  char buf[32];
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  manifest_["timestamp"] = buf;
}

void RunRecorder::add_input(const std::string& label, const fs::path& path) {
  manifest_["inputs"][label] =
      json{{"path", fs::absolute(path).string()}, {"crc32", hash_path(path)}};
}

void RunRecorder::add_output(const std::string& label, const fs::path& path) {
  outputs_.emplace_back(label, path);
}

void RunRecorder::finish(const fs::path& primary_output) {
  for (const auto& [label, path] : outputs_) {
    manifest_["outputs"][label] =
        json{{"path", fs::absolute(path).string()}, {"crc32", hash_path(path)}};
  }
  const auto elapsed = std::chrono::steady_clock::now() - start_;
  manifest_["wall_seconds"] =
      std::chrono::duration_cast<std::chrono::duration<double>>(elapsed).count();
  fs::path sidecar = primary_output;
  sidecar += ".run.json";
  save_json_file(sidecar, manifest_);
}

bool verify_run_manifest(const fs::path& manifest_path) {
  const json manifest = load_json_file(manifest_path);
  for (const char* section : {"inputs", "outputs"}) {
    for (const auto& [label, entry] : manifest.at(section).items()) {
      (void)label;
      const fs::path path = entry.at("path").get<std::string>();
      if (!fs::exists(path)) return false;
      if (hash_path(path) != entry.at("crc32").get<uint32_t>()) return false;
    }
  }
  return true;
}

}  // namespace egokd
