#include "egokd/teachers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "egokd/errors.hpp"
#include "egokd/io.hpp"
#include "egokd/rng.hpp"

namespace egokd {

using nlohmann::json;

std::array<double, 2> AnalyticEgoTeacher::ego_logits(const Clip& clip) const {
  const double gap = gain_ * (clip.ego_param - 0.5);
  return {-0.5 * gap, 0.5 * gap};
}

std::vector<double> AnalyticObjectTeacher::object_logits(const VideoRecord& video,
                                                         int frame_index) const {
  if (frame_index < 0 || frame_index >= video.frame_count)
    throw DataError("frame index out of range for video " + video.video_id);
  std::vector<double> logits(num_classes_, 0.0);
  for (const auto& blob : video.blob_tracks) {
    if (blob.category != BlobCategory::object) continue;
    if (blob.object_class < 0 || blob.object_class >= num_classes_) continue;
    const auto& c = blob.center_path[frame_index];
    const double x1 = std::max(0.0, c[0] - blob.half_extent[0]);
    const double x2 = std::min(1.0, c[0] + blob.half_extent[0]);
    const double y1 = std::max(0.0, c[1] - blob.half_extent[1]);
    const double y2 = std::min(1.0, c[1] + blob.half_extent[1]);
    const double area = std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1);
    logits[blob.object_class] += gain_ * area * blob.intensity;
  }
  return logits;
}

std::vector<DetectionFrame> AnalyticDetectionTeacher::detect(const VideoRecord& video,
                                                             uint64_t seed) const {
  std::vector<DetectionFrame> out;
  out.reserve(video.frame_count);
  for (int t = 0; t < video.frame_count; ++t) {
    DetectionFrame frame;
    frame.video_id = video.video_id;
    frame.frame_index = t;
    for (size_t b = 0; b < video.blob_tracks.size(); ++b) {
      const auto& blob = video.blob_tracks[b];
      Rng rng(derive_seed(seed, "detect", hash_str(video.video_id),
                          static_cast<uint64_t>(t), static_cast<uint64_t>(b)));
      if (rng.uniform() < noise_.miss_rate) continue;
      const double limit = 2.0 * noise_.jitter_sigma;
      const auto& c = blob.center_path[t];
      Box box;
      box.x1 = c[0] - blob.half_extent[0] + rng.truncated_gaussian(noise_.jitter_sigma, limit);
      box.y1 = c[1] - blob.half_extent[1] + rng.truncated_gaussian(noise_.jitter_sigma, limit);
      box.x2 = c[0] + blob.half_extent[0] + rng.truncated_gaussian(noise_.jitter_sigma, limit);
      box.y2 = c[1] + blob.half_extent[1] + rng.truncated_gaussian(noise_.jitter_sigma, limit);
      box.x1 = std::clamp(box.x1, 0.0, 1.0);
      box.y1 = std::clamp(box.y1, 0.0, 1.0);
      box.x2 = std::clamp(box.x2, 0.0, 1.0);
      box.y2 = std::clamp(box.y2, 0.0, 1.0);
      if (box.x2 - box.x1 <= 1e-9 || box.y2 - box.y1 <= 1e-9) continue;  // collapsed at the border
      box.score = static_cast<float>(rng.uniform(noise_.conf_lo, noise_.conf_hi));
      box.category = blob.category;
      frame.boxes.push_back(box);
    }
    out.push_back(std::move(frame));
  }
  return out;
}

void write_detections_jsonl(const std::filesystem::path& path,
                            const std::vector<DetectionFrame>& frames) {
  std::ostringstream out;
  for (const auto& frame : frames) {
    json boxes = json::array();
    for (const auto& b : frame.boxes) {
      boxes.push_back(json{{"x1", b.x1},
                           {"y1", b.y1},
                           {"x2", b.x2},
                           {"y2", b.y2},
                           {"score", b.score},
                           {"category", to_string(b.category)}});
    }
    const json line{{"video_id", frame.video_id},
                    {"frame_index", frame.frame_index},
                    {"boxes", std::move(boxes)}};
    out << line.dump() << "\n";
  }
  write_file_atomic(path, out.str());
}

std::vector<DetectionFrame> read_detections_jsonl(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<DetectionFrame> frames;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded())
      throw DataError("invalid JSONL at " + path.string() + ":" + std::to_string(line_no));
    DetectionFrame frame;
    frame.video_id = j.at("video_id").get<std::string>();
    frame.frame_index = j.at("frame_index").get<int>();
    for (const auto& jb : j.at("boxes")) {
      Box b;
      b.x1 = jb.at("x1").get<double>();
      b.y1 = jb.at("y1").get<double>();
      b.x2 = jb.at("x2").get<double>();
      b.y2 = jb.at("y2").get<double>();
      b.score = jb.at("score").get<float>();
      b.category = blob_category_from_string(jb.at("category").get<std::string>());
      if (!(b.x1 < b.x2) || !(b.y1 < b.y2))
        throw DataError("degenerate box at " + path.string() + ":" + std::to_string(line_no));
      frame.boxes.push_back(b);
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

bool operator==(const Box& a, const Box& b) {
  return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2 && a.score == b.score &&
         a.category == b.category;
}

bool operator==(const DetectionFrame& a, const DetectionFrame& b) {
  return a.video_id == b.video_id && a.frame_index == b.frame_index && a.boxes == b.boxes;
}

}  // namespace egokd
