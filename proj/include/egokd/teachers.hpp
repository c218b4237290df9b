#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "egokd/video_data.hpp"

namespace egokd {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;  // normalized, x1<x2, y1<y2
  float score = 0.0f;                     // confidence in [0,1]
  BlobCategory category = BlobCategory::hand;
};

struct DetectionFrame {
  std::string video_id;
  int frame_index = 0;
  std::vector<Box> boxes;
};

// Teacher interfaces. The analytic implementations score the planted
// structure directly; anything with the same signatures can be swapped in.
class EgoTeacher {
 public:
  virtual ~EgoTeacher() = default;
  // (exocentric, egocentric) logits for one clip.
  virtual std::array<double, 2> ego_logits(const Clip& clip) const = 0;
};

class ObjectTeacher {
 public:
  virtual ~ObjectTeacher() = default;
  virtual int num_classes() const = 0;
  virtual std::vector<double> object_logits(const VideoRecord& video, int frame_index) const = 0;
};

class DetectionTeacher {
 public:
  virtual ~DetectionTeacher() = default;
  virtual std::vector<DetectionFrame> detect(const VideoRecord& video, uint64_t seed) const = 0;
};

// Logit gap = gain * (ego_param - 0.5); symmetric at ego_param = 0.5.
class AnalyticEgoTeacher : public EgoTeacher {
 public:
  explicit AnalyticEgoTeacher(double gain = 4.0) : gain_(gain) {}
  std::array<double, 2> ego_logits(const Clip& clip) const override;

 private:
  double gain_;
};

// Scores each class by the clipped area (weighted by intensity) of planted
// object blobs of that class in the frame. No blobs gives uniform logits.
class AnalyticObjectTeacher : public ObjectTeacher {
 public:
  explicit AnalyticObjectTeacher(int num_classes, double gain = 50.0)
      : num_classes_(num_classes), gain_(gain) {}
  int num_classes() const override { return num_classes_; }
  std::vector<double> object_logits(const VideoRecord& video, int frame_index) const override;

 private:
  int num_classes_;
  double gain_;
};

struct DetectionNoise {
  double jitter_sigma = 0.02;  // per-coordinate, truncated at 2 sigma
  double miss_rate = 0.1;
  double conf_lo = 0.3;
  double conf_hi = 1.0;
};

class AnalyticDetectionTeacher : public DetectionTeacher {
 public:
  explicit AnalyticDetectionTeacher(DetectionNoise noise = {}) : noise_(noise) {}
  std::vector<DetectionFrame> detect(const VideoRecord& video, uint64_t seed) const override;
  const DetectionNoise& noise() const { return noise_; }

 private:
  DetectionNoise noise_;
};

// One JSON object per line:
// {"video_id", "frame_index", "boxes": [{"x1","y1","x2","y2","score","category"}]}
void write_detections_jsonl(const std::filesystem::path& path,
                            const std::vector<DetectionFrame>& frames);
std::vector<DetectionFrame> read_detections_jsonl(const std::filesystem::path& path);

bool operator==(const Box& a, const Box& b);
bool operator==(const DetectionFrame& a, const DetectionFrame& b);

}  // namespace egokd
