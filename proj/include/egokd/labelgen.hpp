#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "egokd/teachers.hpp"
#include "egokd/video_data.hpp"

namespace egokd {

struct EgoScore {
  std::array<double, 2> probs{0.5, 0.5};  // (p_exo, p_ego)
};

struct ObjectScore {
  std::vector<double> probs;
};

struct GridShape {
  int t = 0, h = 0, w = 0;
  size_t numel() const { return static_cast<size_t>(t) * h * w; }
  bool operator==(const GridShape&) const = default;
};

// Per-cell confidences in [0,1]; cells untouched by any box are exactly 0.
struct InteractionMap {
  GridShape grid;
  std::vector<float> hand_map;    // [t, h, w]
  std::vector<float> object_map;  // [t, h, w]
};

struct ScoreConfig {
  double beta = 1.0;        // softmax temperature
  int n_clips_ego = 2;
  int n_frames_obj = 0;     // 0 means all frames
  double det_threshold = 0.5;
  int clip_length = 8;
  int clip_stride = 1;

  void validate() const;
};

struct PseudoLabels {
  std::array<float, 2> ego{0.5f, 0.5f};
  std::vector<float> object;
  InteractionMap maps;
};

struct PseudoLabelSet {
  GridShape grid;
  int object_classes = 0;
  std::map<std::string, PseudoLabels> by_video;
};

// Softmax over classes of the clip-averaged logits divided by beta,
// computed with max subtraction.
EgoScore ego_score(std::span<const std::array<double, 2>> logit_list, double beta);
ObjectScore object_score(const std::vector<std::vector<double>>& logit_list, double beta);

// Boxes below threshold are dropped; frame k maps to temporal cell
// floor(k*t/T); a box fills every spatial cell it overlaps with strictly
// positive area; overlapping boxes of the same category take the max score.
InteractionMap interaction_map(const std::vector<DetectionFrame>& detections, GridShape grid,
                               int frame_count, double threshold);

PseudoLabelSet build_pseudolabels(const Dataset& dataset, const EgoTeacher& ego_teacher,
                                  const ObjectTeacher& object_teacher,
                                  const DetectionTeacher& detection_teacher,
                                  const ScoreConfig& config, GridShape grid, uint64_t seed);

// Variant fed by pre-recorded detections (the JSONL interchange format)
// instead of running the detection teacher.
PseudoLabelSet build_pseudolabels_from_detections(
    const Dataset& dataset, const EgoTeacher& ego_teacher, const ObjectTeacher& object_teacher,
    const std::vector<DetectionFrame>& detections, const ScoreConfig& config, GridShape grid);

// labels_manifest.json + arrays/<video_id>.<field>.f32
void write_labels(const PseudoLabelSet& labels, const std::filesystem::path& dir);
PseudoLabelSet read_labels(const std::filesystem::path& dir);

bool operator==(const InteractionMap& a, const InteractionMap& b);
bool operator==(const PseudoLabels& a, const PseudoLabels& b);
bool operator==(const PseudoLabelSet& a, const PseudoLabelSet& b);

}  // namespace egokd
