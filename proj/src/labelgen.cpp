#include "egokd/labelgen.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "egokd/errors.hpp"
#include "egokd/io.hpp"
#include "egokd/rng.hpp"

namespace egokd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kLabelsSchemaVersion = 1;

std::vector<double> stable_softmax(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

void ScoreConfig::validate() const {
  if (beta <= 0) throw UsageError("beta must be positive");
  if (n_clips_ego < 1) throw UsageError("n_clips_ego must be >= 1");
  if (n_frames_obj < 0) throw UsageError("n_frames_obj must be >= 0 (0 = all frames)");
  if (det_threshold < 0 || det_threshold > 1)
    throw UsageError("det_threshold must be in [0,1]");
  if (clip_length < 1 || clip_stride < 1)
    throw UsageError("clip_length and clip_stride must be >= 1");
}

EgoScore ego_score(std::span<const std::array<double, 2>> logit_list, double beta) {
  if (logit_list.empty()) throw DataError("ego_score: empty logit list");
  if (beta <= 0) throw UsageError("ego_score: beta must be positive");
  const double scale = 1.0 / (static_cast<double>(logit_list.size()) * beta);
  std::vector<double> z(2, 0.0);
  for (const auto& l : logit_list) {
    if (!std::isfinite(l[0]) || !std::isfinite(l[1]))
      throw DataError("ego_score: non-finite logit");
    z[0] += l[0];
    z[1] += l[1];
  }
  z[0] *= scale;
  z[1] *= scale;
  const auto p = stable_softmax(z);
  return EgoScore{{p[0], p[1]}};
}

ObjectScore object_score(const std::vector<std::vector<double>>& logit_list, double beta) {
  if (logit_list.empty()) throw DataError("object_score: empty logit list");
  if (beta <= 0) throw UsageError("object_score: beta must be positive");
  const size_t classes = logit_list.front().size();
  if (classes < 2) throw DataError("object_score: need at least 2 classes");
  std::vector<double> z(classes, 0.0);
  for (const auto& frame_logits : logit_list) {
    if (frame_logits.size() != classes)
      throw DataError("object_score: ragged logit vectors");
    for (size_t c = 0; c < classes; ++c) {
      if (!std::isfinite(frame_logits[c])) throw DataError("object_score: non-finite logit");
      z[c] += frame_logits[c];
    }
  }
  const double scale = 1.0 / (static_cast<double>(logit_list.size()) * beta);
  for (double& v : z) v *= scale;
  return ObjectScore{stable_softmax(z)};
}

InteractionMap interaction_map(const std::vector<DetectionFrame>& detections, GridShape grid,
                               int frame_count, double threshold) {
  if (grid.t < 1 || grid.h < 1 || grid.w < 1) throw UsageError("grid dimensions must be positive");
  if (frame_count < grid.t)
    throw DataError("interaction_map: frame count " + std::to_string(frame_count) +
                    " < temporal cells " + std::to_string(grid.t));

  std::vector<char> seen(frame_count, 0);
  for (const auto& frame : detections) {
    if (frame.frame_index < 0 || frame.frame_index >= frame_count)
      throw DataError("interaction_map: frame index out of range");
    if (seen[frame.frame_index])
      throw DataError("interaction_map: duplicate frame index " +
                      std::to_string(frame.frame_index));
    seen[frame.frame_index] = 1;
  }
  for (int k = 0; k < frame_count; ++k) {
    if (!seen[k])
      throw DataError("interaction_map: detections missing frame " + std::to_string(k));
  }

  InteractionMap map;
  map.grid = grid;
  map.hand_map.assign(grid.numel(), 0.0f);
  map.object_map.assign(grid.numel(), 0.0f);

  for (const auto& frame : detections) {
    const int tc = static_cast<int>(static_cast<int64_t>(frame.frame_index) * grid.t / frame_count);
    for (const auto& box : frame.boxes) {
      if (box.x1 < 0 || box.y1 < 0 || box.x2 > 1 || box.y2 > 1 || !(box.x1 < box.x2) ||
          !(box.y1 < box.y2)) {
        throw DataError("interaction_map: box outside [0,1]^2 or degenerate");
      }
      if (box.score < threshold) continue;
      float* cells = box.category == BlobCategory::hand ? map.hand_map.data()
                                                        : map.object_map.data();
      // Candidate index window, then the exact strictly-positive-area test so
      // edges landing on cell boundaries do not count.
      const int j_lo = std::max(0, static_cast<int>(std::floor(box.x1 * grid.w)));
      const int j_hi = std::min(grid.w - 1, static_cast<int>(std::ceil(box.x2 * grid.w)));
      const int i_lo = std::max(0, static_cast<int>(std::floor(box.y1 * grid.h)));
      const int i_hi = std::min(grid.h - 1, static_cast<int>(std::ceil(box.y2 * grid.h)));
      for (int i = i_lo; i <= i_hi; ++i) {
        const double cy1 = static_cast<double>(i) / grid.h;
        const double cy2 = static_cast<double>(i + 1) / grid.h;
        if (!(std::min(box.y2, cy2) - std::max(box.y1, cy1) > 0)) continue;
        for (int j = j_lo; j <= j_hi; ++j) {
          const double cx1 = static_cast<double>(j) / grid.w;
          const double cx2 = static_cast<double>(j + 1) / grid.w;
          if (!(std::min(box.x2, cx2) - std::max(box.x1, cx1) > 0)) continue;
          float& cell = cells[(static_cast<size_t>(tc) * grid.h + i) * grid.w + j];
          cell = std::max(cell, box.score);
        }
      }
    }
  }
  return map;
}

namespace {

PseudoLabels labels_for_video(const VideoRecord& video, const EgoTeacher& ego_teacher,
                              const ObjectTeacher& object_teacher,
                              const std::vector<DetectionFrame>& detections,
                              const ScoreConfig& config, GridShape grid) {
  PseudoLabels out;

  const auto clips = sample_clips(video, config.n_clips_ego, config.clip_length,
                                  config.clip_stride, ClipMode::uniform, /*seed=*/0);
  std::vector<std::array<double, 2>> ego_logits;
  ego_logits.reserve(clips.size());
  for (const auto& clip : clips) ego_logits.push_back(ego_teacher.ego_logits(clip));
  const EgoScore es = ego_score(ego_logits, config.beta);
  out.ego = {static_cast<float>(es.probs[0]), static_cast<float>(es.probs[1])};

  const int n_frames = config.n_frames_obj == 0 ? video.frame_count : config.n_frames_obj;
  std::vector<std::vector<double>> obj_logits;
  for (int k : even_frame_indices(video.frame_count, n_frames)) {
    obj_logits.push_back(object_teacher.object_logits(video, k));
  }
  const ObjectScore os = object_score(obj_logits, config.beta);
  out.object.resize(os.probs.size());
  for (size_t c = 0; c < os.probs.size(); ++c) out.object[c] = static_cast<float>(os.probs[c]);

  out.maps = interaction_map(detections, grid, video.frame_count, config.det_threshold);
  return out;
}

}  // namespace

PseudoLabelSet build_pseudolabels(const Dataset& dataset, const EgoTeacher& ego_teacher,
                                  const ObjectTeacher& object_teacher,
                                  const DetectionTeacher& detection_teacher,
                                  const ScoreConfig& config, GridShape grid, uint64_t seed) {
  if (dataset.videos.empty()) throw DataError("build_pseudolabels: empty dataset");
  config.validate();
  PseudoLabelSet set;
  set.grid = grid;
  set.object_classes = object_teacher.num_classes();
  for (const auto& video : dataset.videos) {
    try {
      const auto detections = detection_teacher.detect(video, seed);
      set.by_video[video.video_id] =
          labels_for_video(video, ego_teacher, object_teacher, detections, config, grid);
    } catch (const DataError& e) {
      throw DataError("video " + video.video_id + ": " + e.what());
    }
  }
  return set;
}

PseudoLabelSet build_pseudolabels_from_detections(
    const Dataset& dataset, const EgoTeacher& ego_teacher, const ObjectTeacher& object_teacher,
    const std::vector<DetectionFrame>& detections, const ScoreConfig& config, GridShape grid) {
  if (dataset.videos.empty()) throw DataError("build_pseudolabels: empty dataset");
  config.validate();
  std::map<std::string, std::vector<DetectionFrame>> by_video;
  for (const auto& frame : detections) by_video[frame.video_id].push_back(frame);

  PseudoLabelSet set;
  set.grid = grid;
  set.object_classes = object_teacher.num_classes();
  for (const auto& video : dataset.videos) {
    const auto it = by_video.find(video.video_id);
    if (it == by_video.end())
      throw DataError("no detections for video " + video.video_id);
    try {
      set.by_video[video.video_id] =
          labels_for_video(video, ego_teacher, object_teacher, it->second, config, grid);
    } catch (const DataError& e) {
      throw DataError("video " + video.video_id + ": " + e.what());
    }
  }
  return set;
}

void write_labels(const PseudoLabelSet& labels, const fs::path& dir) {
  fs::create_directories(dir / "arrays");
  json videos = json::array();
  for (const auto& [video_id, entry] : labels.by_video) {
    json arrays = json::object();
    const auto put = [&](const std::string& field, const std::vector<float>& values,
                         std::vector<int> shape) {
      const std::string rel = "arrays/" + video_id + "." + field + ".f32";
      write_f32_file(dir / rel, values);
      arrays[field] = json{{"file", rel},
                           {"shape", shape},
                           {"crc32", crc32_bytes(values.data(), values.size() * sizeof(float))}};
    };
    put("ego_score", {entry.ego[0], entry.ego[1]}, {2});
    put("object_score", entry.object, {static_cast<int>(entry.object.size())});
    put("hand_map", entry.maps.hand_map,
        {entry.maps.grid.t, entry.maps.grid.h, entry.maps.grid.w});
    put("object_map", entry.maps.object_map,
        {entry.maps.grid.t, entry.maps.grid.h, entry.maps.grid.w});
    videos.push_back(json{{"video_id", video_id}, {"arrays", std::move(arrays)}});
  }
  json manifest{{"schema_version", kLabelsSchemaVersion},
                {"kind", "pseudo_labels"},
                {"dtype", "float32"},
                {"endianness", "little"},
                {"grid_shape", {labels.grid.t, labels.grid.h, labels.grid.w}},
                {"object_classes", labels.object_classes},
                {"videos", std::move(videos)}};
  save_json_file(dir / "labels_manifest.json", manifest);
}

PseudoLabelSet read_labels(const fs::path& dir) {
  const json manifest = load_json_file(dir / "labels_manifest.json");
  if (!manifest.contains("schema_version") ||
      manifest.at("schema_version").get<int>() != kLabelsSchemaVersion) {
    throw VersionError("unsupported labels schema version in " + dir.string());
  }
  PseudoLabelSet set;
  const auto& g = manifest.at("grid_shape");
  set.grid = GridShape{g[0].get<int>(), g[1].get<int>(), g[2].get<int>()};
  set.object_classes = manifest.at("object_classes").get<int>();
  for (const auto& jv : manifest.at("videos")) {
    const std::string video_id = jv.at("video_id").get<std::string>();
    const auto& arrays = jv.at("arrays");
    const auto read_field = [&](const std::string& field) {
      const auto& meta = arrays.at(field);
      size_t count = 1;
      for (const auto& d : meta.at("shape")) count *= d.get<size_t>();
      return read_f32_file(dir / meta.at("file").get<std::string>(), count,
                           meta.at("crc32").get<uint32_t>());
    };
    PseudoLabels entry;
    const auto ego = read_field("ego_score");
    if (ego.size() != 2) throw DataError("bad ego_score shape for " + video_id);
    entry.ego = {ego[0], ego[1]};
    entry.object = read_field("object_score");
    entry.maps.grid = set.grid;
    entry.maps.hand_map = read_field("hand_map");
    entry.maps.object_map = read_field("object_map");
    if (entry.maps.hand_map.size() != set.grid.numel() ||
        entry.maps.object_map.size() != set.grid.numel())
      throw DataError("bad map shape for " + video_id);
    set.by_video[video_id] = std::move(entry);
  }
  return set;
}

bool operator==(const InteractionMap& a, const InteractionMap& b) {
  return a.grid == b.grid && a.hand_map == b.hand_map && a.object_map == b.object_map;
}

bool operator==(const PseudoLabels& a, const PseudoLabels& b) {
  return a.ego == b.ego && a.object == b.object && a.maps == b.maps;
}

bool operator==(const PseudoLabelSet& a, const PseudoLabelSet& b) {
  return a.grid == b.grid && a.object_classes == b.object_classes && a.by_video == b.by_video;
}

}  // namespace egokd
