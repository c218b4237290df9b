#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace egokd {

enum class BlobCategory { hand, object };
enum class Split { pretrain, finetune_train, finetune_val };

const char* to_string(BlobCategory c);
const char* to_string(Split s);
BlobCategory blob_category_from_string(const std::string& s);
Split split_from_string(const std::string& s);

// A planted moving rectangle. Object blobs carry a palette class that drives
// both their rendered color and the downstream labels; hands use class -1.
struct BlobTrack {
  BlobCategory category = BlobCategory::object;
  int object_class = -1;
  double intensity = 1.0;                             // (0, 1]
  std::array<double, 2> half_extent{0.1, 0.1};        // (rx, ry), normalized
  std::vector<std::array<double, 2>> center_path;     // (cx, cy) per frame, in [0,1]^2
};

struct VideoRecord {
  std::string video_id;
  Split split = Split::pretrain;
  int action_label = 0;
  double ego_param = 0.0;  // planted camera-shake intensity in [0,1]
  int frame_count = 0, channels = 0, height = 0, width = 0;
  std::vector<float> frames;  // [T, C, H, W], values in [0,1]
  std::vector<BlobTrack> blob_tracks;

  size_t frame_numel() const {
    return static_cast<size_t>(channels) * height * width;
  }
  const float* frame_ptr(int t) const { return frames.data() + frame_numel() * t; }
};

struct Clip {
  std::string video_id;
  double ego_param = 0.0;  // carried from the source video
  std::vector<int> frame_indices;
  int channels = 0, height = 0, width = 0;
  std::vector<float> frames;  // [clip_length, C, H, W]
};

enum class ClipMode { uniform, random };

struct DatasetSpec {
  int n_pretrain = 400;
  int n_finetune_train = 200;
  int n_finetune_val = 80;
  int frame_count = 16;
  int channels = 3;
  int height = 32;
  int width = 32;
  int action_classes = 4;   // motion patterns: axis x/y crossed with cycle count
  int object_classes = 6;   // palette size for object blobs
  int hand_blobs = 1;
  int object_blobs = 2;
  double extent_min = 0.06;
  double extent_max = 0.12;
  double motion_amplitude = 0.15;
  double shake_max = 0.05;
  double intensity_min = 0.6;
  double intensity_max = 1.0;
  double background = 0.05;

  void validate() const;  // throws DataError when blobs cannot fit the frame
};

struct Dataset {
  DatasetSpec spec;
  std::vector<VideoRecord> videos;

  std::vector<const VideoRecord*> split_videos(Split s) const;
  const VideoRecord* find(const std::string& video_id) const;
};

// Rendered color of an object class (a fixed hue wheel) or of a hand blob.
std::array<double, 3> object_color(int object_class, int object_classes);
std::array<double, 3> hand_color();

Dataset generate_dataset(const DatasetSpec& spec, uint64_t seed);

std::vector<Clip> sample_clips(const VideoRecord& video, int n_clips, int clip_length,
                               int stride, ClipMode mode, uint64_t seed);

// Evenly placed frame indices (cell-center convention): floor((2k+1)*T/(2n)).
std::vector<int> even_frame_indices(int frame_count, int n_frames);

// Downstream label views derived from the planted structure.
std::vector<float> object_presence(const VideoRecord& video, int object_classes);
int primary_object_class(const VideoRecord& video);
// Composite multi-label space: one class per motion pattern followed by one
// class per object class, the way activity labels compose a movement with
// the things involved.
std::vector<float> downstream_multilabel(const VideoRecord& video, int action_classes,
                                         int object_classes);

// Directory archive: manifest.json + tensors/<video_id>.f32 (LE float32, CRC32).
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

bool operator==(const BlobTrack& a, const BlobTrack& b);
bool operator==(const VideoRecord& a, const VideoRecord& b);
bool operator==(const DatasetSpec& a, const DatasetSpec& b);
bool operator==(const Dataset& a, const Dataset& b);

}  // namespace egokd
