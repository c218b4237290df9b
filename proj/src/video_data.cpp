#include "egokd/video_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "egokd/errors.hpp"
#include "egokd/io.hpp"
#include "egokd/rng.hpp"

namespace egokd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kDatasetSchemaVersion = 1;
constexpr double kTwoPi = 6.283185307179586476925286766559;

const char* split_prefix(Split s) {
  switch (s) {
    case Split::pretrain: return "pt";
    case Split::finetune_train: return "ftr";
    case Split::finetune_val: return "ftv";
  }
  return "??";
}

std::string make_video_id(Split s, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%05d", split_prefix(s), index);
  return buf;
}

}  // namespace

const char* to_string(BlobCategory c) {
  return c == BlobCategory::hand ? "hand" : "object";
}

const char* to_string(Split s) {
  switch (s) {
    case Split::pretrain: return "pretrain";
    case Split::finetune_train: return "finetune_train";
    case Split::finetune_val: return "finetune_val";
  }
  return "?";
}

BlobCategory blob_category_from_string(const std::string& s) {
  if (s == "hand") return BlobCategory::hand;
  if (s == "object") return BlobCategory::object;
  throw DataError("unknown blob category: " + s);
}

Split split_from_string(const std::string& s) {
  if (s == "pretrain") return Split::pretrain;
  if (s == "finetune_train") return Split::finetune_train;
  if (s == "finetune_val") return Split::finetune_val;
  throw DataError("unknown split: " + s);
}

void DatasetSpec::validate() const {
  if (n_pretrain < 0 || n_finetune_train < 0 || n_finetune_val < 0)
    throw DataError("video counts must be nonnegative");
  if (frame_count < 1 || channels != 3 || height < 4 || width < 4)
    throw DataError("invalid frame geometry");
  if (action_classes < 1 || object_classes < 2)
    throw DataError("need at least 1 action class and 2 object classes");
  if (hand_blobs < 0 || object_blobs < 0 || hand_blobs + object_blobs < 1)
    throw DataError("need at least one blob per video");
  if (extent_min <= 0 || extent_max < extent_min)
    throw DataError("invalid blob extent range");
  if (intensity_min <= 0 || intensity_max > 1 || intensity_max < intensity_min)
    throw DataError("invalid intensity range");
  if (motion_amplitude < 0 || shake_max < 0 || background < 0 || background >= 1)
    throw DataError("invalid motion/background parameters");
  // Blob extent plus motion plus shake must leave room inside the unit square,
  // and the blob must span at least one pixel.
  const double margin = extent_max + motion_amplitude + shake_max;
  if (margin >= 0.5)
    throw DataError("frame cannot contain blob extents: extent+amplitude+shake >= 0.5");
  if (2.0 * extent_min * std::min(width, height) < 1.0)
    throw DataError("frame resolution cannot contain blob extents: blobs smaller than a pixel");
}

std::vector<const VideoRecord*> Dataset::split_videos(Split s) const {
  std::vector<const VideoRecord*> out;
  for (const auto& v : videos)
    if (v.split == s) out.push_back(&v);
  return out;
}

const VideoRecord* Dataset::find(const std::string& video_id) const {
  for (const auto& v : videos)
    if (v.video_id == video_id) return &v;
  return nullptr;
}

std::array<double, 3> object_color(int object_class, int object_classes) {
  const double a = kTwoPi * object_class / object_classes;
  return {0.5 + 0.5 * std::cos(a), 0.5 + 0.5 * std::cos(a + kTwoPi / 3.0),
          0.5 + 0.5 * std::cos(a + 2.0 * kTwoPi / 3.0)};
}

std::array<double, 3> hand_color() { return {0.95, 0.95, 0.95}; }

namespace {

void render_video_frames(const DatasetSpec& spec, VideoRecord& video) {
  const int T = spec.frame_count, H = spec.height, W = spec.width;
  video.frames.assign(static_cast<size_t>(T) * 3 * H * W, 0.0f);
  for (int t = 0; t < T; ++t) {
    float* frame = video.frames.data() + video.frame_numel() * t;
    for (size_t i = 0; i < video.frame_numel(); ++i) frame[i] = static_cast<float>(spec.background);
    for (const auto& blob : video.blob_tracks) {
      const auto color = blob.category == BlobCategory::hand
                             ? hand_color()
                             : object_color(blob.object_class, spec.object_classes);
      const double cx = blob.center_path[t][0], cy = blob.center_path[t][1];
      const double rx = blob.half_extent[0], ry = blob.half_extent[1];
      for (int py = 0; py < H; ++py) {
        const double v = (py + 0.5) / H;
        if (std::abs(v - cy) > ry) continue;
        for (int px = 0; px < W; ++px) {
          const double u = (px + 0.5) / W;
          if (std::abs(u - cx) > rx) continue;
          for (int c = 0; c < 3; ++c) {
            float& dst = frame[(static_cast<size_t>(c) * H + py) * W + px];
            dst = static_cast<float>(std::min(1.0, dst + color[c] * blob.intensity));
          }
        }
      }
    }
  }
}

VideoRecord make_video(const DatasetSpec& spec, uint64_t seed, Split split, int index) {
  VideoRecord video;
  video.video_id = make_video_id(split, index);
  video.split = split;
  video.frame_count = spec.frame_count;
  video.channels = spec.channels;
  video.height = spec.height;
  video.width = spec.width;

  Rng rng(derive_seed(seed, "video", hash_str(video.video_id)));
  const int pattern = rng.uniform_int(0, spec.action_classes - 1);
  video.action_label = pattern;
  video.ego_param = rng.uniform();

  // Motion pattern: oscillation along x or y with 1 + pattern/2 cycles over T.
  const int axis = pattern % 2;
  const double cycles = 1.0 + pattern / 2;

  // Object classes are distinct per video while they fit the palette.
  std::vector<int> class_pool(spec.object_classes);
  for (int c = 0; c < spec.object_classes; ++c) class_pool[c] = c;
  for (int i = static_cast<int>(class_pool.size()) - 1; i > 0; --i) {
    std::swap(class_pool[i], class_pool[rng.uniform_int(0, i)]);
  }

  const int T = spec.frame_count;
  const int n_blobs = spec.hand_blobs + spec.object_blobs;
  for (int b = 0; b < n_blobs; ++b) {
    BlobTrack blob;
    if (b < spec.hand_blobs) {
      blob.category = BlobCategory::hand;
      blob.object_class = -1;
    } else {
      blob.category = BlobCategory::object;
      const int k = b - spec.hand_blobs;
      blob.object_class = k < spec.object_classes ? class_pool[k]
                                                  : rng.uniform_int(0, spec.object_classes - 1);
    }
    blob.half_extent[0] = rng.uniform(spec.extent_min, spec.extent_max);
    blob.half_extent[1] = rng.uniform(spec.extent_min, spec.extent_max);
    blob.intensity = rng.uniform(spec.intensity_min, spec.intensity_max);
    const double phase = rng.uniform(0.0, kTwoPi);
    const double mx = blob.half_extent[0] + (axis == 0 ? spec.motion_amplitude : 0.0) +
                      spec.shake_max * video.ego_param;
    const double my = blob.half_extent[1] + (axis == 1 ? spec.motion_amplitude : 0.0) +
                      spec.shake_max * video.ego_param;
    const double cx0 = rng.uniform(mx, 1.0 - mx);
    const double cy0 = rng.uniform(my, 1.0 - my);

    blob.center_path.resize(T);
    for (int t = 0; t < T; ++t) {
      const double osc = spec.motion_amplitude * std::sin(kTwoPi * cycles * t / T + phase);
      blob.center_path[t] = {axis == 0 ? cx0 + osc : cx0, axis == 1 ? cy0 + osc : cy0};
    }
    video.blob_tracks.push_back(std::move(blob));
  }

  // Shared per-frame camera shake, scaled by the planted ego parameter.
  Rng shake_rng(derive_seed(seed, "shake", hash_str(video.video_id)));
  for (int t = 0; t < T; ++t) {
    const double dx = video.ego_param * spec.shake_max * shake_rng.uniform(-1.0, 1.0);
    const double dy = video.ego_param * spec.shake_max * shake_rng.uniform(-1.0, 1.0);
    for (auto& blob : video.blob_tracks) {
      blob.center_path[t][0] = std::clamp(blob.center_path[t][0] + dx, 0.0, 1.0);
      blob.center_path[t][1] = std::clamp(blob.center_path[t][1] + dy, 0.0, 1.0);
    }
  }

  render_video_frames(spec, video);
  return video;
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec, uint64_t seed) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  const std::array<std::pair<Split, int>, 3> splits = {
      std::pair{Split::pretrain, spec.n_pretrain},
      std::pair{Split::finetune_train, spec.n_finetune_train},
      std::pair{Split::finetune_val, spec.n_finetune_val}};
  for (const auto& [split, count] : splits) {
    for (int i = 0; i < count; ++i) {
      ds.videos.push_back(make_video(spec, seed, split, i));
    }
  }
  return ds;
}

std::vector<Clip> sample_clips(const VideoRecord& video, int n_clips, int clip_length,
                               int stride, ClipMode mode, uint64_t seed) {
  if (n_clips < 1) throw DataError("n_clips must be >= 1");
  if (clip_length < 1 || stride < 1) throw DataError("clip_length and stride must be >= 1");
  const int T = video.frame_count;
  const int span = T - clip_length * stride;
  if (span < 0) {
    throw DataError("clip does not fit: clip_length*stride=" +
                    std::to_string(clip_length * stride) + " > T=" + std::to_string(T) +
                    " for video " + video.video_id);
  }

  std::vector<int> starts(n_clips);
  if (mode == ClipMode::uniform) {
    if (n_clips == 1) {
      starts[0] = span / 2;
    } else {
      for (int k = 0; k < n_clips; ++k) {
        starts[k] = static_cast<int>(
            std::llround(static_cast<double>(k) * span / (n_clips - 1)));
      }
    }
  } else {
    Rng rng(derive_seed(seed, "clips", hash_str(video.video_id)));
    for (int k = 0; k < n_clips; ++k) starts[k] = rng.uniform_int(0, span);
  }

  std::vector<Clip> clips;
  clips.reserve(n_clips);
  const size_t frame_sz = video.frame_numel();
  for (int start : starts) {
    Clip clip;
    clip.video_id = video.video_id;
    clip.ego_param = video.ego_param;
    clip.channels = video.channels;
    clip.height = video.height;
    clip.width = video.width;
    clip.frame_indices.resize(clip_length);
    clip.frames.resize(static_cast<size_t>(clip_length) * frame_sz);
    for (int j = 0; j < clip_length; ++j) {
      const int fi = start + j * stride;
      clip.frame_indices[j] = fi;
      std::copy_n(video.frame_ptr(fi), frame_sz, clip.frames.data() + frame_sz * j);
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

std::vector<int> even_frame_indices(int frame_count, int n_frames) {
  if (n_frames < 1 || n_frames > frame_count)
    throw DataError("n_frames must be in [1, T]");
  std::vector<int> idx(n_frames);
  for (int k = 0; k < n_frames; ++k) {
    idx[k] = static_cast<int>((2ll * k + 1) * frame_count / (2ll * n_frames));
  }
  return idx;
}

std::vector<float> object_presence(const VideoRecord& video, int object_classes) {
  std::vector<float> presence(object_classes, 0.0f);
  for (const auto& blob : video.blob_tracks) {
    if (blob.category == BlobCategory::object && blob.object_class >= 0 &&
        blob.object_class < object_classes) {
      presence[blob.object_class] = 1.0f;
    }
  }
  return presence;
}

int primary_object_class(const VideoRecord& video) {
  for (const auto& blob : video.blob_tracks) {
    if (blob.category == BlobCategory::object) return blob.object_class;
  }
  return -1;
}

std::vector<float> downstream_multilabel(const VideoRecord& video, int action_classes,
                                         int object_classes) {
  std::vector<float> label(static_cast<size_t>(action_classes) + object_classes, 0.0f);
  if (video.action_label >= 0 && video.action_label < action_classes) {
    label[video.action_label] = 1.0f;
  }
  const auto presence = object_presence(video, object_classes);
  for (int c = 0; c < object_classes; ++c) label[action_classes + c] = presence[c];
  return label;
}

namespace {

json spec_to_json(const DatasetSpec& s) {
  return json{{"n_pretrain", s.n_pretrain},
              {"n_finetune_train", s.n_finetune_train},
              {"n_finetune_val", s.n_finetune_val},
              {"frame_count", s.frame_count},
              {"channels", s.channels},
              {"height", s.height},
              {"width", s.width},
              {"action_classes", s.action_classes},
              {"object_classes", s.object_classes},
              {"hand_blobs", s.hand_blobs},
              {"object_blobs", s.object_blobs},
              {"extent_min", s.extent_min},
              {"extent_max", s.extent_max},
              {"motion_amplitude", s.motion_amplitude},
              {"shake_max", s.shake_max},
              {"intensity_min", s.intensity_min},
              {"intensity_max", s.intensity_max},
              {"background", s.background}};
}

DatasetSpec spec_from_json(const json& j) {
  DatasetSpec s;
  s.n_pretrain = j.at("n_pretrain").get<int>();
  s.n_finetune_train = j.at("n_finetune_train").get<int>();
  s.n_finetune_val = j.at("n_finetune_val").get<int>();
  s.frame_count = j.at("frame_count").get<int>();
  s.channels = j.at("channels").get<int>();
  s.height = j.at("height").get<int>();
  s.width = j.at("width").get<int>();
  s.action_classes = j.at("action_classes").get<int>();
  s.object_classes = j.at("object_classes").get<int>();
  s.hand_blobs = j.at("hand_blobs").get<int>();
  s.object_blobs = j.at("object_blobs").get<int>();
  s.extent_min = j.at("extent_min").get<double>();
  s.extent_max = j.at("extent_max").get<double>();
  s.motion_amplitude = j.at("motion_amplitude").get<double>();
  s.shake_max = j.at("shake_max").get<double>();
  s.intensity_min = j.at("intensity_min").get<double>();
  s.intensity_max = j.at("intensity_max").get<double>();
  s.background = j.at("background").get<double>();
  return s;
}

json blob_to_json(const BlobTrack& b) {
  json centers = json::array();
  for (const auto& c : b.center_path) centers.push_back({c[0], c[1]});
  return json{{"category", to_string(b.category)},
              {"object_class", b.object_class},
              {"intensity", b.intensity},
              {"half_extent", {b.half_extent[0], b.half_extent[1]}},
              {"center_path", std::move(centers)}};
}

BlobTrack blob_from_json(const json& j) {
  BlobTrack b;
  b.category = blob_category_from_string(j.at("category").get<std::string>());
  b.object_class = j.at("object_class").get<int>();
  b.intensity = j.at("intensity").get<double>();
  b.half_extent = {j.at("half_extent")[0].get<double>(), j.at("half_extent")[1].get<double>()};
  for (const auto& c : j.at("center_path")) {
    b.center_path.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  return b;
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "tensors");
  json videos = json::array();
  for (const auto& v : dataset.videos) {
    const std::string tensor_rel = "tensors/" + v.video_id + ".f32";
    write_f32_file(dir / tensor_rel, v.frames);
    json blobs = json::array();
    for (const auto& b : v.blob_tracks) blobs.push_back(blob_to_json(b));
    videos.push_back(json{{"video_id", v.video_id},
                          {"split", to_string(v.split)},
                          {"action_label", v.action_label},
                          {"ego_param", v.ego_param},
                          {"frames_shape", {v.frame_count, v.channels, v.height, v.width}},
                          {"tensor_file", tensor_rel},
                          {"crc32", crc32_bytes(v.frames.data(), v.frames.size() * sizeof(float))},
                          {"blob_tracks", std::move(blobs)}});
  }
  json manifest{{"schema_version", kDatasetSchemaVersion},
                {"kind", "dataset"},
                {"dtype", "float32"},
                {"endianness", "little"},
                {"spec", spec_to_json(dataset.spec)},
                {"videos", std::move(videos)}};
  save_json_file(dir / "manifest.json", manifest);
}

Dataset read_dataset(const fs::path& dir) {
  const json manifest = load_json_file(dir / "manifest.json");
  if (!manifest.contains("schema_version") ||
      manifest.at("schema_version").get<int>() != kDatasetSchemaVersion) {
    throw VersionError("unsupported dataset schema version in " + dir.string());
  }
  Dataset ds;
  ds.spec = spec_from_json(manifest.at("spec"));
  for (const auto& jv : manifest.at("videos")) {
    VideoRecord v;
    v.video_id = jv.at("video_id").get<std::string>();
    v.split = split_from_string(jv.at("split").get<std::string>());
    v.action_label = jv.at("action_label").get<int>();
    v.ego_param = jv.at("ego_param").get<double>();
    const auto& shape = jv.at("frames_shape");
    v.frame_count = shape[0].get<int>();
    v.channels = shape[1].get<int>();
    v.height = shape[2].get<int>();
    v.width = shape[3].get<int>();
    const size_t count = static_cast<size_t>(v.frame_count) * v.channels * v.height * v.width;
    v.frames = read_f32_file(dir / jv.at("tensor_file").get<std::string>(), count,
                             jv.at("crc32").get<uint32_t>());
    for (const auto& jb : jv.at("blob_tracks")) v.blob_tracks.push_back(blob_from_json(jb));
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

bool operator==(const BlobTrack& a, const BlobTrack& b) {
  return a.category == b.category && a.object_class == b.object_class &&
         a.intensity == b.intensity && a.half_extent == b.half_extent &&
         a.center_path == b.center_path;
}

bool operator==(const VideoRecord& a, const VideoRecord& b) {
  return a.video_id == b.video_id && a.split == b.split && a.action_label == b.action_label &&
         a.ego_param == b.ego_param && a.frame_count == b.frame_count &&
         a.channels == b.channels && a.height == b.height && a.width == b.width &&
         a.frames == b.frames && a.blob_tracks == b.blob_tracks;
}

bool operator==(const DatasetSpec& a, const DatasetSpec& b) {
  return spec_to_json(a) == spec_to_json(b);
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.spec == b.spec && a.videos == b.videos;
}

}  // namespace egokd
