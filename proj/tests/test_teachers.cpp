#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "egokd/errors.hpp"
#include "egokd/teachers.hpp"
#include "egokd/video_data.hpp"
#include "test_util.hpp"

using namespace egokd;
using testutil::TempDir;

namespace {

Dataset small_dataset(int n = 4, uint64_t seed = 17) {
  return generate_dataset(testutil::tiny_spec(n, 0, 0), seed);
}

Clip clip_with_ego(double ego_param) {
  const Dataset ds = small_dataset(1);
  auto clips = sample_clips(ds.videos.front(), 1, 8, 1, ClipMode::uniform, 0);
  clips.front().ego_param = ego_param;
  return clips.front();
}

// A video with exactly one object blob of the given class, centered.
VideoRecord single_blob_video(int object_class, double rx = 0.1, double ry = 0.1,
                              double intensity = 1.0) {
  VideoRecord v;
  v.video_id = "synthetic";
  v.frame_count = 4;
  v.channels = 3;
  v.height = 16;
  v.width = 16;
  v.frames.assign(static_cast<size_t>(4) * 3 * 16 * 16, 0.0f);
  BlobTrack b;
  b.category = BlobCategory::object;
  b.object_class = object_class;
  b.intensity = intensity;
  b.half_extent = {rx, ry};
  b.center_path.assign(4, {0.5, 0.5});
  v.blob_tracks.push_back(b);
  return v;
}

}  // namespace

TEST_CASE("ego teacher: symmetric at ego_param 0.5") {
  const AnalyticEgoTeacher teacher(4.0);
  const auto logits = teacher.ego_logits(clip_with_ego(0.5));
  CHECK(logits[0] == logits[1]);
}

TEST_CASE("ego teacher: logit gap is gain * (ego_param - 0.5)") {
  const AnalyticEgoTeacher teacher(4.0);
  const auto logits = teacher.ego_logits(clip_with_ego(1.0));
  CHECK(logits[1] - logits[0] == doctest::Approx(2.0).epsilon(1e-12));
  const auto low = teacher.ego_logits(clip_with_ego(0.0));
  CHECK(low[1] - low[0] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("ego teacher: identical for clips sharing a video") {
  const Dataset ds = small_dataset(1);
  const AnalyticEgoTeacher teacher;
  const auto clips = sample_clips(ds.videos.front(), 3, 8, 1, ClipMode::uniform, 0);
  const auto first = teacher.ego_logits(clips[0]);
  for (const auto& clip : clips) {
    const auto logits = teacher.ego_logits(clip);
    CHECK(logits[0] == first[0]);
    CHECK(logits[1] == first[1]);
  }
}

TEST_CASE("object teacher: uniform logits without object blobs") {
  VideoRecord v = single_blob_video(0);
  v.blob_tracks.clear();
  const AnalyticObjectTeacher teacher(6);
  const auto logits = teacher.object_logits(v, 0);
  REQUIRE(logits.size() == 6);
  for (double l : logits) CHECK(l == 0.0);
}

TEST_CASE("object teacher: argmax follows the planted class") {
  const AnalyticObjectTeacher teacher(6);
  for (int cls = 0; cls < 6; ++cls) {
    const VideoRecord v = single_blob_video(cls);
    const auto logits = teacher.object_logits(v, 1);
    const int argmax = static_cast<int>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    CHECK(argmax == cls);
    CHECK(logits[cls] == doctest::Approx(50.0 * 0.2 * 0.2 * 1.0).epsilon(1e-12));
  }
}

TEST_CASE("object teacher: deterministic across calls") {
  const Dataset ds = small_dataset(2);
  const AnalyticObjectTeacher teacher(6);
  for (const auto& v : ds.videos) {
    for (int t = 0; t < v.frame_count; ++t) {
      CHECK(teacher.object_logits(v, t) == teacher.object_logits(v, t));
    }
  }
}

TEST_CASE("detection teacher: miss rate 1 empties every frame") {
  const Dataset ds = small_dataset(2);
  DetectionNoise noise;
  noise.miss_rate = 1.0;
  const AnalyticDetectionTeacher teacher(noise);
  for (const auto& v : ds.videos) {
    const auto frames = teacher.detect(v, 5);
    REQUIRE(frames.size() == static_cast<size_t>(v.frame_count));
    for (const auto& f : frames) CHECK(f.boxes.empty());
  }
}

TEST_CASE("detection teacher: noise-free boxes equal blob rectangles") {
  const Dataset ds = small_dataset(2);
  DetectionNoise noise;
  noise.jitter_sigma = 0.0;
  noise.miss_rate = 0.0;
  const AnalyticDetectionTeacher teacher(noise);
  for (const auto& v : ds.videos) {
    const auto frames = teacher.detect(v, 5);
    for (const auto& f : frames) {
      REQUIRE(f.boxes.size() == v.blob_tracks.size());
      for (size_t b = 0; b < f.boxes.size(); ++b) {
        const auto& blob = v.blob_tracks[b];
        const auto& c = blob.center_path[f.frame_index];
        CHECK(f.boxes[b].x1 == std::clamp(c[0] - blob.half_extent[0], 0.0, 1.0));
        CHECK(f.boxes[b].x2 == std::clamp(c[0] + blob.half_extent[0], 0.0, 1.0));
        CHECK(f.boxes[b].y1 == std::clamp(c[1] - blob.half_extent[1], 0.0, 1.0));
        CHECK(f.boxes[b].y2 == std::clamp(c[1] + blob.half_extent[1], 0.0, 1.0));
        CHECK(f.boxes[b].category == blob.category);
      }
    }
  }
}

TEST_CASE("detection teacher: fixed seed reproduces the stream, boxes stay valid") {
  const Dataset ds = small_dataset(3);
  const AnalyticDetectionTeacher teacher;
  for (const auto& v : ds.videos) {
    const auto a = teacher.detect(v, 123);
    const auto b = teacher.detect(v, 123);
    CHECK(a == b);
    const auto c = teacher.detect(v, 124);
    CHECK_FALSE(a == c);
    for (const auto& f : a) {
      for (const auto& box : f.boxes) {
        CHECK(box.x1 >= 0.0);
        CHECK(box.x2 <= 1.0);
        CHECK(box.y1 >= 0.0);
        CHECK(box.y2 <= 1.0);
        CHECK(box.x1 < box.x2);
        CHECK(box.y1 < box.y2);
        CHECK(box.score >= 0.0f);
        CHECK(box.score <= 1.0f);
      }
    }
  }
}

TEST_CASE("teachers never read the action label") {
  Dataset ds = small_dataset(3);
  const AnalyticEgoTeacher ego;
  const AnalyticObjectTeacher obj(6);
  const AnalyticDetectionTeacher det;

  std::vector<std::array<double, 2>> ego_before;
  std::vector<std::vector<double>> obj_before;
  std::vector<std::vector<DetectionFrame>> det_before;
  for (const auto& v : ds.videos) {
    ego_before.push_back(ego.ego_logits(sample_clips(v, 1, 8, 1, ClipMode::uniform, 0)[0]));
    obj_before.push_back(obj.object_logits(v, 0));
    det_before.push_back(det.detect(v, 9));
  }
  // permute the action labels
  for (auto& v : ds.videos) v.action_label = (v.action_label + 1) % 4;
  for (size_t i = 0; i < ds.videos.size(); ++i) {
    const auto& v = ds.videos[i];
    CHECK(ego.ego_logits(sample_clips(v, 1, 8, 1, ClipMode::uniform, 0)[0]) == ego_before[i]);
    CHECK(obj.object_logits(v, 0) == obj_before[i]);
    CHECK(det.detect(v, 9) == det_before[i]);
  }
}

TEST_CASE("detections JSONL round-trips") {
  const Dataset ds = small_dataset(2);
  const AnalyticDetectionTeacher teacher;
  std::vector<DetectionFrame> all;
  for (const auto& v : ds.videos) {
    const auto frames = teacher.detect(v, 77);
    all.insert(all.end(), frames.begin(), frames.end());
  }
  TempDir tmp("jsonl");
  write_detections_jsonl(tmp.path / "det.jsonl", all);
  const auto back = read_detections_jsonl(tmp.path / "det.jsonl");
  CHECK(back == all);
}

TEST_CASE("detections JSONL rejects malformed and degenerate input") {
  TempDir tmp("jsonl_bad");
  {
    std::ofstream out(tmp.path / "bad.jsonl");
    out << "{not json}\n";
  }
  CHECK_THROWS_AS(read_detections_jsonl(tmp.path / "bad.jsonl"), DataError);
  {
    std::ofstream out(tmp.path / "degen.jsonl");
    out << R"({"video_id":"v","frame_index":0,"boxes":[{"x1":0.5,"y1":0.1,"x2":0.5,"y2":0.2,"score":0.9,"category":"hand"}]})"
        << "\n";
  }
  CHECK_THROWS_AS(read_detections_jsonl(tmp.path / "degen.jsonl"), DataError);
  CHECK_THROWS_AS(read_detections_jsonl(tmp.path / "missing.jsonl"), IoError);
}
