#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include <json.hpp>

#include "egokd/errors.hpp"
#include "egokd/io.hpp"
#include "egokd/rng.hpp"
#include "egokd/video_data.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace egokd;
using testutil::TempDir;

TEST_CASE("generate_dataset: empty spec gives empty list") {
  DatasetSpec spec = testutil::tiny_spec(0, 0, 0);
  const Dataset ds = generate_dataset(spec, 7);
  CHECK(ds.videos.empty());
}

TEST_CASE("generate_dataset: deterministic, byte-identical archives") {
  DatasetSpec spec = testutil::tiny_spec(5, 2, 2);
  TempDir tmp("vd_det");
  write_dataset(generate_dataset(spec, 3), tmp.path / "a");
  write_dataset(generate_dataset(spec, 3), tmp.path / "b");
  CHECK(testutil::same_tree(tmp.path / "a", tmp.path / "b"));

  const Dataset other = generate_dataset(spec, 4);
  const Dataset base = generate_dataset(spec, 3);
  CHECK_FALSE(base == other);
}

TEST_CASE("generate_dataset: frames match the scalar re-render oracle") {
  DatasetSpec spec = testutil::tiny_spec(10, 0, 0);
  const Dataset ds = generate_dataset(spec, 11);
  REQUIRE(ds.videos.size() == 10);
  for (const auto& v : ds.videos) {
    for (int t = 0; t < v.frame_count; ++t) {
      const auto expected =
          oracle::render_frame(v, t, spec.background, spec.object_classes);
      const float* got = v.frame_ptr(t);
      for (size_t i = 0; i < expected.size(); ++i) {
        REQUIRE(got[i] == expected[i]);
      }
    }
  }
}

TEST_CASE("generate_dataset: planted invariants hold") {
  DatasetSpec spec = testutil::tiny_spec(20, 0, 0);
  const Dataset ds = generate_dataset(spec, 5);
  for (const auto& v : ds.videos) {
    CHECK(v.action_label >= 0);
    CHECK(v.action_label < spec.action_classes);
    CHECK(v.ego_param >= 0.0);
    CHECK(v.ego_param <= 1.0);
    for (const auto& b : v.blob_tracks) {
      CHECK(b.half_extent[0] > 0);
      CHECK(b.half_extent[1] > 0);
      CHECK(b.center_path.size() == static_cast<size_t>(v.frame_count));
      for (const auto& c : b.center_path) {
        CHECK(c[0] >= 0.0);
        CHECK(c[0] <= 1.0);
        CHECK(c[1] >= 0.0);
        CHECK(c[1] <= 1.0);
      }
    }
    for (float f : v.frames) {
      CHECK(std::isfinite(f));
      CHECK(f >= 0.0f);
      CHECK(f <= 1.0f);
    }
  }
}

TEST_CASE("generate_dataset: rejects blobs that cannot fit") {
  DatasetSpec spec = testutil::tiny_spec(1, 0, 0);
  spec.extent_max = 0.4;
  spec.motion_amplitude = 0.2;  // 0.4 + 0.2 + 0.05 >= 0.5
  CHECK_THROWS_AS(generate_dataset(spec, 1), DataError);

  DatasetSpec small = testutil::tiny_spec(1, 0, 0);
  small.height = 4;
  small.width = 4;  // blobs smaller than one pixel
  CHECK_THROWS_AS(generate_dataset(small, 1), DataError);
}

namespace {

VideoRecord make_video_for_clips(int frames) {
  DatasetSpec spec = testutil::tiny_spec(1, 0, 0);
  spec.frame_count = frames;
  return generate_dataset(spec, 9).videos.front();
}

}  // namespace

TEST_CASE("sample_clips: single full-length placement") {
  const VideoRecord v = make_video_for_clips(8);
  const auto clips = sample_clips(v, 1, 8, 1, ClipMode::uniform, 0);
  REQUIRE(clips.size() == 1);
  REQUIRE(clips[0].frame_indices.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(clips[0].frame_indices[i] == i);
  CHECK(clips[0].ego_param == v.ego_param);
}

TEST_CASE("sample_clips: uniform placements are evenly spaced") {
  const VideoRecord v = make_video_for_clips(64);
  const int n = 10, L = 8, stride = 1;
  const auto clips = sample_clips(v, n, L, stride, ClipMode::uniform, 0);
  REQUIRE(clips.size() == static_cast<size_t>(n));
  const int span = 64 - L * stride;
  std::vector<int> expected;
  for (int k = 0; k < n; ++k) {
    expected.push_back(static_cast<int>(std::llround(static_cast<double>(k) * span / (n - 1))));
  }
  CHECK(clips.front().frame_indices.front() == 0);
  CHECK(clips.back().frame_indices.front() == span);
  for (int k = 0; k < n; ++k) {
    CHECK(clips[k].frame_indices.front() == expected[k]);
    for (int j = 1; j < L; ++j) {
      CHECK(clips[k].frame_indices[j] == clips[k].frame_indices[j - 1] + stride);
    }
  }
}

TEST_CASE("sample_clips: random mode is deterministic under a fixed seed") {
  const VideoRecord v = make_video_for_clips(32);
  const auto a = sample_clips(v, 5, 8, 2, ClipMode::random, 41);
  const auto b = sample_clips(v, 5, 8, 2, ClipMode::random, 41);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].frame_indices == b[i].frame_indices);
    CHECK(a[i].frames == b[i].frames);
  }
  const auto c = sample_clips(v, 5, 8, 2, ClipMode::random, 42);
  bool all_same = true;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].frame_indices != c[i].frame_indices) all_same = false;
  }
  CHECK_FALSE(all_same);
}

TEST_CASE("sample_clips: clip longer than video is an error") {
  const VideoRecord v = make_video_for_clips(8);
  CHECK_THROWS_AS(sample_clips(v, 1, 9, 1, ClipMode::uniform, 0), DataError);
  CHECK_THROWS_AS(sample_clips(v, 1, 8, 2, ClipMode::uniform, 0), DataError);
}

TEST_CASE("sample_clips: uniform clips cover every frame when n >= T/L") {
  for (int T : {16, 24, 64}) {
    VideoRecord v = make_video_for_clips(T);
    const int L = 8;
    for (int n : {T / L, T / L + 3, 10}) {
      const auto clips = sample_clips(v, n, L, 1, ClipMode::uniform, 0);
      std::set<int> covered;
      for (const auto& c : clips) {
        for (int fi : c.frame_indices) covered.insert(fi);
      }
      for (int t = 0; t < T; ++t) {
        CAPTURE(T);
        CAPTURE(n);
        REQUIRE(covered.count(t) == 1);
      }
    }
  }
}

TEST_CASE("even_frame_indices") {
  CHECK(even_frame_indices(16, 16) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12,
                                                       13, 14, 15});
  CHECK(even_frame_indices(16, 2) == std::vector<int>{4, 12});
  CHECK(even_frame_indices(16, 1) == std::vector<int>{8});
  CHECK_THROWS_AS(even_frame_indices(4, 5), DataError);
}

TEST_CASE("dataset archive round-trips exactly") {
  DatasetSpec spec = testutil::tiny_spec(3, 1, 1);
  const Dataset ds = generate_dataset(spec, 21);
  TempDir tmp("vd_rt");
  write_dataset(ds, tmp.path / "d");
  const Dataset back = read_dataset(tmp.path / "d");
  CHECK(ds == back);
}

TEST_CASE("empty dataset archive round-trips") {
  DatasetSpec spec = testutil::tiny_spec(0, 0, 0);
  const Dataset ds = generate_dataset(spec, 0);
  TempDir tmp("vd_empty");
  write_dataset(ds, tmp.path / "d");
  const Dataset back = read_dataset(tmp.path / "d");
  CHECK(back.videos.empty());
  CHECK(ds == back);
}

TEST_CASE("corrupting one payload byte fails the checksum") {
  DatasetSpec spec = testutil::tiny_spec(2, 0, 0);
  TempDir tmp("vd_crc");
  write_dataset(generate_dataset(spec, 2), tmp.path / "d");
  testutil::flip_one_byte(tmp.path / "d" / "tensors" / "pt_00000.f32", 100);
  CHECK_THROWS_AS(read_dataset(tmp.path / "d"), ChecksumError);
}

TEST_CASE("truncated payload is reported distinctly") {
  DatasetSpec spec = testutil::tiny_spec(1, 0, 0);
  TempDir tmp("vd_trunc");
  write_dataset(generate_dataset(spec, 2), tmp.path / "d");
  const auto file = tmp.path / "d" / "tensors" / "pt_00000.f32";
  const auto bytes = read_file_bytes(file);
  write_file_bytes(file, bytes.data(), bytes.size() - 7);
  CHECK_THROWS_AS(read_dataset(tmp.path / "d"), TruncatedError);
}

TEST_CASE("schema version mismatch is reported distinctly") {
  DatasetSpec spec = testutil::tiny_spec(1, 0, 0);
  TempDir tmp("vd_ver");
  write_dataset(generate_dataset(spec, 2), tmp.path / "d");
  auto manifest = load_json_file(tmp.path / "d" / "manifest.json");
  manifest["schema_version"] = 99;
  save_json_file(tmp.path / "d" / "manifest.json", manifest);
  CHECK_THROWS_AS(read_dataset(tmp.path / "d"), VersionError);
}

TEST_CASE("downstream label views derive from planted blobs") {
  DatasetSpec spec = testutil::tiny_spec(8, 0, 0);
  const Dataset ds = generate_dataset(spec, 13);
  for (const auto& v : ds.videos) {
    const auto presence = object_presence(v, spec.object_classes);
    int count = 0;
    for (float p : presence) count += p > 0.5f ? 1 : 0;
    CHECK(count == spec.object_blobs);  // distinct classes per video
    const int primary = primary_object_class(v);
    REQUIRE(primary >= 0);
    CHECK(presence[primary] == 1.0f);
  }
}

// Multinomial logistic regression on pooled mean-frame features must beat
// chance on the planted action labels.
TEST_CASE("planted learnability: linear probe beats chance") {
  DatasetSpec spec = testutil::tiny_spec(120, 0, 0);
  const Dataset ds = generate_dataset(spec, 101);
  const int K = spec.action_classes;
  const int pool = 8;
  const int D = 3 * pool * pool;

  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  for (const auto& v : ds.videos) {
    std::vector<double> mean(static_cast<size_t>(3) * v.height * v.width, 0.0);
    for (int t = 0; t < v.frame_count; ++t) {
      const float* f = v.frame_ptr(t);
      for (size_t i = 0; i < mean.size(); ++i) mean[i] += f[i];
    }
    for (double& m : mean) m /= v.frame_count;
    std::vector<double> pooled(D, 0.0);
    const int by = v.height / pool, bx = v.width / pool;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < v.height; ++y) {
        for (int x = 0; x < v.width; ++x) {
          pooled[(static_cast<size_t>(c) * pool + y / by) * pool + x / bx] +=
              mean[(static_cast<size_t>(c) * v.height + y) * v.width + x];
        }
      }
    }
    features.push_back(std::move(pooled));
    labels.push_back(v.action_label);
  }

  std::vector<double> W(static_cast<size_t>(K) * (D + 1), 0.0);
  const double lr = 0.5;
  for (int iter = 0; iter < 400; ++iter) {
    std::vector<double> grad(W.size(), 0.0);
    for (size_t n = 0; n < features.size(); ++n) {
      std::vector<double> z(K, 0.0);
      for (int k = 0; k < K; ++k) {
        double acc = W[static_cast<size_t>(k) * (D + 1) + D];
        for (int d = 0; d < D; ++d) acc += W[static_cast<size_t>(k) * (D + 1) + d] * features[n][d];
        z[k] = acc;
      }
      const double m = *std::max_element(z.begin(), z.end());
      double sum = 0;
      for (double& v : z) {
        v = std::exp(v - m);
        sum += v;
      }
      for (int k = 0; k < K; ++k) {
        const double err = z[k] / sum - (k == labels[n] ? 1.0 : 0.0);
        for (int d = 0; d < D; ++d) {
          grad[static_cast<size_t>(k) * (D + 1) + d] += err * features[n][d];
        }
        grad[static_cast<size_t>(k) * (D + 1) + D] += err;
      }
    }
    for (size_t i = 0; i < W.size(); ++i) W[i] -= lr * grad[i] / features.size();
  }

  int correct = 0;
  for (size_t n = 0; n < features.size(); ++n) {
    int best = 0;
    double best_score = -1e300;
    for (int k = 0; k < K; ++k) {
      double acc = W[static_cast<size_t>(k) * (D + 1) + D];
      for (int d = 0; d < D; ++d) acc += W[static_cast<size_t>(k) * (D + 1) + d] * features[n][d];
      if (acc > best_score) {
        best_score = acc;
        best = k;
      }
    }
    if (best == labels[n]) ++correct;
  }
  const double acc = static_cast<double>(correct) / features.size();
  CAPTURE(acc);
  CHECK(acc > 1.5 / K);  // comfortably above the 1/K chance rate
}
