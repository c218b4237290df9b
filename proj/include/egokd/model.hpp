#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "egokd/nn.hpp"
#include "egokd/video_data.hpp"

namespace egokd {

struct ModelConfig {
  int in_channels = 3;
  int clip_length = 8;
  int height = 32;
  int width = 32;
  std::array<int, 3> channels{8, 16, 32};  // per block
  int action_classes = 4;                  // classifier output width
  int object_classes = 6;
  int map_hidden = 8;

  std::array<int, 4> clip_shape() const { return {in_channels, clip_length, height, width}; }

  // Shape of the clip feature [c, t, h, w]: blocks stride (1,2,2), (2,2,2), (1,1,1).
  std::array<int, 4> feature_shape() const;
  // Frames per temporal feature cell.
  int temporal_stride() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

// Backbone (three conv+ReLU blocks) plus every head. Gradient and momentum
// buffers reuse this same structure via zero_like().
template <typename T>
struct Model {
  ModelConfig cfg;
  Conv3d<T> conv1, conv2, conv3;
  Linear<T> classifier;        // pooled -> action_classes logits
  Linear<T> ego_head;          // pooled -> 2, log-softmax applied in forward
  Linear<T> obj_head;          // pooled -> object_classes, log-softmax applied
  Conv3d<T> hand_reduce, hand_project;      // 1x3x3 then 1x1x1
  Conv3d<T> object_reduce, object_project;

  static Model build(const ModelConfig& cfg) {
    Model m;
    m.cfg = cfg;
    m.conv1 = Conv3d<T>::make(cfg.in_channels, cfg.channels[0], {3, 3, 3}, {1, 2, 2}, {1, 1, 1});
    m.conv2 = Conv3d<T>::make(cfg.channels[0], cfg.channels[1], {3, 3, 3}, {2, 2, 2}, {1, 1, 1});
    m.conv3 = Conv3d<T>::make(cfg.channels[1], cfg.channels[2], {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    m.classifier = Linear<T>::make(cfg.channels[2], cfg.action_classes);
    m.ego_head = Linear<T>::make(cfg.channels[2], 2);
    m.obj_head = Linear<T>::make(cfg.channels[2], cfg.object_classes);
    m.hand_reduce = Conv3d<T>::make(cfg.channels[2], cfg.map_hidden, {1, 3, 3}, {1, 1, 1}, {0, 1, 1});
    m.hand_project = Conv3d<T>::make(cfg.map_hidden, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});
    m.object_reduce =
        Conv3d<T>::make(cfg.channels[2], cfg.map_hidden, {1, 3, 3}, {1, 1, 1}, {0, 1, 1});
    m.object_project = Conv3d<T>::make(cfg.map_hidden, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});
    return m;
  }

  template <typename Fn>
  void visit_params(Fn&& fn) {
    fn("backbone.conv1.weight", conv1.weight);
    fn("backbone.conv1.bias", conv1.bias);
    fn("backbone.conv2.weight", conv2.weight);
    fn("backbone.conv2.bias", conv2.bias);
    fn("backbone.conv3.weight", conv3.weight);
    fn("backbone.conv3.bias", conv3.bias);
    fn("head.classifier.weight", classifier.weight);
    fn("head.classifier.bias", classifier.bias);
    fn("head.ego.weight", ego_head.weight);
    fn("head.ego.bias", ego_head.bias);
    fn("head.obj.weight", obj_head.weight);
    fn("head.obj.bias", obj_head.bias);
    fn("head.hand.reduce.weight", hand_reduce.weight);
    fn("head.hand.reduce.bias", hand_reduce.bias);
    fn("head.hand.project.weight", hand_project.weight);
    fn("head.hand.project.bias", hand_project.bias);
    fn("head.object.reduce.weight", object_reduce.weight);
    fn("head.object.reduce.bias", object_reduce.bias);
    fn("head.object.project.weight", object_project.weight);
    fn("head.object.project.bias", object_project.bias);
  }

  template <typename Fn>
  void visit_params(Fn&& fn) const {
    const_cast<Model*>(this)->visit_params(
        [&](const char* name, Tensor<T>& t) { fn(name, const_cast<const Tensor<T>&>(t)); });
  }

  Model zero_like() const {
    Model m = *this;
    m.visit_params([](const char*, Tensor<T>& t) { t.zero(); });
    return m;
  }

  size_t param_count() const {
    size_t n = 0;
    visit_params([&](const char*, const Tensor<T>& t) { n += t.numel(); });
    return n;
  }

  template <typename U>
  Model<U> cast() const {
    Model<U> out = Model<U>::build(cfg);
    std::vector<const Tensor<T>*> src;
    visit_params([&](const char*, const Tensor<T>& t) { src.push_back(&t); });
    size_t k = 0;
    out.visit_params([&](const char*, Tensor<U>& t) {
      for (size_t i = 0; i < t.numel(); ++i) t.data[i] = static_cast<U>(src[k]->data[i]);
      ++k;
    });
    return out;
  }
};

// fan-in scaled uniform weights (Kaiming bound, suited to the ReLU stack),
// zero biases, one stream per tensor name
template <typename T>
void init_parameters(Model<T>& model, uint64_t seed) {
  model.visit_params([&](const char* name, Tensor<T>& t) {
    const std::string n = name;
    if (n.ends_with(".bias")) {
      t.zero();
      return;
    }
    size_t fan_in = 1;
    for (size_t d = 1; d < t.shape.size(); ++d) fan_in *= static_cast<size_t>(t.shape[d]);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Rng rng(derive_seed(seed, "init", hash_str(n)));
    for (size_t i = 0; i < t.numel(); ++i) {
      t.data[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
  });
}

template <typename T>
Model<T> init_model(const ModelConfig& cfg, uint64_t seed) {
  Model<T> m = Model<T>::build(cfg);
  init_parameters(m, seed);
  return m;
}

// Cached activations for one clip; reused across forward/backward.
template <typename T>
struct Acts {
  Tensor<T> input;  // [C, L, H, W]
  Tensor<T> z1, a1, z2, a2, z3, feature;
  bool pooled_ready = false;
  std::vector<T> pooled;
  std::vector<T> act_logits;
  std::vector<T> ego_logits, ego_logprobs;
  std::vector<T> obj_logits, obj_logprobs;
  Tensor<T> hand_z, hand_a, hand_map;      // hand_map: [1, t, h, w]
  Tensor<T> object_z, object_a, object_map;
};

template <typename T>
void load_clip_input(const Clip& clip, Tensor<T>& input) {
  // Clip frames are [L, C, H, W]; the model consumes [C, L, H, W].
  const int L = static_cast<int>(clip.frame_indices.size());
  const int C = clip.channels, H = clip.height, W = clip.width;
  if (input.shape != std::vector<int>{C, L, H, W}) input = Tensor<T>({C, L, H, W});
  const size_t plane = static_cast<size_t>(H) * W;
  for (int l = 0; l < L; ++l) {
    for (int c = 0; c < C; ++c) {
      const float* src = clip.frames.data() + (static_cast<size_t>(l) * C + c) * plane;
      T* dst = input.ptr() + (static_cast<size_t>(c) * L + l) * plane;
      for (size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(src[i]);
    }
  }
}

template <typename T>
void forward_backbone(const Model<T>& m, Acts<T>& acts) {
  m.conv1.forward(acts.input, acts.z1);
  relu_forward(acts.z1, acts.a1);
  m.conv2.forward(acts.a1, acts.z2);
  relu_forward(acts.z2, acts.a2);
  m.conv3.forward(acts.a2, acts.z3);
  relu_forward(acts.z3, acts.feature);
  acts.pooled_ready = false;
}

template <typename T>
void ensure_pooled(Acts<T>& acts) {
  if (acts.pooled_ready) return;
  const int c = acts.feature.shape[0];
  const size_t cells = acts.feature.numel() / c;
  acts.pooled.assign(c, T(0));
  for (int ch = 0; ch < c; ++ch) {
    const T* base = acts.feature.ptr() + cells * ch;
    T acc = T(0);
    for (size_t i = 0; i < cells; ++i) acc += base[i];
    acts.pooled[ch] = acc / static_cast<T>(cells);
  }
  acts.pooled_ready = true;
}

template <typename T>
void forward_classifier(const Model<T>& m, Acts<T>& acts) {
  ensure_pooled(acts);
  m.classifier.forward(acts.pooled, acts.act_logits);
}

template <typename T>
void forward_ego_head(const Model<T>& m, Acts<T>& acts) {
  ensure_pooled(acts);
  m.ego_head.forward(acts.pooled, acts.ego_logits);
  log_softmax_vec(acts.ego_logits, acts.ego_logprobs);
}

template <typename T>
void forward_obj_head(const Model<T>& m, Acts<T>& acts) {
  ensure_pooled(acts);
  m.obj_head.forward(acts.pooled, acts.obj_logits);
  log_softmax_vec(acts.obj_logits, acts.obj_logprobs);
}

template <typename T>
void forward_hand_head(const Model<T>& m, Acts<T>& acts) {
  m.hand_reduce.forward(acts.feature, acts.hand_z);
  relu_forward(acts.hand_z, acts.hand_a);
  m.hand_project.forward(acts.hand_a, acts.hand_map);
}

template <typename T>
void forward_object_head(const Model<T>& m, Acts<T>& acts) {
  m.object_reduce.forward(acts.feature, acts.object_z);
  relu_forward(acts.object_z, acts.object_a);
  m.object_project.forward(acts.object_a, acts.object_map);
}

template <typename T>
void forward_all(const Model<T>& m, Acts<T>& acts) {
  forward_backbone(m, acts);
  forward_classifier(m, acts);
  forward_ego_head(m, acts);
  forward_obj_head(m, acts);
  forward_hand_head(m, acts);
  forward_object_head(m, acts);
}

// Upstream gradients; null entries skip the corresponding head entirely.
template <typename T>
struct HeadGrads {
  const std::vector<T>* d_act_logits = nullptr;
  const std::vector<T>* d_ego_logprobs = nullptr;
  const std::vector<T>* d_obj_logprobs = nullptr;
  const Tensor<T>* d_hand_map = nullptr;
  const Tensor<T>* d_object_map = nullptr;
};

// Accumulates parameter gradients into `grads` (same structure as the model).
// Optionally produces d(input).
template <typename T>
void backward_all(const Model<T>& m, const Acts<T>& acts, const HeadGrads<T>& up,
                  Model<T>& grads, Tensor<T>* d_input = nullptr) {
  const int c = acts.feature.shape[0];
  const size_t cells = acts.feature.numel() / c;

  std::vector<T> d_pooled(c, T(0));
  bool pooled_used = false;
  if (up.d_act_logits) {
    m.classifier.backward(acts.pooled, *up.d_act_logits, &d_pooled, grads.classifier);
    pooled_used = true;
  }
  if (up.d_ego_logprobs) {
    std::vector<T> d_logits;
    log_softmax_backward(acts.ego_logprobs, *up.d_ego_logprobs, d_logits);
    m.ego_head.backward(acts.pooled, d_logits, &d_pooled, grads.ego_head);
    pooled_used = true;
  }
  if (up.d_obj_logprobs) {
    std::vector<T> d_logits;
    log_softmax_backward(acts.obj_logprobs, *up.d_obj_logprobs, d_logits);
    m.obj_head.backward(acts.pooled, d_logits, &d_pooled, grads.obj_head);
    pooled_used = true;
  }

  Tensor<T> d_feature(acts.feature.shape);
  if (pooled_used) {
    const T inv = T(1) / static_cast<T>(cells);
    for (int ch = 0; ch < c; ++ch) {
      const T g = d_pooled[ch] * inv;
      T* dst = d_feature.ptr() + cells * ch;
      for (size_t i = 0; i < cells; ++i) dst[i] += g;
    }
  }

  if (up.d_hand_map) {
    Tensor<T> d_a(acts.hand_a.shape);
    m.hand_project.backward(acts.hand_a, *up.d_hand_map, &d_a, grads.hand_project);
    Tensor<T> d_z(acts.hand_z.shape);
    relu_backward(acts.hand_z, d_a, d_z);
    m.hand_reduce.backward(acts.feature, d_z, &d_feature, grads.hand_reduce);
  }
  if (up.d_object_map) {
    Tensor<T> d_a(acts.object_a.shape);
    m.object_project.backward(acts.object_a, *up.d_object_map, &d_a, grads.object_project);
    Tensor<T> d_z(acts.object_z.shape);
    relu_backward(acts.object_z, d_a, d_z);
    m.object_reduce.backward(acts.feature, d_z, &d_feature, grads.object_reduce);
  }

  Tensor<T> d_z3(acts.z3.shape);
  relu_backward(acts.z3, d_feature, d_z3);
  Tensor<T> d_a2(acts.a2.shape);
  m.conv3.backward(acts.a2, d_z3, &d_a2, grads.conv3);
  Tensor<T> d_z2(acts.z2.shape);
  relu_backward(acts.z2, d_a2, d_z2);
  Tensor<T> d_a1(acts.a1.shape);
  m.conv2.backward(acts.a1, d_z2, &d_a1, grads.conv2);
  Tensor<T> d_z1(acts.z1.shape);
  relu_backward(acts.z1, d_a1, d_z1);
  m.conv1.backward(acts.input, d_z1, d_input, grads.conv1);
}

}  // namespace egokd
