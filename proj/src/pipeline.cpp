#include "egokd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "egokd/errors.hpp"
#include "egokd/io.hpp"
#include "egokd/rng.hpp"

namespace egokd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kCheckpointSchemaVersion = 1;
constexpr double kPi = 3.14159265358979323846;

const char* schedule_name(LrScheduleKind k) {
  return k == LrScheduleKind::cosine ? "cosine" : "step";
}
const char* downstream_name(DownstreamMode m) {
  return m == DownstreamMode::multilabel ? "multilabel" : "single";
}
const char* int_form_name(IntLossForm f) { return f == IntLossForm::bce ? "bce" : "literal"; }
const char* int_mode_name(IntMapMode m) {
  switch (m) {
    case IntMapMode::both: return "both";
    case IntMapMode::hand_only: return "hand";
    case IntMapMode::object_only: return "object";
  }
  return "?";
}

}  // namespace

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "temporal_max") return Aggregation::temporal_max;
  throw UsageError("unknown aggregation: " + s);
}

const char* to_string(Aggregation a) {
  return a == Aggregation::mean ? "mean" : "temporal_max";
}

void TrainConfig::validate() const {
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (!(base_lr > 0)) throw UsageError("base_lr must be positive");
  if (momentum < 0 || momentum >= 1) throw UsageError("momentum must be in [0,1)");
  if (weight_decay < 0) throw UsageError("weight_decay must be >= 0");
  if (weights.w_ego < 0 || weights.w_obj < 0 || weights.w_int < 0)
    throw UsageError("loss weights must be nonnegative");
  if (!std::isfinite(weights.w_ego) || !std::isfinite(weights.w_obj) ||
      !std::isfinite(weights.w_int))
    throw UsageError("loss weights must be finite");
  if (clip_length < 1 || clip_stride < 1)
    throw UsageError("clip_length and clip_stride must be >= 1");
  if (lr_schedule == LrScheduleKind::cosine && !lr_steps.empty())
    throw UsageError("lr_steps conflicts with the cosine schedule");
  if (lr_schedule == LrScheduleKind::step) {
    if (lr_steps.empty()) throw UsageError("step schedule requires lr_steps");
    for (size_t i = 0; i < lr_steps.size(); ++i) {
      if (lr_steps[i] < 1 || (i > 0 && lr_steps[i] <= lr_steps[i - 1]))
        throw UsageError("lr_steps must be strictly increasing positive epochs");
    }
  }
}

json TrainConfig::to_json() const {
  return json{{"epochs", epochs},
              {"batch_size", batch_size},
              {"base_lr", base_lr},
              {"momentum", momentum},
              {"weight_decay", weight_decay},
              {"lr_schedule", schedule_name(lr_schedule)},
              {"lr_steps", lr_steps},
              {"seed", seed},
              {"w_ego", weights.w_ego},
              {"w_obj", weights.w_obj},
              {"w_int", weights.w_int},
              {"enable_ego", tasks.ego},
              {"enable_obj", tasks.obj},
              {"enable_int", tasks.interaction},
              {"aux_in_finetune", aux_in_finetune},
              {"clip_length", clip_length},
              {"clip_stride", clip_stride},
              {"int_loss_form", int_form_name(int_loss_form)},
              {"int_map_mode", int_mode_name(int_map_mode)},
              {"downstream", downstream_name(downstream)}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  static const std::vector<std::string> known = {
      "epochs",       "batch_size",     "base_lr",        "momentum",
      "weight_decay", "lr_schedule",    "lr_steps",       "seed",
      "w_ego",        "w_obj",          "w_int",          "enable_ego",
      "enable_obj",   "enable_int",     "aux_in_finetune", "clip_length",
      "clip_stride",  "int_loss_form",  "int_map_mode",   "downstream"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw UsageError("unknown config key: " + key);
  }
  TrainConfig cfg;
  const auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  get("epochs", cfg.epochs);
  get("batch_size", cfg.batch_size);
  get("base_lr", cfg.base_lr);
  get("momentum", cfg.momentum);
  get("weight_decay", cfg.weight_decay);
  if (j.contains("lr_schedule")) {
    const std::string s = j.at("lr_schedule").get<std::string>();
    if (s == "cosine") cfg.lr_schedule = LrScheduleKind::cosine;
    else if (s == "step") cfg.lr_schedule = LrScheduleKind::step;
    else throw UsageError("unknown lr_schedule: " + s);
  }
  get("lr_steps", cfg.lr_steps);
  get("seed", cfg.seed);
  get("w_ego", cfg.weights.w_ego);
  get("w_obj", cfg.weights.w_obj);
  get("w_int", cfg.weights.w_int);
  get("enable_ego", cfg.tasks.ego);
  get("enable_obj", cfg.tasks.obj);
  get("enable_int", cfg.tasks.interaction);
  get("aux_in_finetune", cfg.aux_in_finetune);
  get("clip_length", cfg.clip_length);
  get("clip_stride", cfg.clip_stride);
  if (j.contains("int_loss_form")) {
    const std::string s = j.at("int_loss_form").get<std::string>();
    if (s == "bce") cfg.int_loss_form = IntLossForm::bce;
    else if (s == "literal") cfg.int_loss_form = IntLossForm::literal;
    else throw UsageError("unknown int_loss_form: " + s);
  }
  if (j.contains("int_map_mode")) {
    const std::string s = j.at("int_map_mode").get<std::string>();
    if (s == "both") cfg.int_map_mode = IntMapMode::both;
    else if (s == "hand") cfg.int_map_mode = IntMapMode::hand_only;
    else if (s == "object") cfg.int_map_mode = IntMapMode::object_only;
    else throw UsageError("unknown int_map_mode: " + s);
  }
  if (j.contains("downstream")) {
    const std::string s = j.at("downstream").get<std::string>();
    if (s == "multilabel") cfg.downstream = DownstreamMode::multilabel;
    else if (s == "single") cfg.downstream = DownstreamMode::single;
    else throw UsageError("unknown downstream mode: " + s);
  }
  cfg.validate();
  return cfg;
}

uint64_t TrainConfig::fingerprint() const { return hash_str(to_json().dump()); }

std::vector<int> epoch_order(uint64_t seed, int epoch, int n) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "order", static_cast<uint64_t>(epoch)));
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
  return order;
}

int train_clip_start(uint64_t seed, int epoch, const std::string& video_id, int frame_count,
                     int clip_length, int clip_stride, int temporal_stride) {
  const int span = frame_count - clip_length * clip_stride;
  if (span < 0) throw DataError("clip does not fit video " + video_id);
  const int aligned = span / temporal_stride + 1;
  Rng rng(derive_seed(seed, "clip", static_cast<uint64_t>(epoch), hash_str(video_id)));
  return temporal_stride * rng.uniform_int(0, aligned - 1);
}

double lr_for_epoch(const TrainConfig& cfg, int epoch) {
  if (cfg.lr_schedule == LrScheduleKind::cosine) {
    return cfg.base_lr * 0.5 * (1.0 + std::cos(kPi * epoch / std::max(1, cfg.epochs)));
  }
  double lr = cfg.base_lr;
  for (int s : cfg.lr_steps) {
    if (epoch >= s) lr *= 0.1;
  }
  return lr;
}

namespace {

std::vector<std::pair<std::string, Tensor<float>*>> collect_params(Model<float>& m) {
  std::vector<std::pair<std::string, Tensor<float>*>> out;
  m.visit_params([&](const char* name, Tensor<float>& t) { out.emplace_back(name, &t); });
  return out;
}

}  // namespace

void sgd_step(Model<float>& model, const Model<float>& grads, Model<float>& momentum_buf,
              float lr, float weight_decay, float momentum,
              const std::function<bool(const std::string&)>& active) {
  auto params = collect_params(model);
  auto gparams = collect_params(const_cast<Model<float>&>(grads));
  auto mparams = collect_params(momentum_buf);
  for (size_t k = 0; k < params.size(); ++k) {
    if (!active(params[k].first)) continue;
    float* p = params[k].second->ptr();
    const float* g = gparams[k].second->ptr();
    float* buf = mparams[k].second->ptr();
    const size_t n = params[k].second->numel();
    for (size_t i = 0; i < n; ++i) {
      const float step = g[i] + weight_decay * p[i];
      buf[i] = momentum * buf[i] + step;
      p[i] -= lr * buf[i];
    }
  }
}

namespace {

// Copies frames [start, start+L*stride) of a video into model input layout
// [C, L, H, W].
void load_train_input(const VideoRecord& video, int start, int clip_length, int stride,
                      Tensor<float>& input) {
  const int C = video.channels, H = video.height, W = video.width;
  if (input.shape != std::vector<int>{C, clip_length, H, W}) {
    input = Tensor<float>({C, clip_length, H, W});
  }
  const size_t plane = static_cast<size_t>(H) * W;
  for (int l = 0; l < clip_length; ++l) {
    const float* frame = video.frame_ptr(start + l * stride);
    for (int c = 0; c < C; ++c) {
      std::copy_n(frame + plane * c, plane,
                  input.ptr() + (static_cast<size_t>(c) * clip_length + l) * plane);
    }
  }
}

struct Phase {
  bool is_finetune = false;
  DownstreamMode downstream = DownstreamMode::multilabel;
  TaskFlags aux;  // effective auxiliary tasks for this phase
  IntLossForm int_form = IntLossForm::bce;
  IntMapMode int_mode = IntMapMode::both;
  LossWeights weights;
  int downstream_classes = 0;
  int action_classes = 0;
  int object_classes = 0;
};

struct ItemOutcome {
  double l_act = 0, l_ego = 0, l_obj = 0, l_int = 0;
};

ItemOutcome train_item(const Model<float>& model, const VideoRecord& video,
                       const PseudoLabelSet* labels, const Phase& phase, const TrainConfig& cfg,
                       int epoch, int sigma_t, int feat_t, Acts<float>& acts,
                       Model<float>& item_grads, float inv_batch) {
  ItemOutcome out;
  const int start = train_clip_start(cfg.seed, epoch, video.video_id, video.frame_count,
                                     cfg.clip_length, cfg.clip_stride, sigma_t);
  load_train_input(video, start, cfg.clip_length, cfg.clip_stride, acts.input);
  forward_backbone(model, acts);

  HeadGrads<float> up;
  std::vector<float> d_act, d_ego, d_obj;
  Tensor<float> d_hand, d_object;

  forward_classifier(model, acts);
  if (!phase.is_finetune) {
    out.l_act = loss_act(acts.act_logits, video.action_label);
    loss_act_backward(acts.act_logits, video.action_label, inv_batch, d_act);
  } else if (phase.downstream == DownstreamMode::single) {
    const int label = primary_object_class(video);
    if (label < 0) throw DataError("video " + video.video_id + " has no object blob");
    out.l_act = loss_act(acts.act_logits, label);
    loss_act_backward(acts.act_logits, label, inv_batch, d_act);
  } else {
    const auto targets =
        downstream_multilabel(video, phase.action_classes, phase.object_classes);
    const int C = phase.downstream_classes;
    d_act.assign(C, 0.0f);
    double sum = 0;
    for (int c = 0; c < C; ++c) {
      sum += detail::int_cell_loss(acts.act_logits[c], targets[c], IntLossForm::bce);
      d_act[c] = inv_batch / C *
                 detail::int_cell_grad(acts.act_logits[c], targets[c], IntLossForm::bce);
    }
    out.l_act = sum / C;
  }
  up.d_act_logits = &d_act;

  const PseudoLabels* pl = nullptr;
  if (phase.aux.ego || phase.aux.obj || phase.aux.interaction) {
    pl = &labels->by_video.at(video.video_id);
  }

  std::vector<float> ego_target, obj_target;
  if (phase.aux.ego) {
    forward_ego_head(model, acts);
    ego_target = {pl->ego[0], pl->ego[1]};
    out.l_ego = soft_target_loss<float>(acts.ego_logprobs, ego_target);
    soft_target_loss_backward<float>(ego_target,
                                     inv_batch * static_cast<float>(phase.weights.w_ego), d_ego);
    up.d_ego_logprobs = &d_ego;
  }
  if (phase.aux.obj) {
    forward_obj_head(model, acts);
    obj_target = pl->object;
    out.l_obj = soft_target_loss<float>(acts.obj_logprobs, obj_target);
    soft_target_loss_backward<float>(obj_target,
                                     inv_batch * static_cast<float>(phase.weights.w_obj), d_obj);
    up.d_obj_logprobs = &d_obj;
  }
  if (phase.aux.interaction) {
    const int cell0 = start / sigma_t;
    const auto& grid = pl->maps.grid;
    const size_t plane = static_cast<size_t>(grid.h) * grid.w;
    const size_t count = static_cast<size_t>(feat_t) * plane;
    const std::span<const float> hand_slice{pl->maps.hand_map.data() + cell0 * plane, count};
    const std::span<const float> object_slice{pl->maps.object_map.data() + cell0 * plane, count};
    const bool use_hand = phase.int_mode != IntMapMode::object_only;
    const bool use_object = phase.int_mode != IntMapMode::hand_only;
    if (use_hand) forward_hand_head(model, acts);
    if (use_object) forward_object_head(model, acts);
    out.l_int = loss_int<float>(acts.hand_map, acts.object_map, hand_slice, object_slice,
                                phase.int_form, phase.int_mode);
    loss_int_backward<float>(acts.hand_map, acts.object_map, hand_slice, object_slice,
                             inv_batch * static_cast<float>(phase.weights.w_int),
                             use_hand ? &d_hand : nullptr, use_object ? &d_object : nullptr,
                             phase.int_form, phase.int_mode);
    if (use_hand) up.d_hand_map = &d_hand;
    if (use_object) up.d_object_map = &d_object;
  }

  backward_all(model, acts, up, item_grads);
  return out;
}

std::function<bool(const std::string&)> active_params(const Phase& phase) {
  const TaskFlags aux = phase.aux;
  return [aux](const std::string& name) {
    if (name.starts_with("backbone.") || name.starts_with("head.classifier.")) return true;
    if (name.starts_with("head.ego.")) return aux.ego;
    if (name.starts_with("head.obj.")) return aux.obj;
    if (name.starts_with("head.hand.") || name.starts_with("head.object."))
      return aux.interaction;
    return false;
  };
}

void accumulate(Model<float>& dst, const Model<float>& src) {
  auto d = collect_params(dst);
  auto s = collect_params(const_cast<Model<float>&>(src));
  for (size_t k = 0; k < d.size(); ++k) {
    float* out = d[k].second->ptr();
    const float* in = s[k].second->ptr();
    for (size_t i = 0; i < d[k].second->numel(); ++i) out[i] += in[i];
  }
}

void zero_params(Model<float>& m) {
  m.visit_params([](const char*, Tensor<float>& t) { t.zero(); });
}

TrainResult train_loop(const Dataset& dataset, Split split, const PseudoLabelSet* labels,
                       const TrainConfig& cfg, const Phase& phase, Model<float> model,
                       Model<float> momentum_buf, int epoch_start, int epoch_end, int threads) {
  const auto videos = dataset.split_videos(split);
  if (videos.empty()) throw DataError(std::string("no videos in split ") + to_string(split));

  ModelConfig mcfg = model.cfg;
  const auto feat = mcfg.feature_shape();
  const int feat_t = feat[1];
  const int sigma_t = mcfg.temporal_stride();

  if (phase.aux.interaction) {
    if (cfg.clip_stride != 1)
      throw UsageError("interaction loss requires clip_stride 1 so map cells align");
    const int T = videos.front()->frame_count;
    if (T % sigma_t != 0)
      throw DataError("video length not divisible by temporal feature stride");
    const GridShape want{T / sigma_t, feat[2], feat[3]};
    if (!labels || labels->grid == GridShape{} || !(labels->grid == want)) {
      throw DataError("label archive grid does not match the backbone feature shape");
    }
  }
  if (phase.aux.ego || phase.aux.obj || phase.aux.interaction) {
    if (!labels) throw DataError("auxiliary tasks enabled but no label archive given");
    for (const auto* v : videos) {
      if (!labels->by_video.count(v->video_id))
        throw DataError("missing labels for video " + v->video_id);
    }
  }

  const auto active = active_params(phase);
  TrainResult result;

  const int n = static_cast<int>(videos.size());
  threads = std::max(1, std::min(threads, cfg.batch_size));
  std::vector<Acts<float>> worker_acts(threads);
  std::vector<Model<float>> item_grads;
  for (int i = 0; i < cfg.batch_size; ++i) item_grads.push_back(model.zero_like());
  Model<float> grad_accum = model.zero_like();
  std::vector<ItemOutcome> outcomes(cfg.batch_size);

  for (int epoch = epoch_start; epoch < epoch_end; ++epoch) {
    const double lr = lr_for_epoch(cfg, epoch);
    const auto order = epoch_order(cfg.seed, epoch, n);
    int step_in_epoch = 0;
    for (int begin = 0; begin < n; begin += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n - begin);
      const float inv_batch = 1.0f / static_cast<float>(count);

      auto worker = [&](int w) {
        for (int i = w; i < count; i += threads) {
          zero_params(item_grads[i]);
          outcomes[i] =
              train_item(model, *videos[order[begin + i]], labels, phase, cfg, epoch, sigma_t,
                         feat_t, worker_acts[w], item_grads[i], inv_batch);
        }
      };
      if (threads == 1) {
        worker(0);
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
        for (auto& t : pool) t.join();
      }

      zero_params(grad_accum);
      ItemOutcome mean;
      for (int i = 0; i < count; ++i) {
        accumulate(grad_accum, item_grads[i]);
        mean.l_act += outcomes[i].l_act;
        mean.l_ego += outcomes[i].l_ego;
        mean.l_obj += outcomes[i].l_obj;
        mean.l_int += outcomes[i].l_int;
      }
      mean.l_act /= count;
      mean.l_ego /= count;
      mean.l_obj /= count;
      mean.l_int /= count;

      const TaskFlags report_flags = phase.aux;
      const LossReport report = loss_total(mean.l_act, mean.l_ego, mean.l_obj, mean.l_int,
                                           phase.weights,
                                           TaskFlags{report_flags.ego, report_flags.obj,
                                                     report_flags.interaction});
      if (!std::isfinite(report.l_total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step_in_epoch));
      }
      sgd_step(model, grad_accum, momentum_buf, static_cast<float>(lr),
               static_cast<float>(cfg.weight_decay), static_cast<float>(cfg.momentum), active);
      result.rows.push_back(StepRow{epoch, report, lr});
      ++step_in_epoch;
    }
  }

  result.checkpoint.model_cfg = mcfg;
  result.checkpoint.model = std::move(model);
  result.checkpoint.momentum = std::move(momentum_buf);
  result.checkpoint.epochs_done = epoch_end;
  result.checkpoint.config_fingerprint = cfg.fingerprint();
  return result;
}

}  // namespace

TrainResult pretrain(const Dataset& dataset, const PseudoLabelSet* labels,
                     const TrainConfig& cfg, const ModelConfig& model_cfg,
                     const Checkpoint* resume, int threads, int stop_after_epoch) {
  cfg.validate();
  if (model_cfg.clip_length != cfg.clip_length)
    throw UsageError("model clip_length differs from training clip_length");

  Phase phase;
  phase.is_finetune = false;
  phase.aux = effective_tasks(cfg.tasks, cfg.weights);
  phase.int_form = cfg.int_loss_form;
  phase.int_mode = cfg.int_map_mode;
  phase.weights = cfg.weights;

  Model<float> model;
  Model<float> momentum_buf;
  int epoch_start = 0;
  if (resume) {
    if (resume->config_fingerprint != cfg.fingerprint())
      throw DataError("resume checkpoint was produced by a different config");
    if (!(resume->model_cfg == model_cfg))
      throw DataError("resume checkpoint has an incompatible model config");
    if (resume->epochs_done > cfg.epochs)
      throw DataError("resume checkpoint already has more epochs than requested");
    model = resume->model;
    momentum_buf = resume->momentum;
    epoch_start = resume->epochs_done;
  } else {
    model = init_model<float>(model_cfg, cfg.seed);
    momentum_buf = model.zero_like();
  }

  int epoch_end = cfg.epochs;
  if (stop_after_epoch >= 0) {
    if (stop_after_epoch > cfg.epochs) throw UsageError("stop_after_epoch exceeds epochs");
    epoch_end = stop_after_epoch;
  }
  if (epoch_start > epoch_end) throw DataError("resume checkpoint is past the requested epoch");
  TrainResult result = train_loop(dataset, Split::pretrain, labels, cfg, phase, std::move(model),
                                  std::move(momentum_buf), epoch_start, epoch_end, threads);
  result.checkpoint.classifier_mode = "softmax";
  result.checkpoint.label_space = "action";
  return result;
}

TrainResult finetune(const Checkpoint* init, const Dataset& dataset,
                     const PseudoLabelSet* labels, const TrainConfig& cfg, int threads) {
  cfg.validate();

  Phase phase;
  phase.is_finetune = true;
  phase.downstream = cfg.downstream;
  phase.action_classes = dataset.spec.action_classes;
  phase.object_classes = dataset.spec.object_classes;
  phase.downstream_classes = cfg.downstream == DownstreamMode::multilabel
                                 ? dataset.spec.action_classes + dataset.spec.object_classes
                                 : dataset.spec.object_classes;
  phase.weights = cfg.weights;
  phase.int_form = cfg.int_loss_form;
  phase.int_mode = cfg.int_map_mode;
  phase.aux = TaskFlags{false, false, cfg.aux_in_finetune && cfg.weights.w_int > 0};

  ModelConfig mcfg;
  if (init) {
    mcfg = init->model_cfg;
  } else {
    mcfg.in_channels = dataset.spec.channels;
    mcfg.height = dataset.spec.height;
    mcfg.width = dataset.spec.width;
    mcfg.object_classes = dataset.spec.object_classes;
  }
  mcfg.clip_length = cfg.clip_length;
  mcfg.action_classes = phase.downstream_classes;  // downstream label space

  if (mcfg.in_channels != dataset.spec.channels || mcfg.height != dataset.spec.height ||
      mcfg.width != dataset.spec.width) {
    throw DataError("checkpoint backbone is incompatible with the dataset geometry");
  }
  if (init && init->model_cfg.clip_length != cfg.clip_length) {
    throw DataError("checkpoint clip_length differs from finetune clip_length");
  }

  // Fresh model, then adopt the pre-trained backbone (and map heads when the
  // interaction loss stays on downstream).
  Model<float> model = init_model<float>(mcfg, derive_seed(cfg.seed, "finetune"));
  if (init) {
    auto dst = collect_params(model);
    Model<float> src_model = init->model;
    auto src = collect_params(src_model);
    for (size_t k = 0; k < dst.size(); ++k) {
      const std::string& name = dst[k].first;
      const bool adopt = name.starts_with("backbone.") ||
                         (phase.aux.interaction && (name.starts_with("head.hand.") ||
                                                    name.starts_with("head.object.")));
      if (adopt) {
        if (dst[k].second->shape != src[k].second->shape)
          throw DataError("checkpoint parameter shape mismatch for " + name);
        dst[k].second->data = src[k].second->data;
      }
    }
  }

  Model<float> momentum_buf = model.zero_like();
  TrainResult result =
      train_loop(dataset, Split::finetune_train, labels, cfg, phase, std::move(model),
                 std::move(momentum_buf), 0, cfg.epochs, threads);
  result.checkpoint.classifier_mode =
      cfg.downstream == DownstreamMode::multilabel ? "sigmoid" : "softmax";
  result.checkpoint.label_space =
      cfg.downstream == DownstreamMode::multilabel ? "charades" : "object";
  return result;
}

std::vector<double> predict_video(const Model<float>& model, const std::string& classifier_mode,
                                  const VideoRecord& video, int n_clips, int clip_length,
                                  int clip_stride, Aggregation agg) {
  const auto clips =
      sample_clips(video, n_clips, clip_length, clip_stride, ClipMode::uniform, 0);
  std::vector<double> agg_scores;
  Acts<float> acts;
  for (size_t k = 0; k < clips.size(); ++k) {
    load_clip_input(clips[k], acts.input);
    forward_backbone(model, acts);
    forward_classifier(model, acts);
    std::vector<double> probs(acts.act_logits.size());
    if (classifier_mode == "sigmoid") {
      for (size_t i = 0; i < probs.size(); ++i) {
        probs[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(acts.act_logits[i])));
      }
    } else {
      const auto p = softmax_vec(acts.act_logits);
      for (size_t i = 0; i < probs.size(); ++i) probs[i] = static_cast<double>(p[i]);
    }
    if (k == 0) {
      agg_scores = probs;
    } else if (agg == Aggregation::mean) {
      for (size_t i = 0; i < probs.size(); ++i) agg_scores[i] += probs[i];
    } else {
      for (size_t i = 0; i < probs.size(); ++i) agg_scores[i] = std::max(agg_scores[i], probs[i]);
    }
  }
  if (agg == Aggregation::mean) {
    for (double& v : agg_scores) v /= static_cast<double>(clips.size());
  }
  return agg_scores;
}

EvalResult evaluate(const Checkpoint& ckpt, const Dataset& dataset, Split split,
                    const std::string& metric, int n_clips, Aggregation agg, int threads) {
  const auto videos = dataset.split_videos(split);
  if (videos.empty()) throw DataError(std::string("no videos in split ") + to_string(split));
  const int L = ckpt.model_cfg.clip_length;

  std::vector<std::vector<double>> scores(videos.size());
  auto worker = [&](int w) {
    for (size_t i = w; i < videos.size(); i += static_cast<size_t>(threads)) {
      scores[i] = predict_video(ckpt.model, ckpt.classifier_mode, *videos[i], n_clips, L, 1, agg);
    }
  };
  threads = std::max(1, threads);
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }

  const auto truth_sets = [&](const VideoRecord& v) -> std::vector<float> {
    if (ckpt.label_space == "charades") {
      return downstream_multilabel(v, dataset.spec.action_classes,
                                   dataset.spec.object_classes);
    }
    if (ckpt.label_space == "object") {
      return object_presence(v, dataset.spec.object_classes);
    }
    std::vector<float> onehot(dataset.spec.action_classes, 0.0f);
    onehot[v.action_label] = 1.0f;
    return onehot;
  };
  if (metric == "map") {
    std::vector<std::vector<float>> label_sets(videos.size());
    for (size_t i = 0; i < videos.size(); ++i) label_sets[i] = truth_sets(*videos[i]);
    EvalResult r = mean_average_precision(scores, label_sets);
    r.n_items = static_cast<int>(videos.size());
    return r;
  }
  if (metric == "top1" || metric == "top5") {
    if (ckpt.label_space == "charades")
      throw UsageError("top-k needs a single-label head; this checkpoint is multi-label");
    std::vector<int> labels(videos.size());
    for (size_t i = 0; i < videos.size(); ++i) {
      labels[i] = ckpt.label_space == "object" ? primary_object_class(*videos[i])
                                               : videos[i]->action_label;
      if (labels[i] < 0) throw DataError("video without object blob in top-k evaluation");
    }
    const int k = metric == "top1" ? 1 : 5;
    EvalResult r;
    r.metric = metric;
    r.value = top_k_accuracy(scores, labels, k);
    r.n_items = static_cast<int>(videos.size());
    return r;
  }
  throw UsageError("unknown metric: " + metric);
}

bool checkpoints_equal(const Checkpoint& a, const Checkpoint& b) {
  if (!(a.model_cfg == b.model_cfg) || a.epochs_done != b.epochs_done ||
      a.config_fingerprint != b.config_fingerprint || a.classifier_mode != b.classifier_mode ||
      a.label_space != b.label_space) {
    return false;
  }
  bool equal = true;
  auto pa = collect_params(const_cast<Model<float>&>(a.model));
  auto pb = collect_params(const_cast<Model<float>&>(b.model));
  for (size_t k = 0; k < pa.size(); ++k) {
    if (pa[k].second->data != pb[k].second->data) equal = false;
  }
  auto ma = collect_params(const_cast<Model<float>&>(a.momentum));
  auto mb = collect_params(const_cast<Model<float>&>(b.momentum));
  for (size_t k = 0; k < ma.size(); ++k) {
    if (ma[k].second->data != mb[k].second->data) equal = false;
  }
  return equal;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  fs::create_directories(dir / "arrays");
  json arrays = json::array();
  const auto dump = [&](const std::string& name, const Tensor<float>& t) {
    const std::string rel = "arrays/" + name + ".f32";
    write_f32_file(dir / rel, t.data);
    arrays.push_back(json{
        {"name", name},
        {"shape", t.shape},
        {"file", rel},
        {"crc32", crc32_bytes(t.data.data(), t.data.size() * sizeof(float))}});
  };
  ckpt.model.visit_params(
      [&](const char* name, const Tensor<float>& t) { dump(std::string("model.") + name, t); });
  ckpt.momentum.visit_params(
      [&](const char* name, const Tensor<float>& t) { dump(std::string("opt.") + name, t); });

  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016llx",
                static_cast<unsigned long long>(ckpt.config_fingerprint));
  json manifest{{"schema_version", kCheckpointSchemaVersion},
                {"kind", "checkpoint"},
                {"epochs_done", ckpt.epochs_done},
                {"config_fingerprint", fp},
                {"classifier_mode", ckpt.classifier_mode},
                {"label_space", ckpt.label_space},
                {"model_config", ckpt.model_cfg.to_json()},
                {"arrays", std::move(arrays)}};
  save_json_file(dir / "manifest.json", manifest);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const json manifest = load_json_file(dir / "manifest.json");
  if (!manifest.contains("schema_version") ||
      manifest.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
    throw VersionError("unsupported checkpoint schema version in " + dir.string());
  }
  Checkpoint ckpt;
  ckpt.model_cfg = ModelConfig::from_json(manifest.at("model_config"));
  ckpt.epochs_done = manifest.at("epochs_done").get<int>();
  ckpt.config_fingerprint =
      std::stoull(manifest.at("config_fingerprint").get<std::string>(), nullptr, 16);
  ckpt.classifier_mode = manifest.at("classifier_mode").get<std::string>();
  ckpt.label_space = manifest.at("label_space").get<std::string>();
  ckpt.model = Model<float>::build(ckpt.model_cfg);
  ckpt.momentum = Model<float>::build(ckpt.model_cfg);

  std::map<std::string, const json*> by_name;
  for (const auto& a : manifest.at("arrays")) {
    by_name[a.at("name").get<std::string>()] = &a;
  }
  const auto fill = [&](const std::string& prefix, Model<float>& m) {
    m.visit_params([&](const char* name, Tensor<float>& t) {
      const std::string full = prefix + name;
      const auto it = by_name.find(full);
      if (it == by_name.end()) throw DataError("checkpoint missing array " + full);
      const json& meta = *it->second;
      if (meta.at("shape").get<std::vector<int>>() != t.shape)
        throw DataError("checkpoint shape mismatch for " + full);
      t.data = read_f32_file(dir / meta.at("file").get<std::string>(), t.numel(),
                             meta.at("crc32").get<uint32_t>());
    });
  };
  fill("model.", ckpt.model);
  fill("opt.", ckpt.momentum);
  return ckpt;
}

void write_metrics_csv(const fs::path& path, const std::vector<StepRow>& rows) {
  std::ostringstream out;
  out << "epoch,l_act,l_ego,l_obj,l_int,l_total,lr\n";
  char buf[64];
  const auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& row : rows) {
    out << row.epoch << ',' << fmt(row.losses.l_act) << ',' << fmt(row.losses.l_ego) << ','
        << fmt(row.losses.l_obj) << ',' << fmt(row.losses.l_int) << ','
        << fmt(row.losses.l_total) << ',' << fmt(row.lr) << "\n";
  }
  write_file_atomic(path, out.str());
}

}  // namespace egokd
