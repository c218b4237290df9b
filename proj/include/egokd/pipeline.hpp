#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "egokd/labelgen.hpp"
#include "egokd/losses.hpp"
#include "egokd/metrics.hpp"
#include "egokd/model.hpp"
#include "egokd/video_data.hpp"

namespace egokd {

enum class LrScheduleKind { cosine, step };
enum class DownstreamMode { multilabel, single };
enum class Aggregation { mean, temporal_max };

Aggregation aggregation_from_string(const std::string& s);
const char* to_string(Aggregation a);

struct TrainConfig {
  int epochs = 10;
  int batch_size = 8;
  double base_lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  LrScheduleKind lr_schedule = LrScheduleKind::cosine;
  std::vector<int> lr_steps;  // epochs with a 10x decay; step schedule only
  uint64_t seed = 0;
  LossWeights weights;
  TaskFlags tasks;
  bool aux_in_finetune = false;
  int clip_length = 8;
  int clip_stride = 1;
  IntLossForm int_loss_form = IntLossForm::bce;
  IntMapMode int_map_mode = IntMapMode::both;
  DownstreamMode downstream = DownstreamMode::multilabel;

  void validate() const;
  nlohmann::json to_json() const;
  // Rejects unknown keys and conflicting schedule settings.
  static TrainConfig from_json(const nlohmann::json& j);
  uint64_t fingerprint() const;
};

struct Checkpoint {
  ModelConfig model_cfg;
  Model<float> model;
  Model<float> momentum;
  int epochs_done = 0;
  uint64_t config_fingerprint = 0;
  std::string classifier_mode = "softmax";  // softmax | sigmoid
  std::string label_space = "action";       // action | object
};

bool checkpoints_equal(const Checkpoint& a, const Checkpoint& b);

struct StepRow {
  int epoch = 0;
  LossReport losses;
  double lr = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepRow> rows;
};

// Deterministic helpers shared with tests.
std::vector<int> epoch_order(uint64_t seed, int epoch, int n);
// Clip starts are quantized to the temporal feature stride so archive map
// cells line up exactly with the sampled clip.
int train_clip_start(uint64_t seed, int epoch, const std::string& video_id, int frame_count,
                     int clip_length, int clip_stride, int temporal_stride);
double lr_for_epoch(const TrainConfig& cfg, int epoch);

// buf = momentum*buf + (grad + wd*p); p -= lr*buf, restricted to parameter
// names accepted by `active`.
void sgd_step(Model<float>& model, const Model<float>& grads, Model<float>& momentum_buf,
              float lr, float weight_decay, float momentum,
              const std::function<bool(const std::string&)>& active);

// stop_after_epoch < cfg.epochs checkpoints an interrupted run that a later
// call can resume to completion.
TrainResult pretrain(const Dataset& dataset, const PseudoLabelSet* labels,
                     const TrainConfig& cfg, const ModelConfig& model_cfg,
                     const Checkpoint* resume = nullptr, int threads = 1,
                     int stop_after_epoch = -1);

// init == nullptr trains from scratch. With aux_in_finetune, the hand and
// object map heads are kept and the interaction loss is applied against the
// downstream label archive; ego and object score losses stay off.
TrainResult finetune(const Checkpoint* init, const Dataset& dataset,
                     const PseudoLabelSet* labels, const TrainConfig& cfg, int threads = 1);

std::vector<double> predict_video(const Model<float>& model, const std::string& classifier_mode,
                                  const VideoRecord& video, int n_clips, int clip_length,
                                  int clip_stride, Aggregation agg);

EvalResult evaluate(const Checkpoint& ckpt, const Dataset& dataset, Split split,
                    const std::string& metric, int n_clips, Aggregation agg, int threads = 1);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<StepRow>& rows);

}  // namespace egokd
