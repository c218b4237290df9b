// Command-line entry point wiring dataset generation, pseudo-label
// generation, training, evaluation, and the ablation grid.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "egokd/errors.hpp"
#include "egokd/io.hpp"
#include "egokd/labelgen.hpp"
#include "egokd/metrics.hpp"
#include "egokd/pipeline.hpp"
#include "egokd/run_manifest.hpp"
#include "egokd/teachers.hpp"
#include "egokd/video_data.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace egokd;

namespace {

TrainConfig load_train_config(const std::string& path) {
  return TrainConfig::from_json(load_json_file(path));
}

GridShape parse_grid(const std::string& s) {
  GridShape g;
  if (std::sscanf(s.c_str(), "%d,%d,%d", &g.t, &g.h, &g.w) != 3 || g.t < 1 || g.h < 1 || g.w < 1)
    throw UsageError("--grid expects t,h,w with positive integers");
  return g;
}

// CLI output reports metrics on the conventional 0..100 scale.
json eval_result_json(const EvalResult& r) {
  json out{{"metric", r.metric}, {"value", 100.0 * r.value}, {"n", r.n_items}};
  if (r.has_per_class) {
    std::vector<double> scaled = r.per_class;
    for (double& v : scaled) v *= 100.0;
    out["per_class"] = scaled;  // NaN serializes as null
  }
  return out;
}

ModelConfig model_config_for(const Dataset& dataset, const TrainConfig& cfg) {
  ModelConfig mcfg;
  mcfg.in_channels = dataset.spec.channels;
  mcfg.height = dataset.spec.height;
  mcfg.width = dataset.spec.width;
  mcfg.clip_length = cfg.clip_length;
  mcfg.action_classes = dataset.spec.action_classes;
  mcfg.object_classes = dataset.spec.object_classes;
  return mcfg;
}

struct GenDataArgs {
  std::string out;
  uint64_t seed = 0;
  DatasetSpec spec;
};

struct GenLabelsArgs {
  std::string dataset, out, grid = "8,8,8", detections;
  double beta = 1.0, det_threshold = 0.5;
  uint64_t seed = 0;
  int n_clips_ego = 2, n_frames_obj = 0, clip_length = 8, clip_stride = 1;
  DetectionNoise noise;
  double ego_gain = 4.0, obj_gain = 50.0;
};

int run_gen_labels(const GenLabelsArgs& a) {
  const Dataset dataset = read_dataset(a.dataset);
  const GridShape grid = parse_grid(a.grid);
  ScoreConfig cfg;
  cfg.beta = a.beta;
  cfg.det_threshold = a.det_threshold;
  cfg.n_clips_ego = a.n_clips_ego;
  cfg.n_frames_obj = a.n_frames_obj;
  cfg.clip_length = a.clip_length;
  cfg.clip_stride = a.clip_stride;
  cfg.validate();

  const AnalyticEgoTeacher ego_teacher(a.ego_gain);
  const AnalyticObjectTeacher object_teacher(dataset.spec.object_classes, a.obj_gain);
  const AnalyticDetectionTeacher detection_teacher(a.noise);

  json resolved{{"dataset", a.dataset},       {"grid", a.grid},
                {"beta", a.beta},             {"det_threshold", a.det_threshold},
                {"n_clips_ego", a.n_clips_ego}, {"n_frames_obj", a.n_frames_obj},
                {"clip_length", a.clip_length}, {"clip_stride", a.clip_stride},
                {"jitter_sigma", a.noise.jitter_sigma}, {"miss_rate", a.noise.miss_rate},
                {"conf_lo", a.noise.conf_lo}, {"conf_hi", a.noise.conf_hi},
                {"ego_gain", a.ego_gain},     {"obj_gain", a.obj_gain},
                {"detections", a.detections}};
  RunRecorder rec("gen-labels", resolved, a.seed);
  rec.add_input("dataset", a.dataset);

  PseudoLabelSet labels;
  if (!a.detections.empty()) {
    rec.add_input("detections", a.detections);
    const auto frames = read_detections_jsonl(a.detections);
    labels = build_pseudolabels_from_detections(dataset, ego_teacher, object_teacher, frames,
                                                cfg, grid);
    write_labels(labels, a.out);
  } else {
    labels = build_pseudolabels(dataset, ego_teacher, object_teacher, detection_teacher, cfg,
                                grid, a.seed);
    write_labels(labels, a.out);
    // Persist the raw teacher detections next to the derived labels.
    std::vector<DetectionFrame> all;
    for (const auto& video : dataset.videos) {
      auto frames = detection_teacher.detect(video, a.seed);
      all.insert(all.end(), frames.begin(), frames.end());
    }
    write_detections_jsonl(fs::path(a.out) / "detections.jsonl", all);
  }
  rec.add_output("labels", a.out);
  rec.finish(a.out);
  return 0;
}

struct TrainArgs {
  std::string data, labels, config, out, ckpt, resume;
  bool scratch = false;
  std::string aux_int = "off";
  int threads = 1;
};

int run_pretrain(const TrainArgs& a) {
  const Dataset dataset = read_dataset(a.data);
  const TrainConfig cfg = load_train_config(a.config);
  const ModelConfig mcfg = model_config_for(dataset, cfg);

  RunRecorder rec("pretrain", cfg.to_json(), cfg.seed);
  rec.add_input("data", a.data);

  std::optional<PseudoLabelSet> labels;
  if (!a.labels.empty()) {
    labels = read_labels(a.labels);
    rec.add_input("labels", a.labels);
  }
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    rec.add_input("resume", a.resume);
  }

  const TrainResult result =
      pretrain(dataset, labels ? &*labels : nullptr, cfg, mcfg,
               resume ? &*resume : nullptr, a.threads);
  save_checkpoint(result.checkpoint, a.out);
  write_metrics_csv(fs::path(a.out) / "metrics.csv", result.rows);
  rec.add_output("checkpoint", a.out);
  rec.finish(a.out);
  return 0;
}

int run_finetune(const TrainArgs& a) {
  const Dataset dataset = read_dataset(a.data);
  TrainConfig cfg = load_train_config(a.config);
  if (a.aux_int == "on") {
    cfg.aux_in_finetune = true;
  } else if (a.aux_int == "off") {
    cfg.aux_in_finetune = false;
  } else {
    throw UsageError("--aux-int expects on or off");
  }
  if (a.ckpt.empty() && !a.scratch)
    throw UsageError("finetune needs --ckpt or --scratch");
  if (!a.ckpt.empty() && a.scratch)
    throw UsageError("--ckpt conflicts with --scratch");

  RunRecorder rec("finetune", cfg.to_json(), cfg.seed);
  rec.add_input("data", a.data);

  std::optional<Checkpoint> init;
  if (!a.ckpt.empty()) {
    init = load_checkpoint(a.ckpt);
    rec.add_input("ckpt", a.ckpt);
  }
  std::optional<PseudoLabelSet> labels;
  if (!a.labels.empty()) {
    labels = read_labels(a.labels);
    rec.add_input("labels", a.labels);
  }

  const TrainResult result =
      finetune(init ? &*init : nullptr, dataset, labels ? &*labels : nullptr, cfg, a.threads);
  save_checkpoint(result.checkpoint, a.out);
  write_metrics_csv(fs::path(a.out) / "metrics.csv", result.rows);
  rec.add_output("checkpoint", a.out);
  rec.finish(a.out);
  return 0;
}

struct EvalArgs {
  std::string ckpt, data, metric = "map", agg = "mean", split = "finetune_val", out;
  int n_clips = 10;
  int threads = 1;
};

int run_eval(const EvalArgs& a) {
  const Dataset dataset = read_dataset(a.data);
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const EvalResult result = evaluate(ckpt, dataset, split_from_string(a.split), a.metric,
                                     a.n_clips, aggregation_from_string(a.agg), a.threads);
  const json out = eval_result_json(result);
  std::cout << out.dump() << "\n";
  if (!a.out.empty()) {
    json resolved{{"metric", a.metric}, {"n_clips", a.n_clips},
                  {"agg", a.agg},       {"split", a.split}};
    RunRecorder rec("eval", resolved, 0);
    rec.add_input("data", a.data);
    rec.add_input("ckpt", a.ckpt);
    write_file_atomic(a.out, out.dump(2) + "\n");
    rec.add_output("result", a.out);
    rec.finish(a.out);
  }
  return 0;
}

struct AblateArgs {
  std::string data, labels, config, out;
  std::string rows = "none,ego,obj,int,all,hand,object";
  std::string agg = "temporal_max";
  int n_clips = 10;
  int threads = 1;
};

int run_ablate(const AblateArgs& a) {
  const Dataset dataset = read_dataset(a.data);
  const PseudoLabelSet labels = read_labels(a.labels);
  const TrainConfig base = load_train_config(a.config);

  RunRecorder rec("ablate", base.to_json(), base.seed);
  rec.add_input("data", a.data);
  rec.add_input("labels", a.labels);

  std::vector<std::string> rows;
  {
    std::string token;
    std::istringstream in(a.rows);
    while (std::getline(in, token, ',')) {
      if (!token.empty()) rows.push_back(token);
    }
  }
  if (rows.empty()) throw UsageError("--rows is empty");

  std::ostringstream csv;
  csv << "row,enable_ego,enable_obj,enable_int,int_map_mode,metric,value\n";
  for (const auto& row : rows) {
    TrainConfig cfg = base;
    cfg.tasks = TaskFlags{};
    cfg.int_map_mode = IntMapMode::both;
    if (row == "none") {
    } else if (row == "ego") {
      cfg.tasks.ego = true;
    } else if (row == "obj") {
      cfg.tasks.obj = true;
    } else if (row == "int") {
      cfg.tasks.interaction = true;
    } else if (row == "all") {
      cfg.tasks = TaskFlags{true, true, true};
    } else if (row == "hand") {
      cfg.tasks.interaction = true;
      cfg.int_map_mode = IntMapMode::hand_only;
    } else if (row == "object") {
      cfg.tasks.interaction = true;
      cfg.int_map_mode = IntMapMode::object_only;
    } else {
      throw UsageError("unknown ablation row: " + row);
    }

    const ModelConfig mcfg = model_config_for(dataset, cfg);
    const fs::path row_dir = fs::path(a.out) / row;
    const TrainResult pre = pretrain(dataset, &labels, cfg, mcfg, nullptr, a.threads);
    save_checkpoint(pre.checkpoint, row_dir / "pretrain");
    write_metrics_csv(row_dir / "pretrain" / "metrics.csv", pre.rows);

    TrainConfig ft = cfg;
    ft.tasks = TaskFlags{};
    ft.aux_in_finetune = false;
    const TrainResult fin = finetune(&pre.checkpoint, dataset, nullptr, ft, a.threads);
    save_checkpoint(fin.checkpoint, row_dir / "finetune");
    write_metrics_csv(row_dir / "finetune" / "metrics.csv", fin.rows);

    const EvalResult result =
        evaluate(fin.checkpoint, dataset, Split::finetune_val, "map", a.n_clips,
                 aggregation_from_string(a.agg), a.threads);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", 100.0 * result.value);
    csv << row << ',' << (cfg.tasks.ego ? 1 : 0) << ',' << (cfg.tasks.obj ? 1 : 0) << ','
        << (cfg.tasks.interaction ? 1 : 0) << ','
        << (cfg.int_map_mode == IntMapMode::both
                ? "both"
                : cfg.int_map_mode == IntMapMode::hand_only ? "hand" : "object")
        << ",map," << buf << "\n";
  }
  fs::create_directories(a.out);
  write_file_atomic(fs::path(a.out) / "ablate.csv", csv.str());
  rec.add_output("ablate", a.out);
  rec.finish(a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic video pre-training with egocentric-signal distillation"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen_data = app.add_subcommand("gen-data", "Generate a synthetic video dataset");
  gen_data->add_option("--out", gd.out, "Output dataset directory")->required();
  gen_data->add_option("--seed", gd.seed, "Generation seed")->capture_default_str();
  gen_data->add_option("--videos-pretrain", gd.spec.n_pretrain)->capture_default_str();
  gen_data->add_option("--videos-finetune-train", gd.spec.n_finetune_train)
      ->capture_default_str();
  gen_data->add_option("--videos-finetune-val", gd.spec.n_finetune_val)->capture_default_str();
  gen_data->add_option("--frames", gd.spec.frame_count)->capture_default_str();
  gen_data->add_option("--height", gd.spec.height)->capture_default_str();
  gen_data->add_option("--width", gd.spec.width)->capture_default_str();
  gen_data->add_option("--actions", gd.spec.action_classes)->capture_default_str();
  gen_data->add_option("--object-classes", gd.spec.object_classes)->capture_default_str();
  gen_data->add_option("--hand-blobs", gd.spec.hand_blobs)->capture_default_str();
  gen_data->add_option("--object-blobs", gd.spec.object_blobs)->capture_default_str();

  GenLabelsArgs gl;
  auto* gen_labels = app.add_subcommand("gen-labels", "Build the pseudo-label archive");
  gen_labels->add_option("--dataset", gl.dataset, "Input dataset directory")->required();
  gen_labels->add_option("--out", gl.out, "Output label archive directory")->required();
  gen_labels->add_option("--grid", gl.grid, "Map grid t,h,w")->capture_default_str();
  gen_labels->add_option("--beta", gl.beta, "Softmax temperature")->capture_default_str();
  gen_labels->add_option("--det-threshold", gl.det_threshold, "Detection confidence threshold")
      ->capture_default_str();
  gen_labels->add_option("--seed", gl.seed)->capture_default_str();
  gen_labels->add_option("--n-clips-ego", gl.n_clips_ego)->capture_default_str();
  gen_labels->add_option("--n-frames-obj", gl.n_frames_obj, "0 = all frames")
      ->capture_default_str();
  gen_labels->add_option("--clip-length", gl.clip_length)->capture_default_str();
  gen_labels->add_option("--clip-stride", gl.clip_stride)->capture_default_str();
  gen_labels->add_option("--jitter-sigma", gl.noise.jitter_sigma)->capture_default_str();
  gen_labels->add_option("--miss-rate", gl.noise.miss_rate)->capture_default_str();
  gen_labels->add_option("--conf-lo", gl.noise.conf_lo)->capture_default_str();
  gen_labels->add_option("--conf-hi", gl.noise.conf_hi)->capture_default_str();
  gen_labels->add_option("--ego-gain", gl.ego_gain)->capture_default_str();
  gen_labels->add_option("--obj-gain", gl.obj_gain)->capture_default_str();
  gen_labels->add_option("--detections", gl.detections,
                         "Read detections from this JSONL file instead of the teacher");

  TrainArgs pt;
  auto* pre = app.add_subcommand("pretrain", "Pre-train on the pretrain split");
  pre->add_option("--data", pt.data)->required();
  pre->add_option("--labels", pt.labels, "Pseudo-label archive (required for aux tasks)");
  pre->add_option("--config", pt.config, "Training config JSON")->required();
  pre->add_option("--out", pt.out, "Output checkpoint directory")->required();
  pre->add_option("--resume", pt.resume, "Resume from this checkpoint");
  pre->add_option("--threads", pt.threads)->capture_default_str();

  TrainArgs ft;
  auto* fin = app.add_subcommand("finetune", "Fine-tune on the downstream split");
  fin->add_option("--ckpt", ft.ckpt, "Pre-trained checkpoint directory");
  fin->add_flag("--scratch", ft.scratch, "Train from random initialization");
  fin->add_option("--data", ft.data)->required();
  fin->add_option("--labels", ft.labels, "Label archive (needed with --aux-int on)");
  fin->add_option("--config", ft.config)->required();
  fin->add_option("--aux-int", ft.aux_int, "Re-enable the interaction loss: on|off")
      ->capture_default_str();
  fin->add_option("--out", ft.out)->required();
  fin->add_option("--threads", ft.threads)->capture_default_str();

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "Evaluate a checkpoint");
  evc->add_option("--ckpt", ev.ckpt)->required();
  evc->add_option("--data", ev.data)->required();
  evc->add_option("--metric", ev.metric, "map|top1|top5")->capture_default_str();
  evc->add_option("--n-clips", ev.n_clips)->capture_default_str();
  evc->add_option("--agg", ev.agg, "mean|temporal_max")->capture_default_str();
  evc->add_option("--split", ev.split)->capture_default_str();
  evc->add_option("--out", ev.out, "Also write the result JSON here");
  evc->add_option("--threads", ev.threads)->capture_default_str();

  AblateArgs ab;
  auto* abc = app.add_subcommand("ablate", "Run the per-task on/off grid");
  abc->add_option("--data", ab.data)->required();
  abc->add_option("--labels", ab.labels)->required();
  abc->add_option("--config", ab.config)->required();
  abc->add_option("--out", ab.out)->required();
  abc->add_option("--rows", ab.rows, "Comma-separated row names")->capture_default_str();
  abc->add_option("--n-clips", ab.n_clips)->capture_default_str();
  abc->add_option("--agg", ab.agg)->capture_default_str();
  abc->add_option("--threads", ab.threads)->capture_default_str();

  std::string dump_path;
  auto* dump = app.add_subcommand("dump-config", "Print a training config with defaults");
  dump->add_option("--config", dump_path, "Validate and re-print this config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (gen_data->parsed()) {
      const Dataset dataset = generate_dataset(gd.spec, gd.seed);
      json resolved = json::object();
      resolved["seed"] = gd.seed;
      RunRecorder rec("gen-data", resolved, gd.seed);
      write_dataset(dataset, gd.out);
      rec.add_output("dataset", gd.out);
      rec.finish(gd.out);
      return 0;
    }
    if (gen_labels->parsed()) return run_gen_labels(gl);
    if (pre->parsed()) return run_pretrain(pt);
    if (fin->parsed()) return run_finetune(ft);
    if (evc->parsed()) return run_eval(ev);
    if (abc->parsed()) return run_ablate(ab);
    if (dump->parsed()) {
      const TrainConfig cfg =
          dump_path.empty() ? TrainConfig{} : load_train_config(dump_path);
      std::cout << cfg.to_json().dump(2) << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 5;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
