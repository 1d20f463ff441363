// Command-line front end: synthesize scenarios, train, track, evaluate,
// compare predictors, and inspect checkpoints.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tcmp/checkpoint.hpp"
#include "tcmp/metrics.hpp"
#include "tcmp/mot_io.hpp"
#include "tcmp/net.hpp"
#include "tcmp/predictor.hpp"
#include "tcmp/scenario.hpp"
#include "tcmp/tracker.hpp"
#include "tcmp/trainer.hpp"
#include "tcmp/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_text_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    out << content;
    if (!out) throw tcmp::Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

// One manifest per command, written atomically next to the primary output.
void write_manifest(const fs::path& next_to, const std::string& command, const json& config,
                    uint64_t seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, double wall_clock_sec) {
  json manifest = {{"command", command},       {"config", config},
                   {"seed", seed},             {"inputs", inputs},
                   {"outputs", outputs},       {"toolkit_version", tcmp::kVersion},
                   {"wall_clock_sec", wall_clock_sec}};
  fs::path path = next_to;
  if (fs::is_directory(next_to)) {
    path = next_to / "manifest.json";
  } else {
    path += ".manifest.json";
  }
  write_text_atomic(path, manifest.dump(2) + "\n");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw tcmp::InvalidInput("cannot open " + path.string());
  json j;
  in >> j;
  return j;
}

tcmp::ImageGeometry read_geometry(const fs::path& path, int* frame_count = nullptr) {
  const json j = read_json_file(path);
  tcmp::ImageGeometry geom{j.at("width").get<double>(), j.at("height").get<double>()};
  if (frame_count != nullptr) *frame_count = j.value("frame_count", 0);
  if (!geom.valid()) throw tcmp::InvalidInput("invalid geometry in " + path.string());
  return geom;
}

int cmd_synth(const std::string& preset_name, const std::string& spec_file, const fs::path& out_dir,
              std::optional<uint64_t> seed, int count) {
  Stopwatch watch;
  tcmp::ScenarioSpec base;
  if (!preset_name.empty()) {
    base = tcmp::preset(preset_name);
  } else if (!spec_file.empty()) {
    base = read_json_file(spec_file).get<tcmp::ScenarioSpec>();
  } else {
    throw tcmp::InvalidInput("synth: need --preset or --spec");
  }
  if (seed) base.seed = *seed;

  fs::create_directories(out_dir);
  std::vector<std::string> outputs;
  for (int i = 0; i < count; ++i) {
    tcmp::ScenarioSpec spec = base;
    if (count > 1) spec.seed = tcmp::splitmix64(base.seed + static_cast<uint64_t>(i));
    const fs::path seq_dir =
        count > 1 ? out_dir / ("seq_" + std::string(i < 10 ? "00" : i < 100 ? "0" : "") +
                               std::to_string(i))
                  : out_dir;
    fs::create_directories(seq_dir);

    const tcmp::GroundTruthSet gt = tcmp::generate(spec);
    if (gt.any_clipped) {
      std::cerr << "warning: some trajectories were clipped to the image bounds\n";
    }
    const auto dets = tcmp::simulate_detections(gt, spec);
    tcmp::write_mot(tcmp::gt_to_records(gt), seq_dir / "gt.txt");
    tcmp::write_mot(tcmp::detections_to_records(dets), seq_dir / "det.txt");
    const json geom = {{"width", gt.geometry.width},
                       {"height", gt.geometry.height},
                       {"frame_count", gt.frame_count}};
    write_text_atomic(seq_dir / "geometry.json", geom.dump(2) + "\n");
    outputs.push_back((seq_dir / "gt.txt").string());
    outputs.push_back((seq_dir / "det.txt").string());
    outputs.push_back((seq_dir / "geometry.json").string());
  }

  write_manifest(out_dir, "synth",
                 {{"preset", preset_name}, {"spec_file", spec_file}, {"count", count}}, base.seed,
                 spec_file.empty() ? std::vector<std::string>{} : std::vector<std::string>{spec_file},
                 outputs, watch.seconds());
  std::cout << "wrote " << count << " sequence(s) to " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const fs::path& data_dir, const std::string& config_file, const fs::path& out_ckpt,
              std::optional<int> epochs, std::optional<uint64_t> seed,
              std::optional<int> batch_size, std::optional<double> lr,
              const std::string& alpha_mode) {
  Stopwatch watch;
  tcmp::TrainConfig config;
  if (!config_file.empty()) config = read_json_file(config_file).get<tcmp::TrainConfig>();
  if (epochs) config.epochs = *epochs;
  if (seed) config.seed = *seed;
  if (batch_size) config.batch_size = *batch_size;
  if (lr) config.learning_rate = *lr;

  // Collect gt.txt + geometry.json pairs, recursively, in sorted order.
  std::vector<fs::path> gt_files;
  if (!fs::is_directory(data_dir)) throw tcmp::InvalidInput("train: --data must be a directory");
  for (const auto& entry : fs::recursive_directory_iterator(data_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "gt.txt") {
      gt_files.push_back(entry.path());
    }
  }
  std::sort(gt_files.begin(), gt_files.end());
  if (gt_files.empty()) throw tcmp::InvalidInput("train: no gt.txt files under " + data_dir.string());

  std::vector<tcmp::Trajectory> trajectories;
  std::vector<std::string> inputs;
  for (const fs::path& gt_path : gt_files) {
    const fs::path geom_path = gt_path.parent_path() / "geometry.json";
    const tcmp::ImageGeometry geom = read_geometry(geom_path);
    const auto records = tcmp::read_mot(gt_path);
    auto trajs = tcmp::records_to_trajectories(records, geom);
    trajectories.insert(trajectories.end(), trajs.begin(), trajs.end());
    inputs.push_back(gt_path.string());
  }
  const tcmp::WindowDataset dataset = tcmp::extract_windows(trajectories, config.max_context);
  if (dataset.empty()) throw tcmp::InvalidInput("train: no usable windows in the data");

  tcmp::NetConfig net_config;
  net_config.max_context = config.max_context;
  if (!alpha_mode.empty()) net_config.alpha_mode = tcmp::alpha_mode_from_name(alpha_mode);
  tcmp::Rng init_rng(config.seed);
  tcmp::TcmpModel model = tcmp::make_model<float>(net_config, init_rng);

  const tcmp::TrainReport report = tcmp::train(model, dataset, config, out_ckpt);
  const json report_json = report;
  write_text_atomic(out_ckpt.string() + ".report.json", report_json.dump(2) + "\n");

  json config_json = config;
  write_manifest(out_ckpt, "train", config_json, config.seed, inputs,
                 {out_ckpt.string(), out_ckpt.string() + ".report.json"}, watch.seconds());
  std::printf("trained on %zu windows: final alpha = %.6f\n", dataset.size(), report.final_alpha);
  if (!report.train_loss.empty()) {
    std::printf("final train loss = %.3e, best val loss = %.3e (epoch %d)\n",
                report.train_loss.back(), report.best_val_loss, report.best_epoch);
  }
  return kExitOk;
}

int cmd_track(const fs::path& det_file, const std::string& geometry_file, const std::string& ckpt,
              const std::string& predictor_kind, const fs::path& out_file,
              const tcmp::TrackerConfig& tracker_config) {
  Stopwatch watch;
  std::optional<tcmp::TcmpModel> model;
  tcmp::ImageGeometry geom{640, 480};
  if (!geometry_file.empty()) geom = read_geometry(geometry_file);

  tcmp::PredictorFactory factory;
  std::string kind = predictor_kind;
  if (!ckpt.empty()) {
    model = tcmp::load_model(ckpt);
    factory = tcmp::make_tcmp_factory(*model, geom);
    kind = "tcmp";
  } else if (predictor_kind == "kalman") {
    factory = tcmp::make_kalman_factory();
  } else if (predictor_kind == "static") {
    factory = tcmp::make_static_factory();
  } else {
    throw tcmp::InvalidInput("track: need --ckpt or --predictor kalman|static");
  }

  const auto records = tcmp::read_mot(det_file);
  int first_frame = 1;
  const auto frames = tcmp::records_to_detections(records, first_frame);

  tcmp::Tracker tracker(tracker_config, factory);
  std::vector<tcmp::MotRecord> results;
  for (size_t i = 0; i < frames.size(); ++i) {
    const int frame = first_frame + static_cast<int>(i);
    for (const tcmp::TrackOutput& t : tracker.step(frame, frames[i])) {
      results.push_back({frame, t.id, t.box.x, t.box.y, t.box.w, t.box.h, t.score});
    }
  }
  tcmp::write_mot(results, out_file);

  const json config = {{"predictor", kind},
                       {"ckpt", ckpt},
                       {"tau_high", tracker_config.tau_high},
                       {"tau_low", tracker_config.tau_low},
                       {"first_gate_iou", tracker_config.first_gate_iou},
                       {"second_gate_iou", tracker_config.second_gate_iou},
                       {"max_age", tracker_config.max_age}};
  write_manifest(out_file, "track", config, 0, {det_file.string()}, {out_file.string()},
                 watch.seconds());
  std::cout << "tracked " << frames.size() << " frames -> " << out_file.string() << "\n";
  return kExitOk;
}

void print_metrics_table(const std::vector<tcmp::SequenceMetrics>& rows) {
  std::printf("%-24s %8s %8s %6s %8s %8s\n", "sequence", "MOTA", "IDF1", "IDSW", "FP", "FN");
  for (const auto& m : rows) {
    std::printf("%-24s %8.4f %8.4f %6ld %8ld %8ld\n", m.name.c_str(), m.mota, m.idf1,
                m.id_switches, m.false_positives, m.false_negatives);
  }
}

json metrics_to_json(const tcmp::SequenceMetrics& m) {
  return {{"name", m.name},
          {"mota", m.mota},
          {"idf1", m.idf1},
          {"id_switches", m.id_switches},
          {"false_positives", m.false_positives},
          {"false_negatives", m.false_negatives},
          {"idtp", m.idtp},
          {"idfp", m.idfp},
          {"idfn", m.idfn},
          {"gt_total", m.gt_total},
          {"hyp_total", m.hyp_total}};
}

int cmd_eval(const fs::path& gt_file, const fs::path& res_file, std::string out_json) {
  Stopwatch watch;
  const auto gt = tcmp::read_mot(gt_file);
  const auto res = tcmp::read_mot(res_file);
  if (tcmp::frame_range_mismatch(gt, res)) {
    throw tcmp::InvalidInput("eval: results contain frames outside the ground-truth range");
  }
  const tcmp::SequenceMetrics m = tcmp::evaluate_sequence(gt, res, res_file.stem().string());
  print_metrics_table({m});

  if (out_json.empty()) out_json = res_file.string() + ".metrics.json";
  write_text_atomic(out_json, metrics_to_json(m).dump(2) + "\n");
  write_manifest(fs::path(out_json), "eval", {{"gt", gt_file.string()}, {"res", res_file.string()}},
                 0, {gt_file.string(), res_file.string()}, {out_json}, watch.seconds());
  return kExitOk;
}

int cmd_compare(const fs::path& gt_file, const std::vector<std::string>& res_files,
                std::string out_json) {
  Stopwatch watch;
  const auto gt = tcmp::read_mot(gt_file);
  std::vector<tcmp::SequenceMetrics> rows;
  for (const std::string& res_file : res_files) {
    const auto res = tcmp::read_mot(res_file);
    if (tcmp::frame_range_mismatch(gt, res)) {
      throw tcmp::InvalidInput("compare: " + res_file + " has frames outside the gt range");
    }
    rows.push_back(tcmp::evaluate_sequence(gt, res, fs::path(res_file).stem().string()));
  }
  print_metrics_table(rows);

  json out = json::array();
  for (const auto& m : rows) out.push_back(metrics_to_json(m));
  if (out_json.empty()) out_json = (fs::path(res_files.front()).parent_path() / "compare.json").string();
  write_text_atomic(out_json, out.dump(2) + "\n");
  std::vector<std::string> inputs{gt_file.string()};
  inputs.insert(inputs.end(), res_files.begin(), res_files.end());
  write_manifest(fs::path(out_json), "compare", {{"gt", gt_file.string()}}, 0, inputs, {out_json},
                 watch.seconds());
  return kExitOk;
}

int cmd_inspect(const fs::path& ckpt, int flops_context) {
  const tcmp::TcmpModel model = tcmp::load_model(ckpt);
  const tcmp::NetConfig& c = model.config;
  std::printf("checkpoint          %s\n", ckpt.string().c_str());
  std::printf("blocks x layers     %d x %d\n", c.num_blocks, c.layers_per_block);
  std::printf("channels            %d\n", c.channels);
  std::printf("kernel size         %d\n", c.kernel_size);
  std::printf("dropout             %.3f\n", c.dropout_p);
  std::printf("max context         %d\n", c.max_context);
  std::printf("alpha mode          %s\n", tcmp::alpha_mode_name(c.alpha_mode));
  std::printf("alpha               %.6f\n", static_cast<double>(model.alpha()));
  std::printf("parameters          %ld\n", tcmp::count_params(model));
  std::printf("receptive field     %d\n", tcmp::receptive_field(c));
  std::printf("flops @ m=%-9d %ld (%s)\n", flops_context,
              tcmp::count_flops(model, flops_context), tcmp::kFlopConvention);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal-convolutional motion prediction toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic scenario");
  std::string synth_preset, synth_spec;
  std::string synth_out;
  uint64_t synth_seed = 0;
  bool synth_seed_set = false;
  int synth_count = 1;
  synth->add_option("--preset", synth_preset, "preset name (case1..case4, linear, mixed_corpus)");
  synth->add_option("--spec", synth_spec, "scenario spec JSON file");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "override the scenario seed")
      ->each([&](const std::string&) { synth_seed_set = true; });
  synth->add_option("--count", synth_count, "number of sequences")->check(CLI::PositiveNumber);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a motion predictor on gt files");
  std::string train_data, train_config, train_out, train_alpha_mode;
  int train_epochs = -1, train_batch = -1;
  double train_lr = -1;
  int64_t train_seed = -1;
  train_cmd->add_option("--data", train_data, "directory with gt.txt/geometry.json")->required();
  train_cmd->add_option("--config", train_config, "training config JSON");
  train_cmd->add_option("--out", train_out, "checkpoint output path")->required();
  train_cmd->add_option("--epochs", train_epochs, "override epochs");
  train_cmd->add_option("--seed", train_seed, "override seed");
  train_cmd->add_option("--batch-size", train_batch, "override batch size");
  train_cmd->add_option("--lr", train_lr, "override learning rate");
  train_cmd->add_option("--alpha-mode", train_alpha_mode, "learned|final_only|skip_only");

  // track
  auto* track = app.add_subcommand("track", "run the two-stage tracker over a detection file");
  std::string track_det, track_geom, track_ckpt, track_pred, track_out;
  tcmp::TrackerConfig tracker_config;
  track->add_option("--det", track_det, "detection file (MOT format)")->required();
  track->add_option("--geometry", track_geom, "geometry.json (required for --ckpt)");
  track->add_option("--ckpt", track_ckpt, "model checkpoint");
  track->add_option("--predictor", track_pred, "kalman|static");
  track->add_option("--out", track_out, "results file")->required();
  track->add_option("--tau-high", tracker_config.tau_high, "high score threshold");
  track->add_option("--tau-low", tracker_config.tau_low, "low score threshold");
  track->add_option("--gate1", tracker_config.first_gate_iou, "first-stage IoU gate");
  track->add_option("--gate2", tracker_config.second_gate_iou, "second-stage IoU gate");
  track->add_option("--max-age", tracker_config.max_age, "frames a lost track survives");

  // eval / compare
  auto* eval_cmd = app.add_subcommand("eval", "CLEAR/IDF1 metrics for one results file");
  std::string eval_gt, eval_res, eval_out;
  eval_cmd->add_option("--gt", eval_gt, "ground-truth file")->required();
  eval_cmd->add_option("--res", eval_res, "results file")->required();
  eval_cmd->add_option("--out", eval_out, "metrics JSON path");

  auto* compare = app.add_subcommand("compare", "metrics table across results files");
  std::string compare_gt, compare_out;
  std::vector<std::string> compare_res;
  compare->add_option("--gt", compare_gt, "ground-truth file")->required();
  compare->add_option("--res", compare_res, "results files")->required()->expected(-1);
  compare->add_option("--out", compare_out, "comparison JSON path");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "print checkpoint accounting");
  std::string inspect_ckpt;
  int inspect_context = 5;
  inspect->add_option("--ckpt", inspect_ckpt, "model checkpoint")->required();
  inspect->add_option("--flops-context", inspect_context, "context length for the FLOP count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      return cmd_synth(synth_preset, synth_spec, synth_out,
                       synth_seed_set ? std::optional<uint64_t>(synth_seed) : std::nullopt,
                       synth_count);
    }
    if (train_cmd->parsed()) {
      return cmd_train(train_data, train_config, train_out,
                       train_epochs >= 0 ? std::optional<int>(train_epochs) : std::nullopt,
                       train_seed >= 0 ? std::optional<uint64_t>(train_seed) : std::nullopt,
                       train_batch > 0 ? std::optional<int>(train_batch) : std::nullopt,
                       train_lr > 0 ? std::optional<double>(train_lr) : std::nullopt,
                       train_alpha_mode);
    }
    if (track->parsed()) {
      return cmd_track(track_det, track_geom, track_ckpt, track_pred, track_out, tracker_config);
    }
    if (eval_cmd->parsed()) return cmd_eval(eval_gt, eval_res, eval_out);
    if (compare->parsed()) return cmd_compare(compare_gt, compare_res, compare_out);
    if (inspect->parsed()) return cmd_inspect(inspect_ckpt, inspect_context);
  } catch (const tcmp::DivergedTraining& e) {
    std::cerr << "error: " << e.what() << " (batch " << e.batch << ")\n";
    return kExitRuntime;
  } catch (const tcmp::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const tcmp::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const tcmp::CorruptCheckpoint& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const tcmp::UndefinedMetric& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
