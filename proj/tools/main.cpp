#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "dataset_io.hpp"
#include "run_config.hpp"
#include "sphcnn/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sphcnn::cli {
namespace {

constexpr std::uint64_t kStreamModel = 4;

// --out resolves under SPHCNN_OUT_ROOT when that is set and the path is
// relative; nothing else honors environment overrides.
fs::path resolve_out(const std::string& out) {
  fs::path path(out);
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("SPHCNN_OUT_ROOT")) {
    return fs::path(root) / path;
  }
  return path;
}

struct CommonArgs {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  int threads = -1;
  bool seed_set = false;
  bool threads_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required = true) {
  cmd->add_option("--config", args.config_path, "JSON run configuration file");
  auto* out = cmd->add_option("--out", args.out, "Output path");
  if (out_required) out->required();
  cmd->add_option("--seed", args.seed, "Master seed (overrides the config file)");
  cmd->add_option("--threads", args.threads, "Worker thread cap (0 = all cores)");
}

RunConfig resolve_config(const CommonArgs& args, CLI::App* cmd) {
  RunConfig config;
  if (!args.config_path.empty()) config = load_run_config(args.config_path);
  if (cmd->count("--seed") > 0) config.seed = args.seed;
  if (cmd->count("--threads") > 0) config.threads = args.threads;
  config.train.seed = config.seed;
  return config;
}

ModelConfig model_config(const RunConfig& config) {
  ModelConfig mc;
  mc.n_map_in = config.n_map_in;
  mc.n_conv = config.n_conv;
  mc.n_map_out = config.n_map_out;
  mc.channels = config.freq_bins;
  mc.bias = config.bias;
  mc.seed = derive_seed(config.seed, kStreamModel, 0);
  return mc;
}

int cmd_generate(const RunConfig& config, const fs::path& out_dir) {
  generate_dataset(config, out_dir);
  std::printf("generate: wrote %d subjects (x2 ears) under %s\n", config.subjects,
              out_dir.string().c_str());
  return 0;
}

int cmd_train(RunConfig config, const fs::path& data_dir, const fs::path& out_dir) {
  const Dataset dataset = open_dataset(data_dir);

  // The dataset fixes the sampling layout; the config drives the model.
  config.dense_points = dataset.dense_grid->size();
  config.known_points = dataset.known_grid->size();
  config.freq_bins = dataset.freqs.bins();
  config.validate();

  BasisCache cache;
  const SolverOptions opts{config.condition_threshold, config.ridge};
  ModelParams params = init_model(model_config(config), dataset.known_grid,
                                  dataset.dense_grid);
  std::printf("train: model has %ld learnable parameters\n", params.parameter_count());

  const auto train_samples = collect_samples(dataset, dataset.subjects.train);
  const auto val_samples = collect_samples(dataset, dataset.subjects.validation);
  std::printf("train: %zu train samples, %zu validation samples\n", train_samples.size(),
              val_samples.size());

  fs::create_directories(out_dir);
  TrainResult result;
  if (config.train.max_epochs == 0) {
    result.best_params = params;
    result.best_epoch = 0;
  } else {
    result = train(train_samples, val_samples, params, config.train, cache,
                   config.resolved_threads(), opts, [](const EpochStats& stats) {
                     std::printf("epoch %d train %.4f val %.4f\n", stats.epoch,
                                 stats.train_lsd, stats.val_lsd);
                     std::fflush(stdout);
                   });
    std::printf("train: best validation LSD %.6f dB at epoch %d\n", result.best_val_lsd,
                result.best_epoch);
  }

  save_checkpoint(out_dir / "checkpoint.bin", result.best_params);
  save_history(out_dir / "history.tsv", result.history);
  write_run_config(config, out_dir / "run_config.json");
  return 0;
}

int cmd_interpolate(const fs::path& checkpoint_path, const fs::path& input_path,
                    const fs::path& out_path) {
  const ModelParams params = load_checkpoint(checkpoint_path);
  const HrtfField input = load_field(input_path);

  if (input.grid->hash() != params.sparse_grid->hash()) {
    throw ConfigError("interpolate: input grid hash " + hash_to_hex(input.grid->hash()) +
                      " does not match checkpoint sparse grid hash " +
                      hash_to_hex(params.sparse_grid->hash()));
  }
  if (input.freqs.bins() != params.channels) {
    throw ShapeError("interpolate: input has " + std::to_string(input.freqs.bins()) +
                     " bins, checkpoint expects " + std::to_string(params.channels));
  }

  BasisCache cache;
  const ModelWorkspace ws = make_workspace(params, cache);
  HrtfField output;
  output.grid = params.dense_grid;
  output.freqs = input.freqs;
  output.values = model_forward(input.values, params, ws);
  output.subject = input.subject;
  output.ear = input.ear;
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  save_field(output, out_path);
  std::printf("interpolate: wrote %s (%d directions x %d bins)\n",
              out_path.string().c_str(), output.grid->size(), output.freqs.bins());
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  int baseline_order = -1;
  std::string slice_subject;
  std::string slice_ear = "left";
  double slice_phi = kPi;
  double slice_tol = 0.1;
};

int cmd_evaluate(RunConfig config, const fs::path& data_dir, const fs::path& out_dir,
                 const EvalArgs& args) {
  const Dataset dataset = open_dataset(data_dir);
  if (dataset.subjects.test.empty()) throw ConfigError("evaluate: dataset has no test split");

  config.dense_points = dataset.dense_grid->size();
  config.known_points = dataset.known_grid->size();
  config.freq_bins = dataset.freqs.bins();

  BasisCache cache;
  const SolverOptions opts{config.condition_threshold, config.ridge};

  std::string label;
  ModelParams params;
  ModelWorkspace ws;
  if (args.baseline_order >= 0) {
    label = "SH N=" + std::to_string(args.baseline_order);
  } else {
    params = load_checkpoint(args.checkpoint);
    if (params.sparse_grid->hash() != dataset.known_grid->hash() ||
        params.dense_grid->hash() != dataset.dense_grid->hash()) {
      throw ConfigError(
          "evaluate: checkpoint grids (sparse " + hash_to_hex(params.sparse_grid->hash()) +
          ", dense " + hash_to_hex(params.dense_grid->hash()) +
          ") do not match dataset grids (known " + hash_to_hex(dataset.known_grid->hash()) +
          ", dense " + hash_to_hex(dataset.dense_grid->hash()) + ")");
    }
    ws = make_workspace(params, cache, opts);
    label = "spherical-cnn";
  }

  std::vector<EvalSample> samples;
  for (const auto& id : dataset.subjects.test) {
    for (Ear ear : {Ear::Left, Ear::Right}) {
      HrtfField dense = dataset.load_dense(id, ear);
      const Matrix sparse = dense.values(dataset.split.known, Eigen::all);
      EvalSample sample;
      sample.subject = id;
      sample.ear = ear;
      sample.truth = std::move(dense.values);
      sample.predicted =
          args.baseline_order >= 0
              ? sh_baseline(sparse, *dataset.known_grid, args.baseline_order,
                            *dataset.dense_grid, cache, opts)
              : model_forward(sparse, params, ws);
      samples.push_back(std::move(sample));
    }
  }

  const EvalReport report = build_report(label, samples, dataset.split.unknown,
                                         dataset.freqs, config.to_json().dump(2));
  fs::create_directories(out_dir);
  write_report_files(report, dataset.freqs, out_dir);

  // Azimuth slice of predicted vs truth for one named subject.
  const std::string slice_subject =
      args.slice_subject.empty() ? dataset.subjects.test.front() : args.slice_subject;
  const Ear slice_ear = ear_from_string(args.slice_ear);
  for (const auto& sample : samples) {
    if (sample.subject != slice_subject || sample.ear != slice_ear) continue;
    HrtfField view;
    view.grid = dataset.dense_grid;
    view.freqs = dataset.freqs;
    view.subject = sample.subject;
    view.ear = sample.ear;
    view.values = sample.predicted;
    write_slice(export_slice(view, args.slice_phi, args.slice_tol),
                out_dir / ("slice_predicted_" + slice_subject + "_" + to_string(slice_ear) +
                           ".tsv"));
    view.values = sample.truth;
    write_slice(export_slice(view, args.slice_phi, args.slice_tol),
                out_dir / ("slice_truth_" + slice_subject + "_" + to_string(slice_ear) +
                           ".tsv"));
  }

  json summary;
  summary["method"] = report.method_label;
  summary["mean_lsd_db"] = report.mean_lsd;
  summary["pooled_lsd_db"] = report.pooled_lsd;
  summary["per_subject_lsd_db"] = report.per_subject_lsd;
  {
    std::vector<double> curve(report.per_frequency_lsd.data(),
                              report.per_frequency_lsd.data() +
                                  report.per_frequency_lsd.size());
    summary["per_frequency_lsd_db"] = curve;
  }
  summary["ears"] = "both";
  summary["unknown_directions"] = dataset.split.unknown.size();
  summary["test_subjects"] = dataset.subjects.test;
  summary["dense_grid_hash"] = hash_to_hex(dataset.dense_grid->hash());
  summary["known_grid_hash"] = hash_to_hex(dataset.known_grid->hash());
  summary["config"] = config.to_json();
  std::ofstream out(out_dir / "report.json");
  if (!out) throw IoError("cannot write report.json");
  out << summary.dump(2) << "\n";
  if (!out) throw IoError("failed writing report.json");

  write_run_config(config, out_dir / "run_config.json");
  std::printf("evaluate[%s]: mean unknown-direction LSD %.6f dB over %zu test subjects\n",
              report.method_label.c_str(), report.mean_lsd, report.per_subject_lsd.size());
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Spherical-CNN HRTF interpolation toolkit"};
  app.require_subcommand(1);

  CommonArgs gen_args;
  int gen_subjects = -1;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic HRTF dataset");
  add_common(generate, gen_args);
  generate->add_option("--subjects", gen_subjects, "Number of synthetic subjects");

  CommonArgs train_args;
  std::string train_data;
  int train_max_epochs = -1;
  auto* train_cmd = app.add_subcommand("train", "Train the interpolation model");
  add_common(train_cmd, train_args);
  train_cmd->add_option("--data", train_data, "Dataset directory")->required();
  train_cmd->add_option("--max-epochs", train_max_epochs, "Epoch cap override");

  std::string interp_checkpoint, interp_input, interp_out;
  auto* interpolate = app.add_subcommand("interpolate", "Densify one sparse field file");
  interpolate->add_option("--checkpoint", interp_checkpoint, "Trained checkpoint")
      ->required();
  interpolate->add_option("--input", interp_input, "Sparse field file")->required();
  interpolate->add_option("--out", interp_out, "Output dense field file")->required();

  CommonArgs eval_args_common;
  std::string eval_data;
  EvalArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint or SH baseline");
  add_common(evaluate, eval_args_common);
  evaluate->add_option("--data", eval_data, "Dataset directory")->required();
  auto* ckpt_opt = evaluate->add_option("--checkpoint", eval_args.checkpoint,
                                        "Trained checkpoint to evaluate");
  auto* baseline_opt = evaluate->add_option(
      "--baseline", eval_args.baseline_order, "Evaluate the SH baseline at this order");
  ckpt_opt->excludes(baseline_opt);
  evaluate->add_option("--slice-subject", eval_args.slice_subject,
                       "Subject for the azimuth slice export");
  evaluate->add_option("--slice-ear", eval_args.slice_ear, "left|right");
  evaluate->add_option("--slice-phi", eval_args.slice_phi, "Slice azimuth in radians");
  evaluate->add_option("--slice-tol", eval_args.slice_tol, "Slice tolerance in radians");

  CommonArgs base_args_common;
  std::string base_data;
  int base_order = 8;
  EvalArgs base_eval;
  auto* baseline = app.add_subcommand("baseline-evaluate",
                                      "Evaluate the classical SH interpolation baseline");
  add_common(baseline, base_args_common);
  baseline->add_option("--data", base_data, "Dataset directory")->required();
  baseline->add_option("--order", base_order, "SH order of the baseline fit");
  baseline->add_option("--slice-subject", base_eval.slice_subject,
                       "Subject for the azimuth slice export");
  baseline->add_option("--slice-ear", base_eval.slice_ear, "left|right");
  baseline->add_option("--slice-phi", base_eval.slice_phi, "Slice azimuth in radians");
  baseline->add_option("--slice-tol", base_eval.slice_tol, "Slice tolerance in radians");

  CLI11_PARSE(app, argc, argv);

  if (generate->parsed()) {
    RunConfig config = resolve_config(gen_args, generate);
    if (generate->count("--subjects") > 0) config.subjects = gen_subjects;
    return cmd_generate(config, resolve_out(gen_args.out));
  }
  if (train_cmd->parsed()) {
    RunConfig config = resolve_config(train_args, train_cmd);
    if (train_cmd->count("--max-epochs") > 0) config.train.max_epochs = train_max_epochs;
    return cmd_train(config, train_data, resolve_out(train_args.out));
  }
  if (interpolate->parsed()) {
    return cmd_interpolate(interp_checkpoint, interp_input, resolve_out(interp_out));
  }
  if (evaluate->parsed()) {
    if (eval_args.checkpoint.empty() && evaluate->count("--baseline") == 0) {
      throw ConfigError("evaluate: needs either --checkpoint or --baseline");
    }
    if (evaluate->count("--baseline") == 0) {
      eval_args.baseline_order = -1;
    } else if (eval_args.baseline_order < 0) {
      throw ConfigError("evaluate: --baseline order must be >= 0");
    }
    RunConfig config = resolve_config(eval_args_common, evaluate);
    return cmd_evaluate(config, eval_data, resolve_out(eval_args_common.out), eval_args);
  }
  if (baseline->parsed()) {
    if (base_order < 0) throw ConfigError("baseline-evaluate: --order must be >= 0");
    RunConfig config = resolve_config(base_args_common, baseline);
    base_eval.baseline_order = base_order;
    return cmd_evaluate(config, base_data, resolve_out(base_args_common.out), base_eval);
  }
  return 0;
}

}  // namespace
}  // namespace sphcnn::cli

int main(int argc, char** argv) {
  try {
    return sphcnn::cli::run(argc, argv);
  } catch (const sphcnn::ConfigError& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
  } catch (const sphcnn::ParseError& e) {
    std::fprintf(stderr, "error: parse: %s\n", e.what());
  } catch (const sphcnn::IllConditionedError& e) {
    std::fprintf(stderr, "error: ill-conditioned: %s\n", e.what());
  } catch (const sphcnn::IoError& e) {
    std::fprintf(stderr, "error: io: %s\n", e.what());
  } catch (const sphcnn::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
  }
  return 1;
}
