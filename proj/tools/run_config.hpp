#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "sphcnn/hrtf_data.hpp"
#include "sphcnn/optim.hpp"

namespace sphcnn::cli {

// Everything a run needs, resolved from defaults, then the --config file,
// then command-line flags, in that order. The effective value set is
// snapshotted next to every command's outputs.
struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = available parallelism

  int dense_points = 480;
  int known_points = 120;

  int n_map_in = 7;
  int n_conv = 16;
  int n_map_out = 16;
  int kernels = 0;  // 0 = match frequency bins (identity skips force u == L)
  bool bias = true;

  int freq_bins = 93;
  double freq_lo_hz = 172.0;
  double freq_hi_hz = 16000.0;

  int subjects = 94;
  int gt_order = 16;
  SynthParams synth;

  double split_train = 77.0;
  double split_val = 10.0;
  double split_test = 7.0;

  double condition_threshold = 1e6;
  double ridge = 0.0;

  TrainConfig train;

  void validate() const;
  int resolved_threads() const;
  int resolved_kernels() const { return kernels == 0 ? freq_bins : kernels; }

  nlohmann::json to_json() const;
};

RunConfig load_run_config(const std::filesystem::path& path);
void apply_json(RunConfig& config, const nlohmann::json& root, const std::string& source);
void write_run_config(const RunConfig& config, const std::filesystem::path& path);

std::string hash_to_hex(std::uint64_t hash);

}  // namespace sphcnn::cli
