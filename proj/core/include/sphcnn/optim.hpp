#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sphcnn/network.hpp"

namespace sphcnn {

struct AdamState {
  Vector m;  // first moment
  Vector v;  // second moment, entrywise >= 0
  long step_count = 0;
};

AdamState make_adam_state(int parameter_count);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 14;
  int max_epochs = 700;
  int patience = 50;  // epochs without validation improvement before stop
  std::uint64_t seed = 1;

  void validate() const;
};

// Standard Adam update with bias correction, in place. Throws on shape
// mismatch or non-finite gradients (training aborts rather than diverging
// silently).
void adam_step(Vector& params, const Vector& grads, AdamState& state,
               const TrainConfig& cfg);

enum class Ear : std::uint8_t { Left = 0, Right = 1 };
std::string to_string(Ear ear);
Ear ear_from_string(const std::string& text);

// One training sample: a (subject, ear) sparse measurement and its dense
// ground truth.
struct Sample {
  std::string subject;
  Ear ear = Ear::Left;
  Matrix sparse;  // P_sparse x L
  Matrix dense;   // P_dense x L
};

struct EpochStats {
  int epoch = 0;
  double train_lsd = 0.0;
  double val_lsd = 0.0;
};

struct TrainResult {
  ModelParams best_params;
  double best_val_lsd = 0.0;
  int best_epoch = 0;
  std::vector<EpochStats> history;
  long batches_processed = 0;
};

using ProgressFn = std::function<void(const EpochStats&)>;

// Mini-batch Adam training with per-epoch seeded shuffles, batch-mean LSD
// gradients, per-epoch validation, best-checkpoint tracking and patience
// early stopping. Per-sample work may fan out over `threads`; gradients
// are reduced in sample order, so results are bit-identical for any
// thread count.
TrainResult train(const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, ModelParams initial,
                  const TrainConfig& cfg, BasisCache& cache, int threads = 1,
                  const SolverOptions& opts = {}, const ProgressFn& progress = {});

// Delimited text history: one row per epoch (epoch, train_lsd, val_lsd).
void save_history(const std::filesystem::path& path,
                  const std::vector<EpochStats>& history);

}  // namespace sphcnn
