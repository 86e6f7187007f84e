#include "sphcnn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <numeric>
#include <string>

#include "sphcnn/rng.hpp"

namespace sphcnn {

AdamState make_adam_state(int parameter_count) {
  return AdamState{Vector::Zero(parameter_count), Vector::Zero(parameter_count), 0};
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("TrainConfig: learning_rate must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("TrainConfig: beta1 must be in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("TrainConfig: beta2 must be in (0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("TrainConfig: epsilon must be > 0");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (max_epochs < 0) throw ConfigError("TrainConfig: max_epochs must be >= 0");
  if (patience < 1) throw ConfigError("TrainConfig: patience must be >= 1");
}

void adam_step(Vector& params, const Vector& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw ShapeError("adam_step: parameter/gradient/state size mismatch");
  }
  if (!grads.allFinite()) {
    throw Error("adam_step: non-finite gradient, aborting");
  }
  state.step_count += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads.cwiseProduct(grads);
  const double m_corr = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
  const double v_corr = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
  params.array() -= cfg.learning_rate * (state.m.array() / m_corr) /
                    ((state.v.array() / v_corr).sqrt() + cfg.epsilon);
}

std::string to_string(Ear ear) { return ear == Ear::Left ? "left" : "right"; }

Ear ear_from_string(const std::string& text) {
  if (text == "left") return Ear::Left;
  if (text == "right") return Ear::Right;
  throw ParseError("unknown ear '" + text + "', expected left|right");
}

namespace {

struct SampleResult {
  double loss = 0.0;
  GradientBundle grads;
};

SampleResult sample_loss_and_grads(const Sample& sample, const ModelParams& params,
                                   const ModelWorkspace& ws) {
  ForwardCache cache;
  const Matrix predicted = model_forward(sample.sparse, params, ws, &cache);
  SampleResult result;
  result.loss = lsd(sample.dense, predicted);
  result.grads = model_backward(params, ws, cache, lsd_grad(sample.dense, predicted));
  return result;
}

double validation_lsd(const std::vector<Sample>& val_set, const ModelParams& params,
                      const ModelWorkspace& ws, int threads) {
  std::vector<double> losses(val_set.size());
  if (threads > 1) {
    std::vector<std::future<double>> futures;
    futures.reserve(val_set.size());
    for (std::size_t i = 0; i < val_set.size(); ++i) {
      futures.push_back(std::async(std::launch::async, [i, &val_set, &params, &ws]() {
        return lsd(val_set[i].dense, model_forward(val_set[i].sparse, params, ws));
      }));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) losses[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < val_set.size(); ++i) {
      losses[i] = lsd(val_set[i].dense, model_forward(val_set[i].sparse, params, ws));
    }
  }
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

}  // namespace

TrainResult train(const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, ModelParams initial,
                  const TrainConfig& cfg, BasisCache& cache, int threads,
                  const SolverOptions& opts, const ProgressFn& progress) {
  cfg.validate();
  initial.validate();
  if (train_set.empty()) throw ConfigError("train: empty training set");
  if (val_set.empty()) throw ConfigError("train: empty validation set");

  const ModelWorkspace ws = make_workspace(initial, cache, opts);

  ModelParams params = initial;
  Vector flat = pack_params(params);
  AdamState state = make_adam_state(static_cast<int>(flat.size()));

  TrainResult result;
  result.best_params = params;
  result.best_val_lsd = std::numeric_limits<double>::infinity();
  result.best_epoch = 0;

  Rng shuffle_rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  int epochs_since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);

    double epoch_loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const int batch = static_cast<int>(end - start);

      std::vector<SampleResult> results(static_cast<std::size_t>(batch));
      if (threads > 1) {
        std::vector<std::future<SampleResult>> futures;
        futures.reserve(static_cast<std::size_t>(batch));
        for (std::size_t i = start; i < end; ++i) {
          const std::size_t sample_index = order[i];
          futures.push_back(
              std::async(std::launch::async, [sample_index, &train_set, &params, &ws]() {
                return sample_loss_and_grads(train_set[sample_index], params, ws);
              }));
        }
        for (std::size_t i = 0; i < futures.size(); ++i) results[i] = futures[i].get();
      } else {
        for (std::size_t i = start; i < end; ++i) {
          results[i - start] = sample_loss_and_grads(train_set[order[i]], params, ws);
        }
      }

      // Mean of per-sample LSD gradients, reduced in sample order so the
      // result does not depend on the thread count.
      GradientBundle batch_grads = std::move(results.front().grads);
      epoch_loss_sum += results.front().loss;
      for (std::size_t i = 1; i < results.size(); ++i) {
        batch_grads += results[i].grads;
        epoch_loss_sum += results[i].loss;
      }
      batch_grads *= 1.0 / static_cast<double>(batch);

      adam_step(flat, pack_grads(batch_grads), state, cfg);
      unpack_params(flat, params);
      result.batches_processed += 1;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_lsd = epoch_loss_sum / static_cast<double>(train_set.size());
    if (!std::isfinite(stats.train_lsd)) {
      throw Error("train: non-finite training loss at epoch " + std::to_string(epoch));
    }
    stats.val_lsd = validation_lsd(val_set, params, ws, threads);
    if (!std::isfinite(stats.val_lsd)) {
      throw Error("train: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(stats);
    if (progress) progress(stats);

    if (stats.val_lsd < result.best_val_lsd) {
      result.best_val_lsd = stats.val_lsd;
      result.best_epoch = epoch;
      result.best_params = params;
      epochs_since_best = 0;
    } else {
      epochs_since_best += 1;
      if (epochs_since_best >= cfg.patience) break;
    }
  }

  if (result.history.empty()) {
    // max_epochs == 0: the initial parameters are the checkpoint.
    result.best_params = params;
    result.best_val_lsd = validation_lsd(val_set, params, ws, threads);
    result.best_epoch = 0;
  }
  return result;
}

void save_history(const std::filesystem::path& path,
                  const std::vector<EpochStats>& history) {
  std::FILE* out = std::fopen(path.string().c_str(), "w");
  if (!out) throw IoError("cannot open history file for writing: " + path.string());
  std::fprintf(out, "epoch\ttrain_lsd\tval_lsd\n");
  for (const auto& row : history) {
    std::fprintf(out, "%d\t%.17g\t%.17g\n", row.epoch, row.train_lsd, row.val_lsd);
  }
  std::fclose(out);
}

}  // namespace sphcnn
