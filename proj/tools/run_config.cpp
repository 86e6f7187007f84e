#include "run_config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <thread>

namespace sphcnn::cli {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!known.contains(key)) {
      throw ConfigError("config: unknown key '" + (path.empty() ? key : path + "." + key) +
                        "'");
    }
  }
}

template <typename T>
void read_field(const json& obj, const std::string& path, const char* key, T& target) {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: field '" + (path.empty() ? key : path + "." + key) +
                      "' has the wrong type");
  }
}

}  // namespace

void apply_json(RunConfig& config, const json& root, const std::string& source) {
  if (!root.is_object()) throw ConfigError("config: " + source + " must hold a JSON object");
  check_keys(root, "", {"seed", "threads", "grid", "orders", "model", "frequencies",
                        "synth", "split", "solver", "train"});
  read_field(root, "", "seed", config.seed);
  read_field(root, "", "threads", config.threads);

  if (root.contains("grid")) {
    const auto& grid = root.at("grid");
    check_keys(grid, "grid", {"dense_points", "known_points"});
    read_field(grid, "grid", "dense_points", config.dense_points);
    read_field(grid, "grid", "known_points", config.known_points);
  }
  if (root.contains("orders")) {
    const auto& orders = root.at("orders");
    check_keys(orders, "orders", {"map_in", "conv", "map_out"});
    read_field(orders, "orders", "map_in", config.n_map_in);
    read_field(orders, "orders", "conv", config.n_conv);
    read_field(orders, "orders", "map_out", config.n_map_out);
  }
  if (root.contains("model")) {
    const auto& model = root.at("model");
    check_keys(model, "model", {"kernels", "bias"});
    read_field(model, "model", "kernels", config.kernels);
    read_field(model, "model", "bias", config.bias);
  }
  if (root.contains("frequencies")) {
    const auto& freq = root.at("frequencies");
    check_keys(freq, "frequencies", {"bins", "lo_hz", "hi_hz"});
    read_field(freq, "frequencies", "bins", config.freq_bins);
    read_field(freq, "frequencies", "lo_hz", config.freq_lo_hz);
    read_field(freq, "frequencies", "hi_hz", config.freq_hi_hz);
  }
  if (root.contains("synth")) {
    const auto& synth = root.at("synth");
    check_keys(synth, "synth",
               {"subjects", "gt_order", "coeff_scale", "min_cutoff", "env_center_db",
                "env_amp_db", "min_db", "max_db", "shared_fraction", "shared_seed"});
    read_field(synth, "synth", "subjects", config.subjects);
    read_field(synth, "synth", "gt_order", config.gt_order);
    read_field(synth, "synth", "coeff_scale", config.synth.coeff_scale);
    read_field(synth, "synth", "min_cutoff", config.synth.min_cutoff);
    read_field(synth, "synth", "env_center_db", config.synth.env_center_db);
    read_field(synth, "synth", "env_amp_db", config.synth.env_amp_db);
    read_field(synth, "synth", "min_db", config.synth.min_db);
    read_field(synth, "synth", "max_db", config.synth.max_db);
    read_field(synth, "synth", "shared_fraction", config.synth.shared_fraction);
    read_field(synth, "synth", "shared_seed", config.synth.shared_seed);
  }
  if (root.contains("split")) {
    const auto& split = root.at("split");
    check_keys(split, "split", {"train", "validation", "test"});
    read_field(split, "split", "train", config.split_train);
    read_field(split, "split", "validation", config.split_val);
    read_field(split, "split", "test", config.split_test);
  }
  if (root.contains("solver")) {
    const auto& solver = root.at("solver");
    check_keys(solver, "solver", {"condition_threshold", "ridge"});
    read_field(solver, "solver", "condition_threshold", config.condition_threshold);
    read_field(solver, "solver", "ridge", config.ridge);
  }
  if (root.contains("train")) {
    const auto& train = root.at("train");
    check_keys(train, "train",
               {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_epochs",
                "patience"});
    read_field(train, "train", "learning_rate", config.train.learning_rate);
    read_field(train, "train", "beta1", config.train.beta1);
    read_field(train, "train", "beta2", config.train.beta2);
    read_field(train, "train", "epsilon", config.train.epsilon);
    read_field(train, "train", "batch_size", config.train.batch_size);
    read_field(train, "train", "max_epochs", config.train.max_epochs);
    read_field(train, "train", "patience", config.train.patience);
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  json root;
  try {
    root = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ParseError("config: " + path.string() + ": " + e.what());
  }
  RunConfig config;
  apply_json(config, root, path.string());
  return config;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const char* message) {
    if (!ok) throw ConfigError(std::string("config: ") + message);
  };
  require(threads >= 0, "threads must be >= 0");
  require(dense_points >= 1, "grid.dense_points must be >= 1");
  require(known_points >= 1 && known_points <= dense_points,
          "grid.known_points must be in [1, dense_points]");
  require(n_map_in >= 0 && n_conv >= 0 && n_map_out >= 0, "orders must be >= 0");
  require(freq_bins >= 1, "frequencies.bins must be >= 1");
  require((freq_lo_hz > 0 && freq_hi_hz > freq_lo_hz) || freq_bins == 1,
          "frequencies.lo_hz/hi_hz must be ascending and positive");
  require(subjects >= 1, "synth.subjects must be >= 1");
  require(gt_order >= 0, "synth.gt_order must be >= 0");
  require(synth.max_db > synth.min_db, "synth.max_db must exceed synth.min_db");
  require(synth.shared_fraction >= 0.0 && synth.shared_fraction <= 1.0,
          "synth.shared_fraction must lie in [0, 1]");
  require(split_train > 0 && split_val > 0 && split_test > 0,
          "split proportions must be positive");
  require(condition_threshold > 0, "solver.condition_threshold must be > 0");
  require(ridge >= 0, "solver.ridge must be >= 0");
  if (kernels != 0 && kernels != freq_bins) {
    throw ConfigError("config: model.kernels must equal frequencies.bins (" +
                      std::to_string(freq_bins) +
                      ") because identity skip connections require matching channel "
                      "counts; got " + std::to_string(kernels));
  }
  require(sh_count(n_map_in) <= known_points,
          "orders.map_in unsupported: (map_in+1)^2 exceeds grid.known_points");
  require(sh_count(n_conv) <= dense_points,
          "orders.conv unsupported: (conv+1)^2 exceeds grid.dense_points");
  require(sh_count(n_map_out) <= dense_points,
          "orders.map_out unsupported: (map_out+1)^2 exceeds grid.dense_points");
  train.validate();
}

int RunConfig::resolved_threads() const {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

json RunConfig::to_json() const {
  json root;
  root["seed"] = seed;
  root["threads"] = threads;
  root["grid"] = {{"dense_points", dense_points}, {"known_points", known_points}};
  root["orders"] = {{"map_in", n_map_in}, {"conv", n_conv}, {"map_out", n_map_out}};
  root["model"] = {{"kernels", kernels}, {"bias", bias}};
  root["frequencies"] = {{"bins", freq_bins}, {"lo_hz", freq_lo_hz}, {"hi_hz", freq_hi_hz}};
  root["synth"] = {{"subjects", subjects},
                   {"gt_order", gt_order},
                   {"coeff_scale", synth.coeff_scale},
                   {"min_cutoff", synth.min_cutoff},
                   {"env_center_db", synth.env_center_db},
                   {"env_amp_db", synth.env_amp_db},
                   {"min_db", synth.min_db},
                   {"max_db", synth.max_db},
                   {"shared_fraction", synth.shared_fraction},
                   {"shared_seed", synth.shared_seed}};
  root["split"] = {{"train", split_train}, {"validation", split_val}, {"test", split_test}};
  root["solver"] = {{"condition_threshold", condition_threshold}, {"ridge", ridge}};
  root["train"] = {{"learning_rate", train.learning_rate},
                   {"beta1", train.beta1},
                   {"beta2", train.beta2},
                   {"epsilon", train.epsilon},
                   {"batch_size", train.batch_size},
                   {"max_epochs", train.max_epochs},
                   {"patience", train.patience}};
  return root;
}

void write_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config snapshot: " + path.string());
  out << config.to_json().dump(2) << "\n";
  if (!out) throw IoError("failed writing config snapshot: " + path.string());
}

std::string hash_to_hex(std::uint64_t hash) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx",
                static_cast<unsigned long long>(hash));
  return buffer;
}

}  // namespace sphcnn::cli
