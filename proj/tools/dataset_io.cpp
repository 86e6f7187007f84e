#include "dataset_io.hpp"

#include <cstdio>
#include <fstream>

#include "sphcnn/rng.hpp"

namespace sphcnn::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kStreamSplit = 1;
constexpr std::uint64_t kStreamKnown = 2;
constexpr std::uint64_t kStreamField = 3;
constexpr std::uint64_t kStreamPopulation = 5;

std::string subject_id(int index) {
  char buffer[16];
  std::snprintf(buffer, sizeof(buffer), "s%03d", index + 1);
  return buffer;
}

}  // namespace

void generate_dataset(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  if (config.subjects < 3) {
    throw ConfigError("generate: synth.subjects must be >= 3 so the train/validation/"
                      "test split stays non-empty, got " + std::to_string(config.subjects));
  }
  if (sh_count(config.gt_order) > config.dense_points) {
    throw ConfigError("generate: dense grid of " + std::to_string(config.dense_points) +
                      " points cannot support synth.gt_order " +
                      std::to_string(config.gt_order));
  }

  fs::create_directories(out_dir / "subjects");

  auto dense = std::make_shared<SphericalGrid>(fibonacci_grid(config.dense_points));
  const SolverOptions opts{config.condition_threshold, config.ridge};
  const KnownSplit split = split_known(*dense, config.known_points,
                                       derive_seed(config.seed, kStreamKnown, 0),
                                       config.n_map_in, opts);

  std::vector<PointLabel> labels(static_cast<std::size_t>(dense->size()),
                                 PointLabel::Unknown);
  for (int idx : split.known) labels[static_cast<std::size_t>(idx)] = PointLabel::Known;
  const SphericalGrid labeled_dense(dense->directions(), labels);
  save_grid(labeled_dense, out_dir / "grid.txt");

  const SphericalGrid known_grid = dense->subset(split.known);
  const FrequencyAxis freqs =
      linear_frequency_axis(config.freq_bins, config.freq_lo_hz, config.freq_hi_hz);

  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(config.subjects));
  for (int i = 0; i < config.subjects; ++i) ids.push_back(subject_id(i));
  const DatasetSplit subjects = make_split(ids, derive_seed(config.seed, kStreamSplit, 0),
                                           config.split_train, config.split_val,
                                           config.split_test);

  // The population component follows the master seed, so different dataset
  // seeds draw different populations.
  SynthParams synth = config.synth;
  synth.shared_seed = derive_seed(config.seed, kStreamPopulation, config.synth.shared_seed);

  json fields = json::object();
  for (int i = 0; i < config.subjects; ++i) {
    const std::string& id = ids[static_cast<std::size_t>(i)];
    json per_ear = json::object();
    for (Ear ear : {Ear::Left, Ear::Right}) {
      const std::uint64_t seed = derive_seed(
          config.seed, kStreamField,
          static_cast<std::uint64_t>(i) * 2 + (ear == Ear::Right ? 1 : 0));
      HrtfField field = synth_subject(seed, freqs, config.gt_order, dense, synth);
      field.subject = id;
      field.ear = ear;

      HrtfField sparse;
      sparse.grid = std::make_shared<SphericalGrid>(known_grid);
      sparse.freqs = freqs;
      sparse.values = field.values(split.known, Eigen::all);
      sparse.subject = id;
      sparse.ear = ear;

      const std::string dense_rel = "subjects/" + id + "_" + to_string(ear) + ".dense.field";
      const std::string sparse_rel =
          "subjects/" + id + "_" + to_string(ear) + ".sparse.field";
      save_field(field, out_dir / dense_rel);
      save_field(sparse, out_dir / sparse_rel);
      per_ear[to_string(ear)] = {{"dense", dense_rel}, {"sparse", sparse_rel}};
    }
    fields[id] = per_ear;
  }

  json manifest;
  manifest["format"] = "sphcnn-dataset";
  manifest["version"] = 1;
  manifest["seed"] = config.seed;
  manifest["dense_points"] = config.dense_points;
  manifest["known_points"] = config.known_points;
  manifest["freq_bins"] = config.freq_bins;
  manifest["freq_lo_hz"] = config.freq_lo_hz;
  manifest["freq_hi_hz"] = config.freq_hi_hz;
  manifest["gt_order"] = config.gt_order;
  manifest["grid_file"] = "grid.txt";
  manifest["dense_grid_hash"] = hash_to_hex(dense->hash());
  manifest["known_grid_hash"] = hash_to_hex(known_grid.hash());
  manifest["known_indices"] = split.known;
  manifest["unknown_indices"] = split.unknown;
  manifest["split"] = {{"train", subjects.train},
                       {"validation", subjects.validation},
                       {"test", subjects.test}};
  manifest["fields"] = fields;

  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest.json under " + out_dir.string());
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("failed writing manifest.json");

  write_run_config(config, out_dir / "run_config.json");
}

Dataset open_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open dataset manifest: " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("manifest: " + manifest_path.string() + ": " + e.what());
  }

  try {
    if (manifest.at("format").get<std::string>() != "sphcnn-dataset") {
      throw ParseError("manifest: unexpected format tag");
    }
    if (manifest.at("version").get<int>() != 1) {
      throw ParseError("manifest: unsupported version");
    }

    Dataset dataset;
    dataset.root = dir;
    dataset.seed = manifest.at("seed").get<std::uint64_t>();
    dataset.gt_order = manifest.at("gt_order").get<int>();

    SphericalGrid stored =
        load_grid(dir / manifest.at("grid_file").get<std::string>());
    const auto expect_dense = manifest.at("dense_grid_hash").get<std::string>();
    if (hash_to_hex(stored.hash()) != expect_dense) {
      throw ParseError("manifest: dense grid hash mismatch (grid file " +
                       hash_to_hex(stored.hash()) + ", manifest " + expect_dense + ")");
    }
    dataset.dense_grid = std::make_shared<SphericalGrid>(std::move(stored));

    dataset.split.known = manifest.at("known_indices").get<std::vector<int>>();
    dataset.split.unknown = manifest.at("unknown_indices").get<std::vector<int>>();
    dataset.known_grid =
        std::make_shared<SphericalGrid>(dataset.dense_grid->subset(dataset.split.known));
    const auto expect_known = manifest.at("known_grid_hash").get<std::string>();
    if (hash_to_hex(dataset.known_grid->hash()) != expect_known) {
      throw ParseError("manifest: known grid hash mismatch");
    }

    dataset.freqs = linear_frequency_axis(manifest.at("freq_bins").get<int>(),
                                          manifest.at("freq_lo_hz").get<double>(),
                                          manifest.at("freq_hi_hz").get<double>());

    const auto& split = manifest.at("split");
    dataset.subjects.train = split.at("train").get<std::vector<std::string>>();
    dataset.subjects.validation = split.at("validation").get<std::vector<std::string>>();
    dataset.subjects.test = split.at("test").get<std::vector<std::string>>();

    for (const auto& [id, ears] : manifest.at("fields").items()) {
      for (const auto& [ear, paths] : ears.items()) {
        dataset.fields[id][ear] = {paths.at("dense").get<std::string>(),
                                   paths.at("sparse").get<std::string>()};
      }
    }
    return dataset;
  } catch (const json::exception& e) {
    throw ParseError("manifest: " + manifest_path.string() + ": " + e.what());
  }
}

namespace {

const std::pair<std::string, std::string>& field_paths(const Dataset& dataset,
                                                       const std::string& subject,
                                                       Ear ear) {
  auto subject_it = dataset.fields.find(subject);
  if (subject_it == dataset.fields.end()) {
    throw ParseError("dataset: no fields recorded for subject '" + subject + "'");
  }
  auto ear_it = subject_it->second.find(to_string(ear));
  if (ear_it == subject_it->second.end()) {
    throw ParseError("dataset: no " + to_string(ear) + "-ear field for subject '" +
                     subject + "'");
  }
  return ear_it->second;
}

}  // namespace

HrtfField Dataset::load_dense(const std::string& subject, Ear ear) const {
  HrtfField field = load_field(root / field_paths(*this, subject, ear).first);
  if (field.grid->hash() != dense_grid->hash()) {
    throw ParseError("dataset: dense field grid hash mismatch for subject '" + subject +
                     "' (" + to_string(ear) + " ear)");
  }
  return field;
}

HrtfField Dataset::load_sparse(const std::string& subject, Ear ear) const {
  HrtfField field = load_field(root / field_paths(*this, subject, ear).second);
  if (field.grid->hash() != known_grid->hash()) {
    throw ParseError("dataset: sparse field grid hash mismatch for subject '" + subject +
                     "' (" + to_string(ear) + " ear)");
  }
  return field;
}

std::vector<Sample> collect_samples(const Dataset& dataset,
                                    const std::vector<std::string>& subject_ids) {
  std::vector<Sample> samples;
  samples.reserve(subject_ids.size() * 2);
  for (const auto& id : subject_ids) {
    for (Ear ear : {Ear::Left, Ear::Right}) {
      HrtfField dense = dataset.load_dense(id, ear);
      Sample sample;
      sample.subject = id;
      sample.ear = ear;
      sample.sparse = dense.values(dataset.split.known, Eigen::all);
      sample.dense = std::move(dense.values);
      samples.push_back(std::move(sample));
    }
  }
  return samples;
}

}  // namespace sphcnn::cli
