#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "run_config.hpp"
#include "sphcnn/eval.hpp"

namespace sphcnn::cli {

// On-disk dataset layout: manifest.json + grid.txt + one dense and one
// sparse (known-rows) field file per (subject, ear).
struct Dataset {
  std::filesystem::path root;
  std::uint64_t seed = 0;
  int gt_order = 0;
  std::shared_ptr<const SphericalGrid> dense_grid;
  std::shared_ptr<const SphericalGrid> known_grid;
  KnownSplit split;
  FrequencyAxis freqs;
  DatasetSplit subjects;
  // subject -> ear -> {dense, sparse} relative paths
  std::map<std::string, std::map<std::string, std::pair<std::string, std::string>>> fields;

  HrtfField load_dense(const std::string& subject, Ear ear) const;
  HrtfField load_sparse(const std::string& subject, Ear ear) const;
};

void generate_dataset(const RunConfig& config, const std::filesystem::path& out_dir);
Dataset open_dataset(const std::filesystem::path& dir);

// Samples for the training loop: sparse input, dense target.
std::vector<Sample> collect_samples(const Dataset& dataset,
                                    const std::vector<std::string>& subject_ids);

}  // namespace sphcnn::cli
