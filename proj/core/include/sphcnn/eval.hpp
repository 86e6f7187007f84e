#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sphcnn/hrtf_data.hpp"

namespace sphcnn {

// Classical interpolation reference: least-squares SHT at the given order
// on the known directions, ISHT on the dense grid. No learning.
Matrix sh_baseline(const Matrix& known_field, const SphericalGrid& known_grid,
                   int order, const SphericalGrid& dense_grid, BasisCache& cache,
                   const SolverOptions& opts = {});

// LSD restricted to a direction subset (the interpolation targets).
double eval_unknown(const Matrix& predicted, const Matrix& truth,
                    std::span<const int> unknown);

// Per-bin spatial RMS error over the subset; its RMS across bins equals
// the overall subset LSD.
Vector lsd_per_frequency(const Matrix& predicted, const Matrix& truth,
                         std::span<const int> unknown);

struct SliceRow {
  double theta = 0.0;
  double frequency_hz = 0.0;
  double value_db = 0.0;
};

// All directions within `tolerance` of the target azimuth (wrap-aware),
// sorted by elevation; one row per (direction, bin), values copied without
// resampling. Throws with the nearest available azimuth when nothing
// matches.
std::vector<SliceRow> export_slice(const HrtfField& field, double phi_target,
                                   double tolerance);

struct EvalReport {
  std::string method_label;
  std::map<std::string, double> per_subject_lsd;  // mean over that subject's ears
  double mean_lsd = 0.0;    // arithmetic mean of per-subject values
  double pooled_lsd = 0.0;  // RMS over all samples/directions/bins; anchors
                            // the per-frequency decomposition identity
  Vector per_frequency_lsd;
  std::string config_snapshot;  // JSON text recorded by the caller
};

struct EvalSample {
  std::string subject;
  Ear ear = Ear::Left;
  Matrix predicted;  // dense
  Matrix truth;      // dense
};

EvalReport build_report(const std::string& method_label,
                        const std::vector<EvalSample>& samples,
                        std::span<const int> unknown, const FrequencyAxis& freqs,
                        std::string config_snapshot);

void write_report_files(const EvalReport& report, const FrequencyAxis& freqs,
                        const std::filesystem::path& out_dir);

void write_slice(const std::vector<SliceRow>& rows, const std::filesystem::path& path);

}  // namespace sphcnn
