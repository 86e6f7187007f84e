#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "sphcnn/optim.hpp"
#include "sphcnn/sh.hpp"

namespace sphcnn {

struct FrequencyAxis {
  Vector values;  // strictly increasing, Hz

  int bins() const { return static_cast<int>(values.size()); }
  void validate() const;
};

// L linearly spaced bins over [lo_hz, hi_hz]; defaults follow the dense
// measurement layout this library targets (93 bins, 172 Hz .. 16 kHz).
FrequencyAxis linear_frequency_axis(int bins = 93, double lo_hz = 172.0,
                                    double hi_hz = 16000.0);

// Magnitude spectra in dB on a grid: one row per direction, one column per
// frequency bin.
struct HrtfField {
  std::shared_ptr<const SphericalGrid> grid;
  FrequencyAxis freqs;
  Matrix values;  // P x L, finite
  std::string subject;
  Ear ear = Ear::Left;

  void validate() const;
};

// Spherical Fibonacci point set: deterministic, near-uniform, strictly
// decreasing z so no two points coincide.
SphericalGrid fibonacci_grid(int points);

struct KnownSplit {
  std::vector<int> known;    // indices into the dense grid
  std::vector<int> unknown;  // complement, ascending
};

// Selects n_known directions by farthest-point sampling (seeded start,
// deterministic ties). When check_order >= 0 the known subset must keep
// that order's basis within the conditioning threshold.
KnownSplit split_known(const SphericalGrid& dense, int n_known, std::uint64_t seed,
                       int check_order = -1, const SolverOptions& opts = {});

struct SynthParams {
  double coeff_scale = 2.5;    // s0: per-coefficient std at order 0
  double min_cutoff = 2.0;     // order-decay cutoff at the lowest bin
  double env_center_db = 0.0;  // dB fields centered near zero train best
  double env_amp_db = 6.0;     // scale of the smooth frequency envelope
  double min_db = -60.0;
  double max_db = 20.0;
  double shared_fraction = 0.6;      // variance fraction of the population mean
  std::uint64_t shared_seed = 9001;  // dataset-level seed for that mean
};

// Draws one synthetic subject: per-frequency SH coefficients with
// order-dependent decay std = s0*exp(-n/n_c(l)), the cutoff n_c rising
// linearly from min_cutoff at the lowest bin to gt_order at the highest,
// plus a smooth per-subject frequency envelope shared across directions.
// Subjects are correlated the way real ear measurements are: each
// coefficient mixes a population component (drawn from shared_seed, common
// to every subject of a dataset) with an individual one, shared_fraction
// of the variance coming from the population; the marginal std law is
// unchanged. The field is evaluated on the dense grid and is exactly
// bandlimited at gt_order; values are kept inside [min_db, max_db] by an
// affine squeeze in the coefficient domain (a hard clamp would break
// bandlimitedness).
HrtfField synth_subject(std::uint64_t seed, const FrequencyAxis& freqs, int gt_order,
                        std::shared_ptr<const SphericalGrid> dense,
                        const SynthParams& params = {});

// Text field format, versioned header, '#' comments, locale-independent
// '.' decimals printed with 17 significant digits so the roundtrip is
// bit-exact for all finite values.
void save_field(const HrtfField& field, const std::filesystem::path& path);
HrtfField load_field(const std::filesystem::path& path);

void save_grid(const SphericalGrid& grid, const std::filesystem::path& path);
SphericalGrid load_grid(const std::filesystem::path& path);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

// Seeded shuffle then a proportional cut (default 77:10:7), rounded so
// every part stays non-empty. Requires at least three subjects.
DatasetSplit make_split(std::vector<std::string> subject_ids, std::uint64_t seed,
                        double p_train = 77.0, double p_val = 10.0,
                        double p_test = 7.0);

}  // namespace sphcnn
