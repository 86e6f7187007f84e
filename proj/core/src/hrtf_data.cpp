#include "sphcnn/hrtf_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "sphcnn/rng.hpp"

namespace sphcnn {

void FrequencyAxis::validate() const {
  if (values.size() < 1) throw ConfigError("FrequencyAxis: needs at least one bin");
  for (Eigen::Index i = 0; i + 1 < values.size(); ++i) {
    if (!(values(i) < values(i + 1))) {
      throw ConfigError("FrequencyAxis: values must be strictly increasing");
    }
  }
}

FrequencyAxis linear_frequency_axis(int bins, double lo_hz, double hi_hz) {
  if (bins < 1) throw ConfigError("FrequencyAxis: bins must be >= 1");
  FrequencyAxis axis;
  axis.values.resize(bins);
  if (bins == 1) {
    axis.values(0) = lo_hz;
  } else {
    for (int i = 0; i < bins; ++i) {
      axis.values(i) = lo_hz + (hi_hz - lo_hz) * static_cast<double>(i) /
                                   static_cast<double>(bins - 1);
    }
  }
  axis.validate();
  return axis;
}

void HrtfField::validate() const {
  if (!grid) throw ConfigError("HrtfField: grid not set");
  freqs.validate();
  if (values.rows() != grid->size()) {
    throw ShapeError("HrtfField: " + std::to_string(values.rows()) + " rows vs grid of " +
                     std::to_string(grid->size()));
  }
  if (values.cols() != freqs.bins()) {
    throw ShapeError("HrtfField: " + std::to_string(values.cols()) + " columns vs " +
                     std::to_string(freqs.bins()) + " frequency bins");
  }
  if (!values.allFinite()) throw DomainError("HrtfField: non-finite values");
}

SphericalGrid fibonacci_grid(int points) {
  if (points < 1) throw DomainError("fibonacci_grid: needs at least one point");
  // Golden-ratio conjugate; the offset lattice keeps z strictly inside
  // (-1, 1) and strictly decreasing.
  constexpr double kGoldenFrac = 0.6180339887498949;
  std::vector<Direction> dirs;
  dirs.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / static_cast<double>(points);
    const double phi = kTwoPi * std::fmod(static_cast<double>(i) * kGoldenFrac, 1.0);
    dirs.emplace_back(std::asin(z), phi);
  }
  return SphericalGrid(std::move(dirs));
}

KnownSplit split_known(const SphericalGrid& dense, int n_known, std::uint64_t seed,
                       int check_order, const SolverOptions& opts) {
  const int p = dense.size();
  if (n_known < 1 || n_known > p) {
    throw DomainError("split_known: n_known " + std::to_string(n_known) +
                      " outside [1, " + std::to_string(p) + "]");
  }

  Rng rng(seed);
  const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(p)));

  // Farthest-point sampling; ties resolve to the lowest index.
  std::vector<double> min_dist(static_cast<std::size_t>(p),
                               std::numeric_limits<double>::infinity());
  std::vector<bool> selected(static_cast<std::size_t>(p), false);
  std::vector<int> known;
  known.reserve(static_cast<std::size_t>(n_known));

  int current = start;
  for (int k = 0; k < n_known; ++k) {
    selected[static_cast<std::size_t>(current)] = true;
    known.push_back(current);
    if (k + 1 == n_known) break;
    int next = -1;
    double best = -1.0;
    for (int i = 0; i < p; ++i) {
      if (selected[static_cast<std::size_t>(i)]) continue;
      const double d = great_circle_distance(dense[current], dense[i]);
      if (d < min_dist[static_cast<std::size_t>(i)]) min_dist[static_cast<std::size_t>(i)] = d;
      if (min_dist[static_cast<std::size_t>(i)] > best) {
        best = min_dist[static_cast<std::size_t>(i)];
        next = i;
      }
    }
    current = next;
  }
  std::sort(known.begin(), known.end());

  KnownSplit split;
  split.known = std::move(known);
  split.unknown.reserve(static_cast<std::size_t>(p - n_known));
  for (int i = 0; i < p; ++i) {
    if (!selected[static_cast<std::size_t>(i)]) split.unknown.push_back(i);
  }

  if (check_order >= 0) {
    const SphericalGrid known_grid = dense.subset(split.known);
    ShSolver probe(known_grid, check_order, opts);  // throws IllConditioned if unusable
  }
  return split;
}

HrtfField synth_subject(std::uint64_t seed, const FrequencyAxis& freqs, int gt_order,
                        std::shared_ptr<const SphericalGrid> dense,
                        const SynthParams& params) {
  freqs.validate();
  if (!dense) throw ConfigError("synth_subject: dense grid not set");
  if (gt_order < 0) throw DomainError("synth_subject: gt_order must be >= 0");
  const int l_bins = freqs.bins();
  const int k = sh_count(gt_order);

  Rng rng(seed);

  // Smooth per-subject frequency envelope, shared across directions.
  Vector envelope(l_bins);
  const double a1 = params.env_amp_db * rng.uniform(0.5, 1.0);
  const double a2 = 0.6 * params.env_amp_db * rng.uniform(0.3, 1.0);
  const double a3 = 0.35 * params.env_amp_db * rng.uniform(0.2, 1.0);
  const double p1 = rng.uniform(0.0, kTwoPi);
  const double p2 = rng.uniform(0.0, kTwoPi);
  const double p3 = rng.uniform(0.0, kTwoPi);
  for (int l = 0; l < l_bins; ++l) {
    const double t = l_bins > 1 ? static_cast<double>(l) / (l_bins - 1) : 0.0;
    envelope(l) = params.env_center_db + a1 * std::cos(kPi * t + p1) +
                  a2 * std::cos(2.0 * kPi * t + p2) + a3 * std::cos(3.0 * kPi * t + p3);
  }

  // Coefficients with order-dependent decay; the cutoff rises with
  // frequency so spatial complexity grows toward high bins. Each entry
  // mixes the dataset-level population draw with an individual draw so the
  // marginal std stays sigma(n, l) while subjects stay correlated.
  const double shared = std::clamp(params.shared_fraction, 0.0, 1.0);
  const double w_pop = std::sqrt(shared);
  const double w_ind = std::sqrt(1.0 - shared);
  Rng population_rng(params.shared_seed);
  Matrix coeffs(k, l_bins);
  for (int l = 0; l < l_bins; ++l) {
    const double t = l_bins > 1 ? static_cast<double>(l) / (l_bins - 1) : 1.0;
    const double cutoff = params.min_cutoff + (gt_order - params.min_cutoff) * t;
    for (int n = 0; n <= gt_order; ++n) {
      const double sigma =
          params.coeff_scale * std::exp(-static_cast<double>(n) / std::max(1e-9, cutoff));
      for (int m = -n; m <= n; ++m) {
        coeffs(sh_index(n, m), l) =
            sigma * (w_pop * population_rng.normal() + w_ind * rng.normal());
      }
    }
    coeffs(0, l) += envelope(l) / kY00;
  }

  const ShBasisMatrix basis = build_sh_matrix(*dense, gt_order);
  Matrix values = basis.values * coeffs;

  // Keep the field inside the plausibility bounds with an affine squeeze in
  // the coefficient domain; a hard per-value clamp would break the exact
  // bandlimit.
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (lo < params.min_db || hi > params.max_db) {
    const double span = hi - lo;
    const double target_span = params.max_db - params.min_db;
    const double gain = span > 0.0 ? std::min(1.0, target_span / span) : 1.0;
    const double center = 0.5 * (hi + lo);
    const double target_center = 0.5 * (params.max_db + params.min_db);
    coeffs *= gain;
    coeffs.row(0).array() += (target_center - gain * center) / kY00;
    values = basis.values * coeffs;
  }

  HrtfField field;
  field.grid = std::move(dense);
  field.freqs = freqs;
  field.values = std::move(values);
  field.validate();
  return field;
}

namespace {

void write_double(std::FILE* out, double v) { std::fprintf(out, "%.17g", v); }

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path)
      : path_(path.string()), in_(path) {
    if (!in_) throw IoError("cannot open file: " + path_);
  }

  // Next non-empty, non-comment line; returns false at EOF.
  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_number_;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto last = line.find_last_not_of(" \t\r");
      if (last == std::string::npos) continue;
      line.erase(last + 1);
      return true;
    }
    return false;
  }

  std::string require(const char* what) {
    std::string line;
    if (!next(line)) {
      throw ParseError(path_ + ": unexpected end of file, expected " + std::string(what));
    }
    return line;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(path_ + ":" + std::to_string(line_number_) + ": " + message);
  }

 private:
  std::string path_;
  std::ifstream in_;
  long line_number_ = 0;
};

std::vector<double> parse_doubles(LineReader& reader, const std::string& line,
                                  int expected) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(expected));
  const char* p = line.c_str();
  char* end = nullptr;
  while (*p != '\0') {
    const double v = std::strtod(p, &end);
    if (end == p) break;
    out.push_back(v);
    p = end;
    while (*p == ' ' || *p == '\t') ++p;
  }
  if (static_cast<int>(out.size()) != expected || *p != '\0') {
    reader.fail("expected " + std::to_string(expected) + " numeric values, got " +
                std::to_string(out.size()));
  }
  return out;
}

long parse_count(LineReader& reader, const std::string& line, const char* key) {
  std::istringstream ss(line);
  std::string name;
  long value = -1;
  ss >> name >> value;
  if (name != key || value < 0 || !ss.eof()) {
    reader.fail("expected '" + std::string(key) + " <count>', got '" + line + "'");
  }
  return value;
}

std::string parse_keyword(LineReader& reader, const std::string& line, const char* key) {
  std::istringstream ss(line);
  std::string name, value;
  ss >> name >> value;
  if (name != key || value.empty()) {
    reader.fail("expected '" + std::string(key) + " <value>', got '" + line + "'");
  }
  return value;
}

}  // namespace

void save_field(const HrtfField& field, const std::filesystem::path& path) {
  field.validate();
  std::FILE* out = std::fopen(path.string().c_str(), "w");
  if (!out) throw IoError("cannot open field file for writing: " + path.string());

  std::fprintf(out, "sphcnn-field v1\n");
  std::fprintf(out, "subject %s\n", field.subject.c_str());
  std::fprintf(out, "ear %s\n", to_string(field.ear).c_str());
  std::fprintf(out, "P %d\n", field.grid->size());
  std::fprintf(out, "L %d\n", field.freqs.bins());
  std::fprintf(out, "grid\n");
  for (const auto& d : field.grid->directions()) {
    write_double(out, d.theta);
    std::fputc(' ', out);
    write_double(out, d.phi);
    std::fputc('\n', out);
  }
  std::fprintf(out, "freqs\n");
  for (int l = 0; l < field.freqs.bins(); ++l) {
    if (l > 0) std::fputc(' ', out);
    write_double(out, field.freqs.values(l));
  }
  std::fputc('\n', out);
  std::fprintf(out, "values\n");
  for (Eigen::Index i = 0; i < field.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < field.values.cols(); ++j) {
      if (j > 0) std::fputc(' ', out);
      write_double(out, field.values(i, j));
    }
    std::fputc('\n', out);
  }
  if (std::fclose(out) != 0) throw IoError("failed writing field file: " + path.string());
}

HrtfField load_field(const std::filesystem::path& path) {
  LineReader reader(path);

  std::string line = reader.require("format header");
  if (line != "sphcnn-field v1") {
    reader.fail("unsupported format header '" + line + "', expected 'sphcnn-field v1'");
  }

  HrtfField field;
  field.subject = parse_keyword(reader, reader.require("subject"), "subject");
  field.ear = ear_from_string(parse_keyword(reader, reader.require("ear"), "ear"));
  const long p = parse_count(reader, reader.require("P"), "P");
  const long l_bins = parse_count(reader, reader.require("L"), "L");
  if (p < 1) reader.fail("P must be >= 1");
  if (l_bins < 1) reader.fail("L must be >= 1");

  if (reader.require("grid") != "grid") reader.fail("expected 'grid' section");
  std::vector<Direction> dirs;
  dirs.reserve(static_cast<std::size_t>(p));
  for (long i = 0; i < p; ++i) {
    const auto v = parse_doubles(reader, reader.require("grid row"), 2);
    dirs.emplace_back(v[0], v[1]);
  }

  if (reader.require("freqs") != "freqs") reader.fail("expected 'freqs' section");
  FrequencyAxis axis;
  {
    const auto v = parse_doubles(reader, reader.require("frequency row"),
                                 static_cast<int>(l_bins));
    axis.values = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  if (reader.require("values") != "values") reader.fail("expected 'values' section");
  Matrix values(p, l_bins);
  long rows_read = 0;
  std::string row_line;
  while (rows_read < p) {
    if (!reader.next(row_line)) {
      throw ParseError(path.string() + ": header declares P=" + std::to_string(p) +
                       " but only " + std::to_string(rows_read) + " value rows present");
    }
    const auto v = parse_doubles(reader, row_line, static_cast<int>(l_bins));
    for (long j = 0; j < l_bins; ++j) values(rows_read, j) = v[static_cast<std::size_t>(j)];
    ++rows_read;
  }
  if (reader.next(row_line)) {
    throw ParseError(path.string() + ": header declares P=" + std::to_string(p) +
                     " but extra value rows follow row " + std::to_string(p));
  }

  field.grid = std::make_shared<SphericalGrid>(std::move(dirs));
  field.freqs = std::move(axis);
  field.values = std::move(values);
  field.validate();
  return field;
}

void save_grid(const SphericalGrid& grid, const std::filesystem::path& path) {
  std::FILE* out = std::fopen(path.string().c_str(), "w");
  if (!out) throw IoError("cannot open grid file for writing: " + path.string());
  std::fprintf(out, "sphcnn-grid v1\n");
  std::fprintf(out, "P %d\n", grid.size());
  std::fprintf(out, "directions\n");
  for (int i = 0; i < grid.size(); ++i) {
    const auto& d = grid[i];
    write_double(out, d.theta);
    std::fputc(' ', out);
    write_double(out, d.phi);
    const char* label = "-";
    if (grid.has_labels()) {
      label = grid.labels()[static_cast<std::size_t>(i)] == PointLabel::Known ? "known"
              : grid.labels()[static_cast<std::size_t>(i)] == PointLabel::Unknown
                  ? "unknown"
                  : "-";
    }
    std::fprintf(out, " %s\n", label);
  }
  if (std::fclose(out) != 0) throw IoError("failed writing grid file: " + path.string());
}

SphericalGrid load_grid(const std::filesystem::path& path) {
  LineReader reader(path);
  std::string line = reader.require("format header");
  if (line != "sphcnn-grid v1") {
    reader.fail("unsupported format header '" + line + "', expected 'sphcnn-grid v1'");
  }
  const long p = parse_count(reader, reader.require("P"), "P");
  if (p < 1) reader.fail("P must be >= 1");
  if (reader.require("directions") != "directions") reader.fail("expected 'directions'");

  std::vector<Direction> dirs;
  std::vector<PointLabel> labels;
  bool any_label = false;
  for (long i = 0; i < p; ++i) {
    std::string row = reader.require("direction row");
    std::istringstream ss(row);
    double theta, phi;
    std::string label;
    if (!(ss >> theta >> phi >> label)) reader.fail("expected 'theta phi label'");
    dirs.emplace_back(theta, phi);
    if (label == "known") {
      labels.push_back(PointLabel::Known);
      any_label = true;
    } else if (label == "unknown") {
      labels.push_back(PointLabel::Unknown);
      any_label = true;
    } else if (label == "-") {
      labels.push_back(PointLabel::Unlabeled);
    } else {
      reader.fail("unknown point label '" + label + "'");
    }
  }
  std::string extra;
  if (reader.next(extra)) {
    throw ParseError(path.string() + ": header declares P=" + std::to_string(p) +
                     " but extra rows follow");
  }
  if (!any_label) labels.clear();
  return SphericalGrid(std::move(dirs), std::move(labels));
}

DatasetSplit make_split(std::vector<std::string> subject_ids, std::uint64_t seed,
                        double p_train, double p_val, double p_test) {
  const int n = static_cast<int>(subject_ids.size());
  if (n < 3) {
    throw ConfigError("make_split: needs at least 3 subjects to fill all splits, got " +
                      std::to_string(n));
  }
  if (!(p_train > 0.0) || !(p_val > 0.0) || !(p_test > 0.0)) {
    throw ConfigError("make_split: proportions must be positive");
  }

  Rng rng(seed);
  rng.shuffle(subject_ids);

  const double total = p_train + p_val + p_test;
  int n_train = static_cast<int>(std::llround(n * p_train / total));
  int n_val = static_cast<int>(std::llround(n * p_val / total));
  n_train = std::max(1, n_train);
  n_val = std::max(1, n_val);
  while (n - n_train - n_val < 1) {
    if (n_train >= n_val && n_train > 1) {
      --n_train;
    } else if (n_val > 1) {
      --n_val;
    } else {
      throw ConfigError("make_split: cannot keep all splits non-empty");
    }
  }

  DatasetSplit split;
  split.train.assign(subject_ids.begin(), subject_ids.begin() + n_train);
  split.validation.assign(subject_ids.begin() + n_train,
                          subject_ids.begin() + n_train + n_val);
  split.test.assign(subject_ids.begin() + n_train + n_val, subject_ids.end());
  return split;
}

}  // namespace sphcnn
