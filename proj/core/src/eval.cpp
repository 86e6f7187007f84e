#include "sphcnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

namespace sphcnn {

Matrix sh_baseline(const Matrix& known_field, const SphericalGrid& known_grid,
                   int order, const SphericalGrid& dense_grid, BasisCache& cache,
                   const SolverOptions& opts) {
  return mapping_block(known_field, known_grid, dense_grid, order, cache, opts);
}

namespace {

void check_eval_shapes(const Matrix& predicted, const Matrix& truth,
                       std::span<const int> unknown) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols()) {
    throw ShapeError("eval: prediction/truth shape mismatch");
  }
  if (unknown.empty()) throw DomainError("eval: empty unknown direction set");
  for (int idx : unknown) {
    if (idx < 0 || idx >= predicted.rows()) {
      throw DomainError("eval: unknown index " + std::to_string(idx) + " out of range");
    }
  }
}

}  // namespace

double eval_unknown(const Matrix& predicted, const Matrix& truth,
                    std::span<const int> unknown) {
  check_eval_shapes(predicted, truth, unknown);
  double sum = 0.0;
  for (int idx : unknown) {
    sum += (predicted.row(idx) - truth.row(idx)).squaredNorm();
  }
  const double mse = sum / (static_cast<double>(unknown.size()) *
                            static_cast<double>(predicted.cols()));
  return std::sqrt(mse);
}

Vector lsd_per_frequency(const Matrix& predicted, const Matrix& truth,
                         std::span<const int> unknown) {
  check_eval_shapes(predicted, truth, unknown);
  Vector curve = Vector::Zero(predicted.cols());
  for (int idx : unknown) {
    curve.array() += (predicted.row(idx) - truth.row(idx)).array().square().transpose();
  }
  curve /= static_cast<double>(unknown.size());
  return curve.cwiseSqrt();
}

std::vector<SliceRow> export_slice(const HrtfField& field, double phi_target,
                                   double tolerance) {
  field.validate();
  auto wrap_distance = [](double a, double b) {
    double d = std::fmod(std::abs(a - b), kTwoPi);
    return std::min(d, kTwoPi - d);
  };

  std::vector<int> matches;
  double nearest = std::numeric_limits<double>::infinity();
  double nearest_phi = 0.0;
  for (int i = 0; i < field.grid->size(); ++i) {
    const double d = wrap_distance((*field.grid)[i].phi, phi_target);
    if (d <= tolerance) matches.push_back(i);
    if (d < nearest) {
      nearest = d;
      nearest_phi = (*field.grid)[i].phi;
    }
  }
  if (matches.empty()) {
    throw DomainError("export_slice: no direction within " + std::to_string(tolerance) +
                      " rad of phi=" + std::to_string(phi_target) +
                      "; nearest available azimuth is " + std::to_string(nearest_phi) +
                      " (" + std::to_string(nearest) + " rad away)");
  }
  std::stable_sort(matches.begin(), matches.end(), [&](int a, int b) {
    return (*field.grid)[a].theta < (*field.grid)[b].theta;
  });

  std::vector<SliceRow> rows;
  rows.reserve(matches.size() * static_cast<std::size_t>(field.freqs.bins()));
  for (int idx : matches) {
    for (int l = 0; l < field.freqs.bins(); ++l) {
      rows.push_back(SliceRow{(*field.grid)[idx].theta, field.freqs.values(l),
                              field.values(idx, l)});
    }
  }
  return rows;
}

EvalReport build_report(const std::string& method_label,
                        const std::vector<EvalSample>& samples,
                        std::span<const int> unknown, const FrequencyAxis& freqs,
                        std::string config_snapshot) {
  if (samples.empty()) throw DomainError("build_report: no samples");

  EvalReport report;
  report.method_label = method_label;
  report.config_snapshot = std::move(config_snapshot);

  std::map<std::string, std::pair<double, int>> per_subject;  // sum, count
  Vector pooled_sq = Vector::Zero(freqs.bins());
  double pooled_sum = 0.0;
  for (const auto& sample : samples) {
    const double sample_lsd = eval_unknown(sample.predicted, sample.truth, unknown);
    auto& acc = per_subject[sample.subject];
    acc.first += sample_lsd;
    acc.second += 1;

    const Vector curve = lsd_per_frequency(sample.predicted, sample.truth, unknown);
    pooled_sq += curve.cwiseProduct(curve);
    pooled_sum += sample_lsd * sample_lsd;
  }

  double subject_sum = 0.0;
  for (const auto& [subject, acc] : per_subject) {
    const double value = acc.first / acc.second;
    report.per_subject_lsd[subject] = value;
    subject_sum += value;
  }
  report.mean_lsd = subject_sum / static_cast<double>(per_subject.size());
  report.pooled_lsd = std::sqrt(pooled_sum / static_cast<double>(samples.size()));
  report.per_frequency_lsd =
      (pooled_sq / static_cast<double>(samples.size())).cwiseSqrt();
  return report;
}

namespace {

void write_row(std::FILE* out, double a, double b) {
  std::fprintf(out, "%.17g\t%.17g\n", a, b);
}

}  // namespace

void write_report_files(const EvalReport& report, const FrequencyAxis& freqs,
                        const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  {
    std::FILE* out = std::fopen((out_dir / "per_subject.tsv").string().c_str(), "w");
    if (!out) throw IoError("cannot write per_subject.tsv");
    std::fprintf(out, "subject\tlsd_db\n");
    for (const auto& [subject, value] : report.per_subject_lsd) {
      std::fprintf(out, "%s\t%.17g\n", subject.c_str(), value);
    }
    std::fclose(out);
  }
  {
    std::FILE* out = std::fopen((out_dir / "per_frequency.tsv").string().c_str(), "w");
    if (!out) throw IoError("cannot write per_frequency.tsv");
    std::fprintf(out, "frequency_hz\tlsd_db\n");
    for (int l = 0; l < freqs.bins(); ++l) {
      write_row(out, freqs.values(l), report.per_frequency_lsd(l));
    }
    std::fclose(out);
  }
}

void write_slice(const std::vector<SliceRow>& rows, const std::filesystem::path& path) {
  std::FILE* out = std::fopen(path.string().c_str(), "w");
  if (!out) throw IoError("cannot write slice file: " + path.string());
  std::fprintf(out, "theta_rad\tfrequency_hz\tvalue_db\n");
  for (const auto& row : rows) {
    std::fprintf(out, "%.17g\t%.17g\t%.17g\n", row.theta, row.frequency_hz, row.value_db);
  }
  std::fclose(out);
}

}  // namespace sphcnn
