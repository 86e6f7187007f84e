#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "sphcnn/eval.hpp"
#include "sphcnn/network.hpp"
#include "test_util.hpp"

using namespace sphcnn;
using test::random_matrix;

TEST_CASE("sh_baseline reconstructs in-model data exactly") {
  BasisCache cache;
  const SphericalGrid dense = fibonacci_grid(480);
  const KnownSplit split = split_known(dense, 120, 1, 8);
  const SphericalGrid known = dense.subset(split.known);

  Rng rng(2);
  const int order = 8;
  const Matrix coeffs = random_matrix(sh_count(order), 4, rng);
  const Matrix truth = build_sh_matrix(dense, order).values * coeffs;
  const Matrix known_field = truth(split.known, Eigen::all);

  const Matrix predicted = sh_baseline(known_field, known, order, dense, cache);
  CHECK((predicted - truth).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(eval_unknown(predicted, truth, split.unknown) <= 1e-6);

  SUBCASE("idempotent on its own output") {
    const Matrix again =
        sh_baseline(predicted(split.known, Eigen::all), known, order, dense, cache);
    CHECK((again - predicted).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("order-0 baseline is a constant field") {
  BasisCache cache;
  const SphericalGrid dense = fibonacci_grid(64);
  const KnownSplit split = split_known(dense, 16, 3);
  const SphericalGrid known = dense.subset(split.known);
  Rng rng(5);
  const Matrix known_field = random_matrix(16, 2, rng);
  const Matrix predicted = sh_baseline(known_field, known, 0, dense, cache);
  for (int c = 0; c < 2; ++c) {
    CHECK((predicted.col(c).array() - predicted(0, c)).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("eval_unknown") {
  Rng rng(7);
  const Matrix truth = random_matrix(30, 4, rng);
  std::vector<int> unknown{1, 4, 7, 9, 15, 22, 28};

  CHECK(eval_unknown(truth, truth, unknown) == 0.0);

  Matrix offset = truth;
  for (int idx : unknown) offset.row(idx).array() += 2.0;
  CHECK(eval_unknown(offset, truth, unknown) == 2.0);

  // Over the full direction set the subset metric is exactly the LSD.
  std::vector<int> all(30);
  for (int i = 0; i < 30; ++i) all[static_cast<std::size_t>(i)] = i;
  const Matrix predicted = random_matrix(30, 4, rng);
  CHECK(eval_unknown(predicted, truth, all) == lsd(truth, predicted));

  CHECK_THROWS_AS(eval_unknown(truth, truth, std::vector<int>{}), DomainError);
  CHECK_THROWS_AS(eval_unknown(truth, truth, std::vector<int>{30}), DomainError);
}

TEST_CASE("lsd_per_frequency") {
  Rng rng(11);
  const Matrix truth = random_matrix(20, 5, rng);
  std::vector<int> unknown{0, 3, 5, 11, 19};

  CHECK(lsd_per_frequency(truth, truth, unknown).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("error concentrated in one bin shows up only there") {
    Matrix pred = truth;
    for (int idx : unknown) pred(idx, 2) += 1.5;
    const Vector curve = lsd_per_frequency(pred, truth, unknown);
    CHECK(curve(2) == doctest::Approx(1.5).epsilon(1e-12));
    for (int l = 0; l < 5; ++l) {
      if (l != 2) CHECK(curve(l) == 0.0);
    }
  }

  SUBCASE("per-bin RMS recombines to the overall subset LSD") {
    const Matrix pred = random_matrix(20, 5, rng);
    const Vector curve = lsd_per_frequency(pred, truth, unknown);
    const double recombined = std::sqrt(curve.squaredNorm() / curve.size());
    const double overall = eval_unknown(pred, truth, unknown);
    CHECK(std::abs(recombined - overall) <= 1e-12 * overall);
  }
}

TEST_CASE("export_slice") {
  auto grid = std::make_shared<SphericalGrid>(fibonacci_grid(48));
  HrtfField field;
  field.grid = grid;
  field.freqs = linear_frequency_axis(3, 100.0, 1000.0);
  Rng rng(13);
  field.values = random_matrix(48, 3, rng);
  field.subject = "s001";

  SUBCASE("a full-circle tolerance exports every direction") {
    const auto rows = export_slice(field, kPi, kTwoPi);
    CHECK(rows.size() == 48u * 3u);
    // Sorted by elevation, values copied untouched.
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK(rows[i].theta >= rows[i - 1].theta);
    }
    bool found = false;
    for (const auto& row : rows) {
      if (row.theta == (*grid)[0].theta && row.frequency_hz == 100.0) {
        CHECK(row.value_db == field.values(0, 0));
        found = true;
      }
    }
    CHECK(found);
  }

  SUBCASE("no match reports the nearest azimuth") {
    try {
      export_slice(field, 1.2345, 1e-9);
      FAIL("expected DomainError");
    } catch (const DomainError& e) {
      CHECK(std::string(e.what()).find("nearest available azimuth") != std::string::npos);
    }
  }

  SUBCASE("wrap-aware matching near zero azimuth") {
    std::vector<Direction> dirs{Direction(0.0, 0.01), Direction(0.3, kTwoPi - 0.01),
                                Direction(-0.4, kPi)};
    HrtfField wrap;
    wrap.grid = std::make_shared<SphericalGrid>(std::move(dirs));
    wrap.freqs = linear_frequency_axis(1, 500.0, 500.0);
    wrap.values = Matrix::Zero(3, 1);
    const auto rows = export_slice(wrap, 0.0, 0.05);
    CHECK(rows.size() == 2);
  }
}

TEST_CASE("build_report aggregates per subject and pools the curve") {
  Rng rng(17);
  const int p = 16, l_bins = 4;
  std::vector<int> unknown{2, 5, 7, 9, 11, 13};
  const FrequencyAxis freqs = linear_frequency_axis(l_bins, 100.0, 2000.0);

  std::vector<EvalSample> samples;
  for (const std::string& subject : {"s001", "s002"}) {
    for (Ear ear : {Ear::Left, Ear::Right}) {
      EvalSample sample;
      sample.subject = subject;
      sample.ear = ear;
      sample.truth = random_matrix(p, l_bins, rng);
      sample.predicted = sample.truth + random_matrix(p, l_bins, rng, 0.3);
      samples.push_back(std::move(sample));
    }
  }

  const EvalReport report = build_report("test", samples, unknown, freqs, "{}");
  REQUIRE(report.per_subject_lsd.size() == 2);

  const double manual_s1 = 0.5 * (eval_unknown(samples[0].predicted, samples[0].truth, unknown) +
                                  eval_unknown(samples[1].predicted, samples[1].truth, unknown));
  CHECK(report.per_subject_lsd.at("s001") == doctest::Approx(manual_s1).epsilon(1e-15));

  const double mean = (report.per_subject_lsd.at("s001") + report.per_subject_lsd.at("s002")) / 2.0;
  CHECK(report.mean_lsd == doctest::Approx(mean).epsilon(1e-15));

  // Pooled identity: RMS across bins of the pooled curve is the pooled LSD.
  const double recombined =
      std::sqrt(report.per_frequency_lsd.squaredNorm() / report.per_frequency_lsd.size());
  CHECK(std::abs(recombined - report.pooled_lsd) <= 1e-12 * report.pooled_lsd);
}
