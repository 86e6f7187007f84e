#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "sphcnn/hrtf_data.hpp"
#include "test_util.hpp"

using namespace sphcnn;
namespace fs = std::filesystem;

TEST_CASE("fibonacci_grid basics") {
  const SphericalGrid one = fibonacci_grid(1);
  CHECK(one.size() == 1);

  const SphericalGrid a = fibonacci_grid(480);
  const SphericalGrid b = fibonacci_grid(480);
  CHECK(a.hash() == b.hash());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a[i].theta == b[i].theta);
    CHECK(a[i].phi == b[i].phi);
  }

  double min_dist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < a.size(); ++i) {
    for (int j = i + 1; j < a.size(); ++j) {
      min_dist = std::min(min_dist, great_circle_distance(a[i], a[j]));
    }
  }
  CHECK(min_dist > 0.0);
  MESSAGE("fibonacci-480 min pairwise distance: ", min_dist);

  CHECK_THROWS_AS(fibonacci_grid(0), DomainError);
}

TEST_CASE("fibonacci-480 conditioning regression at order 16") {
  // Measured 1.5119 by a pilot SVD run; frozen with margin to guard grid or
  // basis regressions.
  const double cond = condition_number(build_sh_matrix(fibonacci_grid(480), 16));
  MESSAGE("fibonacci-480 order-16 condition number: ", cond);
  CHECK(cond < 1.6);
  CHECK(cond > 1.4);
}

TEST_CASE("split_known") {
  const SphericalGrid dense = fibonacci_grid(480);

  SUBCASE("selecting everything leaves nothing unknown") {
    const KnownSplit split = split_known(dense, 480, 1);
    CHECK(split.known.size() == 480);
    CHECK(split.unknown.empty());
  }

  SUBCASE("120 of 480 leaves 360 unknown, disjoint and exhaustive") {
    const KnownSplit split = split_known(dense, 120, 1);
    CHECK(split.known.size() == 120);
    CHECK(split.unknown.size() == 360);
    std::set<int> all(split.known.begin(), split.known.end());
    all.insert(split.unknown.begin(), split.unknown.end());
    CHECK(all.size() == 480);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 479);
  }

  SUBCASE("deterministic for a fixed seed") {
    const KnownSplit a = split_known(dense, 120, 9);
    const KnownSplit b = split_known(dense, 120, 9);
    CHECK(a.known == b.known);
    const KnownSplit c = split_known(dense, 120, 10);
    CHECK(a.known != c.known);
  }

  SUBCASE("conditioning guard") {
    // 120 farthest-point samples comfortably support order 7.
    CHECK_NOTHROW(split_known(dense, 120, 1, 7));
    // 10 points cannot support order 7 at all.
    CHECK_THROWS_AS(split_known(dense, 10, 1, 7), IllConditionedError);
  }

  CHECK_THROWS_AS(split_known(dense, 0, 1), DomainError);
  CHECK_THROWS_AS(split_known(dense, 481, 1), DomainError);
}

TEST_CASE("synth_subject") {
  auto dense = std::make_shared<SphericalGrid>(fibonacci_grid(128));
  const FrequencyAxis freqs = linear_frequency_axis(5, 200.0, 12000.0);
  const int gt_order = 6;

  SUBCASE("reproducible bit-exact") {
    const HrtfField a = synth_subject(77, freqs, gt_order, dense);
    const HrtfField b = synth_subject(77, freqs, gt_order, dense);
    CHECK(std::memcmp(a.values.data(), b.values.data(),
                      sizeof(double) * a.values.size()) == 0);
    const HrtfField c = synth_subject(78, freqs, gt_order, dense);
    CHECK((a.values - c.values).cwiseAbs().maxCoeff() > 0.0);
  }

  SUBCASE("zero coefficient scale leaves only the envelope") {
    SynthParams params;
    params.coeff_scale = 0.0;
    const HrtfField field = synth_subject(5, freqs, gt_order, dense, params);
    for (int l = 0; l < freqs.bins(); ++l) {
      const double first = field.values(0, l);
      CHECK((field.values.col(l).array() - first).abs().maxCoeff() < 1e-12);
    }
    // The envelope stays within its configured swing.
    CHECK(field.values.minCoeff() > params.env_center_db - 2.5 * params.env_amp_db);
    CHECK(field.values.maxCoeff() < params.env_center_db + 2.5 * params.env_amp_db);
  }

  SUBCASE("exactly bandlimited at the generator order") {
    const HrtfField field = synth_subject(13, freqs, gt_order, dense);
    const ShBasisMatrix basis = build_sh_matrix(*dense, gt_order);
    const ShCoefficients coeffs = sht_least_squares(field.values, basis);
    const Matrix reproduced = isht(coeffs, basis);
    CHECK((reproduced - field.values).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("bounded even for extreme draws") {
    SynthParams params;
    params.coeff_scale = 40.0;  // would exceed the bounds without the squeeze
    const HrtfField field = synth_subject(21, freqs, gt_order, dense, params);
    CHECK(field.values.minCoeff() >= params.min_db - 1e-9);
    CHECK(field.values.maxCoeff() <= params.max_db + 1e-9);

    // The squeeze must not break the bandlimit.
    const ShBasisMatrix basis = build_sh_matrix(*dense, gt_order);
    const Matrix reproduced = isht(sht_least_squares(field.values, basis), basis);
    CHECK((reproduced - field.values).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("field files roundtrip bit-exact") {
  auto grid = std::make_shared<SphericalGrid>(fibonacci_grid(24));
  HrtfField field;
  field.grid = grid;
  field.freqs = linear_frequency_axis(4, 100.0, 8000.0);
  Rng rng(3);
  field.values = test::random_matrix(24, 4, rng, 10.0);
  field.values(0, 0) = -0.0;  // signed zero survives the text format
  field.values(1, 2) = 1.0 / 3.0;
  field.subject = "s042";
  field.ear = Ear::Right;

  const fs::path path = fs::temp_directory_path() / "sphcnn_field_test.field";
  save_field(field, path);
  const HrtfField loaded = load_field(path);

  CHECK(loaded.subject == "s042");
  CHECK(loaded.ear == Ear::Right);
  CHECK(loaded.grid->hash() == grid->hash());
  CHECK(std::memcmp(loaded.values.data(), field.values.data(),
                    sizeof(double) * field.values.size()) == 0);
  CHECK(std::memcmp(loaded.freqs.values.data(), field.freqs.values.data(),
                    sizeof(double) * field.freqs.values.size()) == 0);
  fs::remove(path);
}

TEST_CASE("field file error diagnostics") {
  const fs::path dir = fs::temp_directory_path();

  SUBCASE("truncated file") {
    const fs::path path = dir / "sphcnn_truncated.field";
    std::ofstream out(path);
    out << "sphcnn-field v1\nsubject s001\near left\nP 3\nL 2\ngrid\n0.1 0.2\n";
    out.close();
    CHECK_THROWS_AS(load_field(path), ParseError);
    fs::remove(path);
  }

  SUBCASE("row count mismatch names both counts") {
    const fs::path path = dir / "sphcnn_mismatch.field";
    std::ofstream out(path);
    out << "sphcnn-field v1\nsubject s001\near left\nP 3\nL 2\n"
           "grid\n0.1 0.2\n0.2 0.3\n0.3 0.4\n"
           "freqs\n100 200\n"
           "values\n1 2\n3 4\n";
    out.close();
    try {
      load_field(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      const std::string message = e.what();
      CHECK(message.find("P=3") != std::string::npos);
      CHECK(message.find("2") != std::string::npos);
    }
    fs::remove(path);
  }

  SUBCASE("version mismatch") {
    const fs::path path = dir / "sphcnn_version.field";
    std::ofstream out(path);
    out << "sphcnn-field v9\n";
    out.close();
    CHECK_THROWS_AS(load_field(path), ParseError);
    fs::remove(path);
  }

  SUBCASE("comments and blank lines are tolerated") {
    const fs::path path = dir / "sphcnn_comments.field";
    std::ofstream out(path);
    out << "sphcnn-field v1\n# a comment\nsubject s002\near left\n\nP 1\nL 1\n"
           "grid\n0.5 0.25  # inline comment\nfreqs\n1000\nvalues\n-12.5\n";
    out.close();
    const HrtfField field = load_field(path);
    CHECK(field.values(0, 0) == -12.5);
    CHECK(field.subject == "s002");
    fs::remove(path);
  }
}

TEST_CASE("grid files carry labels") {
  const SphericalGrid dense = fibonacci_grid(16);
  const KnownSplit split = split_known(dense, 5, 2);
  std::vector<PointLabel> labels(16, PointLabel::Unknown);
  for (int idx : split.known) labels[static_cast<std::size_t>(idx)] = PointLabel::Known;
  const SphericalGrid labeled(dense.directions(), labels);

  const fs::path path = fs::temp_directory_path() / "sphcnn_grid_test.txt";
  save_grid(labeled, path);
  const SphericalGrid loaded = load_grid(path);
  CHECK(loaded.hash() == dense.hash());
  REQUIRE(loaded.has_labels());
  int known_count = 0;
  for (auto label : loaded.labels()) {
    if (label == PointLabel::Known) ++known_count;
  }
  CHECK(known_count == 5);
  fs::remove(path);
}

TEST_CASE("make_split") {
  std::vector<std::string> ids;
  for (int i = 0; i < 94; ++i) ids.push_back("s" + std::to_string(i));

  const DatasetSplit full = make_split(ids, 1);
  CHECK(full.train.size() == 77);
  CHECK(full.validation.size() == 10);
  CHECK(full.test.size() == 7);

  std::vector<std::string> ten(ids.begin(), ids.begin() + 10);
  const DatasetSplit small = make_split(ten, 1);
  CHECK(small.train.size() == 8);
  CHECK(small.validation.size() == 1);
  CHECK(small.test.size() == 1);

  const DatasetSplit again = make_split(ten, 1);
  CHECK(again.train == small.train);
  CHECK(again.validation == small.validation);
  CHECK(again.test == small.test);

  // All subjects appear exactly once.
  std::set<std::string> seen(full.train.begin(), full.train.end());
  seen.insert(full.validation.begin(), full.validation.end());
  seen.insert(full.test.begin(), full.test.end());
  CHECK(seen.size() == 94);

  std::vector<std::string> three(ids.begin(), ids.begin() + 3);
  const DatasetSplit minimal = make_split(three, 5);
  CHECK(minimal.train.size() == 1);
  CHECK(minimal.validation.size() == 1);
  CHECK(minimal.test.size() == 1);

  std::vector<std::string> two(ids.begin(), ids.begin() + 2);
  CHECK_THROWS_AS(make_split(two, 1), ConfigError);
}

TEST_CASE("frequency axis") {
  const FrequencyAxis axis = linear_frequency_axis();
  CHECK(axis.bins() == 93);
  CHECK(axis.values(0) == 172.0);
  CHECK(axis.values(92) == 16000.0);
  CHECK_NOTHROW(axis.validate());

  FrequencyAxis bad;
  bad.values.resize(2);
  bad.values << 100.0, 100.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
