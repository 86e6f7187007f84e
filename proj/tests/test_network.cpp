#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sphcnn/hrtf_data.hpp"
#include "sphcnn/network.hpp"
#include "test_util.hpp"

using namespace sphcnn;
using test::random_matrix;

namespace {

// Reference tiny configuration used for gradient checking.
struct TinyModel {
  std::shared_ptr<SphericalGrid> sparse;
  std::shared_ptr<SphericalGrid> dense;
  ModelParams params;
  Matrix input;
  Matrix target;
};

TinyModel make_tiny(std::uint64_t seed, bool bias = true) {
  TinyModel tiny;
  tiny.sparse = std::make_shared<SphericalGrid>(fibonacci_grid(20));
  tiny.dense = std::make_shared<SphericalGrid>(fibonacci_grid(48));
  ModelConfig config;
  config.n_map_in = 2;
  config.n_conv = 2;
  config.n_map_out = 2;
  config.channels = 3;
  config.bias = bias;
  config.seed = seed;
  tiny.params = init_model(config, tiny.sparse, tiny.dense);

  // Finite-difference probes need every pre-activation firmly away from the
  // ReLU kink: shrink the conv contribution and push channels to alternating
  // signs through the biases, so both mask branches stay locked during a
  // +-1e-4 parameter bump.
  if (bias) {
    for (auto& w : tiny.params.block1.kernels.weights) w *= 0.1;
    for (auto& w : tiny.params.block2.kernels.weights) w *= 0.1;
    for (int j = 0; j < 3; ++j) {
      tiny.params.block1.kernels.bias(j) = (j % 2 == 0) ? 0.8 : -0.8;
      tiny.params.block2.kernels.bias(j) = (j % 2 == 0) ? -0.8 : 0.8;
    }
  }

  Rng rng(seed + 1000);
  tiny.input = random_matrix(20, 3, rng, 1.0);
  tiny.input.array() += 2.0;
  tiny.target = random_matrix(48, 3, rng, 4.0);
  return tiny;
}

}  // namespace

TEST_CASE("relu and its subgradient") {
  CHECK(relu(-2.0) == 0.0);
  CHECK(relu(3.0) == 3.0);
  CHECK(relu(0.0) == 0.0);
  CHECK(relu_grad(0.0) == 0.0);
  CHECK(relu_grad(-1.0) == 0.0);
  CHECK(relu_grad(0.5) == 1.0);
}

TEST_CASE("magnitude_db") {
  CHECK(magnitude_db(1.0) == 0.0);
  CHECK(magnitude_db(10.0) == doctest::Approx(20.0).epsilon(1e-15));
  CHECK(magnitude_db(0.5) == doctest::Approx(20.0 * std::log10(0.5)).epsilon(1e-15));
  CHECK(magnitude_db(0.5) == doctest::Approx(-6.0206).epsilon(1e-4));
  CHECK_THROWS_AS(magnitude_db(0.0), DomainError);
  CHECK_THROWS_AS(magnitude_db(-1.0), DomainError);
  CHECK(magnitude_db_clamped(0.0) == doctest::Approx(20.0 * std::log10(1e-6)).epsilon(1e-12));
  CHECK(magnitude_db_clamped(10.0) == doctest::Approx(20.0).epsilon(1e-15));
}

TEST_CASE("lsd") {
  Rng rng(3);
  const Matrix h = random_matrix(7, 5, rng);

  CHECK(lsd(h, h) == 0.0);

  const Matrix offset = h.array() + 3.0;
  CHECK(lsd(h, offset) == 3.0);

  Matrix a(1, 2), b(1, 2);
  a << 0.0, 0.0;
  b << 3.0, 4.0;
  CHECK(lsd(a, b) == doctest::Approx(std::sqrt(25.0 / 2.0)).epsilon(1e-15));
  CHECK(lsd(a, b) == doctest::Approx(3.5355339059327378).epsilon(1e-15));

  CHECK_THROWS_AS(lsd(h, Matrix::Zero(7, 4)), ShapeError);

  // Non-negative, zero only at equality.
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(4, 3, rng);
    Matrix y = random_matrix(4, 3, rng);
    const double value = lsd(x, y);
    CHECK(value >= 0.0);
    if (!x.isApprox(y)) CHECK(value > 0.0);
  }
}

TEST_CASE("lsd_grad matches a finite difference and vanishes at zero loss") {
  Rng rng(5);
  const Matrix truth = random_matrix(6, 4, rng);
  Matrix pred = random_matrix(6, 4, rng);

  CHECK(lsd_grad(truth, truth).cwiseAbs().maxCoeff() == 0.0);

  const Matrix grad = lsd_grad(truth, pred);
  const double eps = 1e-7;
  for (int trial = 0; trial < 10; ++trial) {
    const int i = static_cast<int>(rng.below(6));
    const int j = static_cast<int>(rng.below(4));
    Matrix up = pred, down = pred;
    up(i, j) += eps;
    down(i, j) -= eps;
    const double fd = (lsd(truth, up) - lsd(truth, down)) / (2.0 * eps);
    CHECK(grad(i, j) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("zero-kernel model reduces to the pure bandlimited resampler") {
  TinyModel tiny = make_tiny(11);
  tiny.params.block1.kernels = zero_kernel_bank(2, 3, 3, true);
  tiny.params.block2.kernels = zero_kernel_bank(2, 3, 3, true);

  BasisCache cache;
  const ModelWorkspace ws = make_workspace(tiny.params, cache);
  const Matrix out = model_forward(tiny.input, tiny.params, ws);

  const Matrix mapped_in =
      mapping_block(tiny.input, *tiny.sparse, *tiny.dense, 2, cache);
  const Matrix mapped_out = mapping_block(mapped_in, *tiny.dense, *tiny.dense, 2, cache);
  CHECK((out - mapped_out).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero input with zero biases maps to zero") {
  TinyModel tiny = make_tiny(13, /*bias=*/false);
  BasisCache cache;
  const ModelWorkspace ws = make_workspace(tiny.params, cache);
  const Matrix out = model_forward(Matrix::Zero(20, 3), tiny.params, ws);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward is deterministic") {
  TinyModel tiny = make_tiny(17);
  BasisCache cache;
  const ModelWorkspace ws = make_workspace(tiny.params, cache);
  const Matrix a = model_forward(tiny.input, tiny.params, ws);
  const Matrix b = model_forward(tiny.input, tiny.params, ws);
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

TEST_CASE("output is bandlimited at the final mapping order") {
  TinyModel tiny = make_tiny(19);
  BasisCache cache;
  const ModelWorkspace ws = make_workspace(tiny.params, cache);
  const Matrix out = model_forward(tiny.input, tiny.params, ws);
  const Matrix reproduced = mapping_block(out, *tiny.dense, *tiny.dense, 2, cache);
  CHECK((reproduced - out).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("analytic gradients match central finite differences on five models") {
  Rng rng(99);
  for (std::uint64_t seed : {23u, 24u, 25u, 26u, 27u}) {
    CAPTURE(seed);
    TinyModel tiny = make_tiny(seed);
    BasisCache cache;
    const ModelWorkspace ws = make_workspace(tiny.params, cache);

    ForwardCache fwd;
    const Matrix out = model_forward(tiny.input, tiny.params, ws, &fwd);
    const GradientBundle grads =
        model_backward(tiny.params, ws, fwd, lsd_grad(tiny.target, out));
    const Vector analytic = pack_grads(grads);

    Vector flat = pack_params(tiny.params);
    auto loss_at = [&](const Vector& theta) {
      ModelParams probe = tiny.params;
      unpack_params(theta, probe);
      return lsd(tiny.target, model_forward(tiny.input, probe, ws));
    };

    const double eps = 1e-4;
    for (int trial = 0; trial < 20; ++trial) {
      const int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(flat.size())));
      Vector up = flat, down = flat;
      up(i) += eps;
      down(i) -= eps;
      const double fd = (loss_at(up) - loss_at(down)) / (2.0 * eps);
      const double rel = std::abs(analytic(i) - fd) / std::max(1e-8, std::abs(fd));
      CHECK(rel <= 1e-4);
    }

    // Zero residual gives all-zero gradients.
    const GradientBundle zero_grads =
        model_backward(tiny.params, ws, fwd, lsd_grad(out, out));
    CHECK(pack_grads(zero_grads).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("directional derivative along the parameter vector") {
  TinyModel tiny = make_tiny(29);
  BasisCache cache;
  const ModelWorkspace ws = make_workspace(tiny.params, cache);

  ForwardCache fwd;
  const Matrix out = model_forward(tiny.input, tiny.params, ws, &fwd);
  const Vector analytic =
      pack_grads(model_backward(tiny.params, ws, fwd, lsd_grad(tiny.target, out)));
  const Vector flat = pack_params(tiny.params);

  auto loss_at = [&](const Vector& theta) {
    ModelParams probe = tiny.params;
    unpack_params(theta, probe);
    return lsd(tiny.target, model_forward(tiny.input, probe, ws));
  };
  const double t = 1e-6;
  const double fd = (loss_at(flat + t * flat) - loss_at(flat - t * flat)) / (2.0 * t);
  CHECK(analytic.dot(flat) == doctest::Approx(fd).epsilon(1e-5));
}

TEST_CASE("positive pre-activations make the conv path exactly linear") {
  TinyModel tiny = make_tiny(31);
  // Block 2 disabled; block 1 biased far into the linear region.
  tiny.params.block2.kernels = zero_kernel_bank(2, 3, 3, true);
  tiny.params.block1.kernels.bias.setConstant(50.0);

  BasisCache cache;
  const ModelWorkspace ws = make_workspace(tiny.params, cache);

  ModelParams zeroed = tiny.params;
  for (auto& w : zeroed.block1.kernels.weights) w.setZero();

  ModelParams doubled = tiny.params;
  for (auto& w : doubled.block1.kernels.weights) w *= 2.0;

  const Matrix base = model_forward(tiny.input, zeroed, ws);
  const Matrix one = model_forward(tiny.input, tiny.params, ws);
  const Matrix two = model_forward(tiny.input, doubled, ws);
  CHECK(((two - base) - 2.0 * (one - base)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("checkpoint roundtrip is bit-exact") {
  namespace fs = std::filesystem;
  TinyModel tiny = make_tiny(37);
  const fs::path path = fs::temp_directory_path() / "sphcnn_test_checkpoint.bin";

  save_checkpoint(path, tiny.params);
  const ModelParams loaded = load_checkpoint(path);

  const Vector a = pack_params(tiny.params);
  const Vector b = pack_params(loaded);
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
  CHECK(loaded.sparse_grid->hash() == tiny.params.sparse_grid->hash());
  CHECK(loaded.dense_grid->hash() == tiny.params.dense_grid->hash());

  BasisCache cache;
  const Matrix out_a =
      model_forward(tiny.input, tiny.params, make_workspace(tiny.params, cache));
  const Matrix out_b = model_forward(tiny.input, loaded, make_workspace(loaded, cache));
  CHECK(std::memcmp(out_a.data(), out_b.data(), sizeof(double) * out_a.size()) == 0);

  SUBCASE("truncated checkpoints are rejected") {
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    REQUIRE(!ec);
    fs::resize_file(path, size - 16, ec);
    REQUIRE(!ec);
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  }

  SUBCASE("garbage magic is rejected") {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint at all";
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  }

  fs::remove(path);
}

TEST_CASE("parameter count") {
  TinyModel tiny = make_tiny(41);
  // Two banks of (N+1) * C * u betas plus u biases each.
  CHECK(tiny.params.parameter_count() == 2 * (3 * 3 * 3 + 3));
}
