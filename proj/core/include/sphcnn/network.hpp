#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "sphcnn/sphconv.hpp"

namespace sphcnn {

double relu(double x);
double relu_grad(double x);  // subgradient at 0 is 0

Matrix relu(const Matrix& x);
Matrix relu_mask(const Matrix& pre_activation);

// 20*log10(magnitude); throws DomainError on non-positive input.
double magnitude_db(double magnitude);
// Clamping variant: magnitudes below the floor are lifted to it first.
double magnitude_db_clamped(double magnitude, double floor = 1e-6);

// Root-mean-square dB error over all directions and frequency bins.
double lsd(const Matrix& truth, const Matrix& predicted);

// d lsd / d predicted = residual / (P*L*lsd); defined as zero at zero loss.
Matrix lsd_grad(const Matrix& truth, const Matrix& predicted);

// Interpolation model: sparse-to-dense mapping block, two convolutional
// blocks with ReLU and identity skips, final bandlimit mapping block.
struct ModelParams {
  std::shared_ptr<const SphericalGrid> sparse_grid;
  std::shared_ptr<const SphericalGrid> dense_grid;
  int n_map_in = 7;
  int n_conv = 16;
  int n_map_out = 16;
  int channels = 93;  // L, network input and output width
  ConvBlockParams block1;
  ConvBlockParams block2;

  void validate() const;
  long parameter_count() const;
};

struct ModelConfig {
  int n_map_in = 7;
  int n_conv = 16;
  int n_map_out = 16;
  int channels = 93;
  bool bias = true;
  std::uint64_t seed = 1;
};

// Kernel init: betas ~ uniform(-s, s) with s = sqrt(1/(C_in*(N+1))),
// biases zero. Identity skips force kernel count u = channels.
ModelParams init_model(const ModelConfig& config,
                       std::shared_ptr<const SphericalGrid> sparse_grid,
                       std::shared_ptr<const SphericalGrid> dense_grid);

// Solvers bound to the model's grids and orders, shared through a cache.
struct ModelWorkspace {
  std::shared_ptr<const ShSolver> map_in;          // sparse grid, n_map_in
  std::shared_ptr<const ShBasisMatrix> map_in_out; // dense grid, n_map_in
  std::shared_ptr<const ShSolver> conv;            // dense grid, n_conv
  std::shared_ptr<const ShSolver> map_out;         // dense grid, n_map_out
};

ModelWorkspace make_workspace(const ModelParams& params, BasisCache& cache,
                              const SolverOptions& opts = {});

// Intermediates kept for the hand-written backward pass.
struct ForwardCache {
  Matrix x0;                  // dense field after the input mapping
  ShCoefficients a1, c1;      // block 1 spectra (pre/post convolution)
  Matrix y1, x1;              // block 1 pre-activation, post-skip field
  ShCoefficients a2, c2;
  Matrix y2, x2;
  Matrix output;
  bool valid = false;
};

Matrix model_forward(const Matrix& sparse_field, const ModelParams& params,
                     const ModelWorkspace& ws, ForwardCache* cache = nullptr);

struct GradientBundle {
  ZonalKernelBank block1;  // same shapes as the learnable tensors
  ZonalKernelBank block2;

  GradientBundle& operator+=(const GradientBundle& other);
  GradientBundle& operator*=(double scale);
  bool all_finite() const;
};

GradientBundle zero_gradients(const ModelParams& params);

// Reverse-mode gradients of the loss w.r.t. every kernel beta and bias.
// The mapping/SHT/ISHT stages are fixed linear maps (adjoint in backward),
// ReLU uses its subgradient, skips add gradients.
GradientBundle model_backward(const ModelParams& params, const ModelWorkspace& ws,
                              const ForwardCache& cache, const Matrix& output_grad);

// Flat parameter view in checkpoint declaration order: block1 weights for
// n = 0..N (column-major C_in x u), block1 bias, then block2 likewise.
Vector pack_params(const ModelParams& params);
void unpack_params(const Vector& flat, ModelParams& params);
Vector pack_grads(const GradientBundle& grads);

// Versioned binary checkpoint: fixed header (magic, version, orders,
// widths, flags, grid hashes), both grids, then the flat parameter vector
// as little-endian 64-bit floats.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace sphcnn
