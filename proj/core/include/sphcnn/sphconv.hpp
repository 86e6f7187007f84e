#pragma once

#include <vector>

#include "sphcnn/sh.hpp"
#include "sphcnn/types.hpp"

namespace sphcnn {

// Per-order gain of the spectral convolution theorem for zonal kernels:
// a unit coefficient at order n picks up 2*pi*sqrt(4*pi/(2n+1)).
double spectral_scale(int order);

// Replicates a per-order zonal coefficient vector beta[n] across all modes
// of each order: output[n^2+n+m] = beta[n].
Vector zonal_expand(const Vector& beta);

// Coefficient-domain convolution of a single-channel signal with one zonal
// kernel: gamma_{nm} = spectral_scale(n) * a_{nm} * beta_n. Exact for
// bandlimited inputs; never creates energy above the input order.
ShCoefficients spectral_convolve(const ShCoefficients& a, const Vector& beta);

// A bank of u zonal kernels over C_in input channels. weights[n] is the
// C_in x u matrix of beta_{n0} coefficients for order n; bias (optional,
// length u) adds a constant offset on the sphere per output channel.
struct ZonalKernelBank {
  int order = 0;
  std::vector<Matrix> weights;  // (order+1) matrices, each C_in x u
  Vector bias;                  // length u, or empty when disabled

  int kernels() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }
  int in_channels() const { return weights.empty() ? 0 : static_cast<int>(weights.front().rows()); }
  bool has_bias() const { return bias.size() > 0; }

  // Element accessor: kernel j, input channel c, order n.
  double beta(int kernel, int channel, int order_n) const;

  void validate() const;  // shape consistency + finiteness
};

ZonalKernelBank zero_kernel_bank(int order, int in_channels, int kernels, bool with_bias);

// Multi-kernel convolutional layer: output column j sums the zonal
// convolution of every input channel with its kernel, plus the per-kernel
// constant-on-sphere bias folded into the (0,0) coefficient.
ShCoefficients conv_layer_forward(const ShCoefficients& a, const ZonalKernelBank& bank);

struct ConvLayerGrads {
  ZonalKernelBank bank;   // gradient w.r.t. weights/bias, same shapes
  ShCoefficients input;   // gradient w.r.t. a
};

ConvLayerGrads conv_layer_backward(const ShCoefficients& a, const ZonalKernelBank& bank,
                                   const ShCoefficients& output_grad);

struct ConvBlockParams {
  ZonalKernelBank kernels;
  bool use_skip = true;
  bool use_relu = true;

  void validate() const;  // identity skip requires kernels == in_channels
};

// Parameter-free bandlimited resampling: least-squares SHT on grid_in,
// ISHT on grid_out, both at the given order.
Matrix mapping_block(const Matrix& field, const SphericalGrid& grid_in,
                     const SphericalGrid& grid_out, int order, BasisCache& cache,
                     const SolverOptions& opts = {});

// Rotates a bandlimited field about the z axis by resampling at
// (theta, phi - angle): SHT, then evaluation at the rotated directions.
Matrix rotate_z(const Matrix& field, const SphericalGrid& grid, int order, double angle,
                BasisCache& cache, const SolverOptions& opts = {});

}  // namespace sphcnn
