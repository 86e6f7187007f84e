#include "sphcnn/sphconv.hpp"

#include <cmath>
#include <string>

namespace sphcnn {

double spectral_scale(int order) {
  return kTwoPi * std::sqrt(kFourPi / (2.0 * order + 1.0));
}

Vector zonal_expand(const Vector& beta) {
  const int order = static_cast<int>(beta.size()) - 1;
  if (order < 0) throw ShapeError("zonal_expand: empty coefficient vector");
  Vector out(sh_count(order));
  for (int n = 0; n <= order; ++n) {
    out.segment(n * n, 2 * n + 1).setConstant(beta(n));
  }
  return out;
}

ShCoefficients spectral_convolve(const ShCoefficients& a, const Vector& beta) {
  if (static_cast<int>(beta.size()) != a.order + 1) {
    throw ShapeError("spectral_convolve: kernel has " + std::to_string(beta.size()) +
                     " orders, signal is order " + std::to_string(a.order));
  }
  if (a.channels() != 1) {
    throw ShapeError("spectral_convolve: expected a single channel, got " +
                     std::to_string(a.channels()));
  }
  ShCoefficients out{Matrix(a.values.rows(), 1), a.order};
  for (int n = 0; n <= a.order; ++n) {
    out.values.block(n * n, 0, 2 * n + 1, 1) =
        spectral_scale(n) * beta(n) * a.values.block(n * n, 0, 2 * n + 1, 1);
  }
  return out;
}

double ZonalKernelBank::beta(int kernel, int channel, int order_n) const {
  return weights[static_cast<std::size_t>(order_n)](channel, kernel);
}

void ZonalKernelBank::validate() const {
  if (static_cast<int>(weights.size()) != order + 1) {
    throw ShapeError("ZonalKernelBank: expected " + std::to_string(order + 1) +
                     " per-order weight matrices, got " + std::to_string(weights.size()));
  }
  const int c = in_channels();
  const int u = kernels();
  for (const auto& w : weights) {
    if (w.rows() != c || w.cols() != u) {
      throw ShapeError("ZonalKernelBank: inconsistent weight shapes");
    }
    if (!w.allFinite()) throw DomainError("ZonalKernelBank: non-finite weight");
  }
  if (has_bias()) {
    if (static_cast<int>(bias.size()) != u) {
      throw ShapeError("ZonalKernelBank: bias length " + std::to_string(bias.size()) +
                       " != kernel count " + std::to_string(u));
    }
    if (!bias.allFinite()) throw DomainError("ZonalKernelBank: non-finite bias");
  }
}

ZonalKernelBank zero_kernel_bank(int order, int in_channels, int kernels, bool with_bias) {
  ZonalKernelBank bank;
  bank.order = order;
  bank.weights.assign(static_cast<std::size_t>(order + 1),
                      Matrix::Zero(in_channels, kernels));
  if (with_bias) bank.bias = Vector::Zero(kernels);
  return bank;
}

namespace {

// The bias is a constant offset on the sphere, so it lands on the (0,0)
// coefficient scaled by 1/Y_00 = sqrt(4*pi).
constexpr double kBiasToCoeff = 3.5449077018110318;

}  // namespace

ShCoefficients conv_layer_forward(const ShCoefficients& a, const ZonalKernelBank& bank) {
  if (bank.order != a.order) {
    throw ShapeError("conv_layer_forward: kernel order " + std::to_string(bank.order) +
                     " != signal order " + std::to_string(a.order));
  }
  if (bank.in_channels() != a.channels()) {
    throw ShapeError("conv_layer_forward: kernel expects " +
                     std::to_string(bank.in_channels()) + " channels, signal has " +
                     std::to_string(a.channels()));
  }
  const int u = bank.kernels();
  ShCoefficients out{Matrix(a.values.rows(), u), a.order};
  for (int n = 0; n <= a.order; ++n) {
    out.values.block(n * n, 0, 2 * n + 1, u).noalias() =
        spectral_scale(n) * a.values.block(n * n, 0, 2 * n + 1, a.channels()) *
        bank.weights[static_cast<std::size_t>(n)];
  }
  if (bank.has_bias()) {
    out.values.row(0) += kBiasToCoeff * bank.bias.transpose();
  }
  return out;
}

ConvLayerGrads conv_layer_backward(const ShCoefficients& a, const ZonalKernelBank& bank,
                                   const ShCoefficients& output_grad) {
  if (output_grad.order != a.order || output_grad.channels() != bank.kernels()) {
    throw ShapeError("conv_layer_backward: gradient shape mismatch");
  }
  ConvLayerGrads grads;
  grads.bank = zero_kernel_bank(bank.order, bank.in_channels(), bank.kernels(),
                                bank.has_bias());
  grads.input = ShCoefficients{Matrix(a.values.rows(), a.channels()), a.order};
  for (int n = 0; n <= a.order; ++n) {
    const double s = spectral_scale(n);
    const auto a_n = a.values.block(n * n, 0, 2 * n + 1, a.channels());
    const auto g_n = output_grad.values.block(n * n, 0, 2 * n + 1, bank.kernels());
    grads.bank.weights[static_cast<std::size_t>(n)].noalias() = s * a_n.transpose() * g_n;
    grads.input.values.block(n * n, 0, 2 * n + 1, a.channels()).noalias() =
        s * g_n * bank.weights[static_cast<std::size_t>(n)].transpose();
  }
  if (bank.has_bias()) {
    grads.bank.bias = kBiasToCoeff * output_grad.values.row(0).transpose();
  }
  return grads;
}

void ConvBlockParams::validate() const {
  kernels.validate();
  if (use_skip && kernels.kernels() != kernels.in_channels()) {
    throw ShapeError("ConvBlockParams: identity skip requires kernel count " +
                     std::to_string(kernels.kernels()) + " == input channels " +
                     std::to_string(kernels.in_channels()));
  }
}

Matrix mapping_block(const Matrix& field, const SphericalGrid& grid_in,
                     const SphericalGrid& grid_out, int order, BasisCache& cache,
                     const SolverOptions& opts) {
  auto solver = cache.solver(grid_in, order, opts);
  auto out_basis = cache.basis(grid_out, order);
  return isht(solver->sht(field), *out_basis);
}

Matrix rotate_z(const Matrix& field, const SphericalGrid& grid, int order, double angle,
                BasisCache& cache, const SolverOptions& opts) {
  auto solver = cache.solver(grid, order, opts);
  const ShCoefficients coeffs = solver->sht(field);
  std::vector<Direction> rotated;
  rotated.reserve(static_cast<std::size_t>(grid.size()));
  for (const auto& d : grid.directions()) {
    rotated.emplace_back(d.theta, d.phi - angle);
  }
  const SphericalGrid rotated_grid(std::move(rotated));
  const ShBasisMatrix rotated_basis = build_sh_matrix(rotated_grid, order);
  return isht(coeffs, rotated_basis);
}

}  // namespace sphcnn
