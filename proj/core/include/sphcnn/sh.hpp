#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include "sphcnn/direction.hpp"
#include "sphcnn/error.hpp"
#include "sphcnn/types.hpp"

namespace sphcnn {

// Flattened coefficient index i = n^2 + n + m, a bijection between
// [0, (N+1)^2) and {(n, m) : 0 <= n <= N, -n <= m <= n}.
int sh_index(int order, int mode);
std::pair<int, int> sh_order_mode(int index);

inline constexpr int sh_count(int order) { return (order + 1) * (order + 1); }

inline constexpr double kY00 = 0.28209479177387814;  // 1/sqrt(4*pi)

// Associated Legendre function P_n^m(x) without the Condon-Shortley phase,
// via the stable upward recurrence in n seeded by the closed-form P_m^m.
double assoc_legendre(int n, int m, double x);

// Orthonormal real spherical harmonic of order n and mode m. theta is
// elevation, so the Legendre argument is sin(theta). Convention: m = 0 is
// the zonal term, m > 0 carries cos(m*phi), m < 0 carries sin(|m|*phi),
// both scaled by sqrt(2) on top of the orthonormal norm.
double real_sh(int order, int mode, const Direction& dir);

struct ShBasisMatrix {
  Matrix values;  // P x (N+1)^2, column i = n^2+n+m
  int order = 0;
  std::uint64_t grid_hash = 0;
};

ShBasisMatrix build_sh_matrix(const SphericalGrid& grid, int order);

// 2-norm condition number of Yt*Y, i.e. the squared singular-value ratio
// of Y itself.
double condition_number(const ShBasisMatrix& basis);

struct ShCoefficients {
  Matrix values;  // (N+1)^2 x C
  int order = 0;

  int channels() const { return static_cast<int>(values.cols()); }
};

// Validates the row count against the order.
ShCoefficients make_coefficients(Matrix values, int order);

struct SolverOptions {
  double condition_threshold = 1e6;
  double ridge = 0.0;  // optional Tikhonov term, off by default

  friend bool operator==(const SolverOptions&, const SolverOptions&) = default;
};

// Least-squares forward transform and inverse transform bound to one
// (grid, order) pair. The solve goes through a column-pivoted QR
// factorization, mathematically identical to the normal-equation form but
// numerically safer; the pseudo-inverse is materialized once so repeated
// transforms (and their adjoints, used by backprop) are plain products.
class ShSolver {
 public:
  ShSolver(const SphericalGrid& grid, int order, const SolverOptions& opts = {});

  const ShBasisMatrix& basis() const { return basis_; }
  int order() const { return basis_.order; }
  int points() const { return static_cast<int>(basis_.values.rows()); }
  double condition() const { return condition_; }

  ShCoefficients sht(const Matrix& field) const;
  Matrix isht(const ShCoefficients& coeffs) const;

  // Adjoints of the two linear maps, for reverse-mode gradients.
  Matrix sht_adjoint(const Matrix& coeff_grad) const;
  Matrix isht_adjoint(const Matrix& field_grad) const;

 private:
  ShBasisMatrix basis_;
  Matrix pinv_;  // (N+1)^2 x P
  double condition_ = 0.0;
};

// One-shot least-squares transform; checks conditioning on every call.
// Prefer ShSolver (or BasisCache) when transforming repeatedly.
ShCoefficients sht_least_squares(const Matrix& field, const ShBasisMatrix& basis,
                                 const SolverOptions& opts = {});

Matrix isht(const ShCoefficients& coeffs, const ShBasisMatrix& basis);

// Shared, thread-safe cache of basis matrices and solvers keyed by
// (grid hash, order, solver options).
class BasisCache {
 public:
  std::shared_ptr<const ShBasisMatrix> basis(const SphericalGrid& grid, int order);
  std::shared_ptr<const ShSolver> solver(const SphericalGrid& grid, int order,
                                         const SolverOptions& opts = {});

 private:
  struct SolverKey {
    std::uint64_t grid_hash;
    int order;
    std::uint64_t threshold_bits;
    std::uint64_t ridge_bits;

    auto operator<=>(const SolverKey&) const = default;
  };

  std::map<std::pair<std::uint64_t, int>, std::shared_ptr<const ShBasisMatrix>> bases_;
  std::map<SolverKey, std::shared_ptr<const ShSolver>> solvers_;
  std::mutex mutex_;
};

}  // namespace sphcnn
