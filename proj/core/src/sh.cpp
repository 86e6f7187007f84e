#include "sphcnn/sh.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>

namespace sphcnn {

int sh_index(int order, int mode) {
  if (order < 0 || mode < -order || mode > order) {
    throw DomainError("sh_index: need |m| <= n, got n=" + std::to_string(order) +
                      " m=" + std::to_string(mode));
  }
  return order * order + order + mode;
}

std::pair<int, int> sh_order_mode(int index) {
  if (index < 0) throw DomainError("sh_order_mode: negative index");
  int n = static_cast<int>(std::floor(std::sqrt(static_cast<double>(index))));
  while ((n + 1) * (n + 1) <= index) ++n;
  while (n * n > index) --n;
  return {n, index - n * n - n};
}

double assoc_legendre(int n, int m, double x) {
  if (m < 0 || m > n) {
    throw DomainError("assoc_legendre: need 0 <= m <= n, got n=" + std::to_string(n) +
                      " m=" + std::to_string(m));
  }
  if (!(x >= -1.0 && x <= 1.0)) {
    throw DomainError("assoc_legendre: |x| must be <= 1, got " + std::to_string(x));
  }

  // P_m^m = (2m-1)!! (1-x^2)^{m/2}, no Condon-Shortley phase.
  double pmm = 1.0;
  if (m > 0) {
    const double s = std::sqrt((1.0 - x) * (1.0 + x));
    double fact = 1.0;
    for (int k = 0; k < m; ++k) {
      pmm *= fact * s;
      fact += 2.0;
    }
  }
  if (n == m) return pmm;

  double pm1 = pmm;                        // P_m^m
  double p = x * (2.0 * m + 1.0) * pmm;    // P_{m+1}^m
  for (int k = m + 2; k <= n; ++k) {
    const double next = (x * (2.0 * k - 1.0) * p - (k + m - 1.0) * pm1) / (k - m);
    pm1 = p;
    p = next;
  }
  return p;
}

namespace {

// sqrt((2n+1)/(4*pi) * (n-m)!/(n+m)!) for m >= 0.
double sh_norm(int n, int m) {
  double ratio = 1.0;
  for (int k = n - m + 1; k <= n + m; ++k) ratio *= static_cast<double>(k);
  return std::sqrt((2.0 * n + 1.0) / (kFourPi * ratio));
}

constexpr double kSqrt2 = 1.4142135623730951;

}  // namespace

double real_sh(int order, int mode, const Direction& dir) {
  if (std::abs(mode) > order) {
    throw DomainError("real_sh: need |m| <= n, got n=" + std::to_string(order) +
                      " m=" + std::to_string(mode));
  }
  const double x = std::sin(dir.theta);  // elevation convention
  if (mode == 0) {
    return sh_norm(order, 0) * assoc_legendre(order, 0, x);
  }
  const int m = std::abs(mode);
  const double base = kSqrt2 * sh_norm(order, m) * assoc_legendre(order, m, x);
  return mode > 0 ? base * std::cos(m * dir.phi) : base * std::sin(m * dir.phi);
}

namespace {

// One basis row: all (n, m) for n <= order at a single direction, via the
// m-seeded upward recurrences. Equivalent to calling real_sh per entry but
// O(N^2) instead of O(N^3) per direction.
void sh_row(const Direction& dir, int order, double* out) {
  const double x = std::sin(dir.theta);
  const double s = std::sqrt((1.0 - x) * (1.0 + x));

  std::vector<double> pnm(static_cast<std::size_t>(sh_count(order)));
  auto at = [&](int n, int m) -> double& {
    return pnm[static_cast<std::size_t>(n * (n + 1) / 2 + m)];
  };

  double pmm = 1.0;
  double fact = 1.0;
  for (int m = 0; m <= order; ++m) {
    at(m, m) = pmm;
    if (m + 1 <= order) at(m + 1, m) = x * (2.0 * m + 1.0) * pmm;
    for (int n = m + 2; n <= order; ++n) {
      at(n, m) = (x * (2.0 * n - 1.0) * at(n - 1, m) - (n + m - 1.0) * at(n - 2, m)) /
                 (n - m);
    }
    pmm *= fact * s;
    fact += 2.0;
  }

  for (int n = 0; n <= order; ++n) {
    out[sh_index(n, 0)] = sh_norm(n, 0) * at(n, 0);
    for (int m = 1; m <= n; ++m) {
      const double base = kSqrt2 * sh_norm(n, m) * at(n, m);
      out[sh_index(n, m)] = base * std::cos(m * dir.phi);
      out[sh_index(n, -m)] = base * std::sin(m * dir.phi);
    }
  }
}

}  // namespace

ShBasisMatrix build_sh_matrix(const SphericalGrid& grid, int order) {
  if (order < 0) throw DomainError("build_sh_matrix: order must be >= 0");
  const int p = grid.size();
  const int k = sh_count(order);
  ShBasisMatrix basis;
  basis.order = order;
  basis.grid_hash = grid.hash();
  basis.values.resize(p, k);
  std::vector<double> row(static_cast<std::size_t>(k));
  for (int i = 0; i < p; ++i) {
    sh_row(grid[i], order, row.data());
    for (int j = 0; j < k; ++j) basis.values(i, j) = row[static_cast<std::size_t>(j)];
  }
  return basis;
}

double condition_number(const ShBasisMatrix& basis) {
  Eigen::BDCSVD<Matrix> svd(basis.values);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  const double r = smax / smin;
  return r * r;
}

ShCoefficients make_coefficients(Matrix values, int order) {
  if (values.rows() != sh_count(order)) {
    throw ShapeError("ShCoefficients: expected " + std::to_string(sh_count(order)) +
                     " rows for order " + std::to_string(order) + ", got " +
                     std::to_string(values.rows()));
  }
  return ShCoefficients{std::move(values), order};
}

namespace {

double effective_condition(const Matrix& y, double ridge) {
  Eigen::BDCSVD<Matrix> svd(y);
  const auto& sv = svd.singularValues();
  const double smax2 = sv(0) * sv(0) + ridge;
  const double smin2 = sv(sv.size() - 1) * sv(sv.size() - 1) + ridge;
  if (smin2 <= 0.0) return std::numeric_limits<double>::infinity();
  return smax2 / smin2;
}

void check_condition(double cond, double threshold, int points, int count) {
  if (!(cond <= threshold)) {
    throw IllConditionedError(
        "least-squares SHT rejected: condition number " + std::to_string(cond) +
        " exceeds threshold " + std::to_string(threshold) + " (P=" +
        std::to_string(points) + ", coefficients=" + std::to_string(count) + ")");
  }
}

}  // namespace

ShSolver::ShSolver(const SphericalGrid& grid, int order, const SolverOptions& opts)
    : basis_(build_sh_matrix(grid, order)) {
  const int p = grid.size();
  const int k = sh_count(order);
  if (p < k) {
    throw IllConditionedError("ShSolver: " + std::to_string(p) +
                              " directions cannot support order " + std::to_string(order) +
                              " (needs >= " + std::to_string(k) + ")");
  }
  condition_ = effective_condition(basis_.values, opts.ridge);
  check_condition(condition_, opts.condition_threshold, p, k);

  if (opts.ridge > 0.0) {
    Matrix augmented(p + k, k);
    augmented.topRows(p) = basis_.values;
    augmented.bottomRows(k) = std::sqrt(opts.ridge) * Matrix::Identity(k, k);
    Matrix rhs = Matrix::Zero(p + k, p);
    rhs.topLeftCorner(p, p).setIdentity();
    pinv_ = augmented.colPivHouseholderQr().solve(rhs);
  } else {
    pinv_ = basis_.values.colPivHouseholderQr().solve(Matrix::Identity(p, p));
  }
}

ShCoefficients ShSolver::sht(const Matrix& field) const {
  if (field.rows() != basis_.values.rows()) {
    throw ShapeError("ShSolver::sht: field has " + std::to_string(field.rows()) +
                     " rows, grid has " + std::to_string(basis_.values.rows()));
  }
  return ShCoefficients{pinv_ * field, basis_.order};
}

Matrix ShSolver::isht(const ShCoefficients& coeffs) const {
  if (coeffs.values.rows() != basis_.values.cols()) {
    throw ShapeError("ShSolver::isht: coefficient rows " +
                     std::to_string(coeffs.values.rows()) + " != basis columns " +
                     std::to_string(basis_.values.cols()));
  }
  return basis_.values * coeffs.values;
}

Matrix ShSolver::sht_adjoint(const Matrix& coeff_grad) const {
  if (coeff_grad.rows() != pinv_.rows()) {
    throw ShapeError("ShSolver::sht_adjoint: bad row count");
  }
  return pinv_.transpose() * coeff_grad;
}

Matrix ShSolver::isht_adjoint(const Matrix& field_grad) const {
  if (field_grad.rows() != basis_.values.rows()) {
    throw ShapeError("ShSolver::isht_adjoint: bad row count");
  }
  return basis_.values.transpose() * field_grad;
}

ShCoefficients sht_least_squares(const Matrix& field, const ShBasisMatrix& basis,
                                 const SolverOptions& opts) {
  const int p = static_cast<int>(basis.values.rows());
  const int k = static_cast<int>(basis.values.cols());
  if (field.rows() != p) {
    throw ShapeError("sht_least_squares: field has " + std::to_string(field.rows()) +
                     " rows, basis has " + std::to_string(p));
  }
  if (p < k) {
    throw IllConditionedError("sht_least_squares: " + std::to_string(p) +
                              " directions cannot support " + std::to_string(k) +
                              " coefficients");
  }
  check_condition(effective_condition(basis.values, opts.ridge), opts.condition_threshold,
                  p, k);
  if (opts.ridge > 0.0) {
    Matrix augmented(p + k, k);
    augmented.topRows(p) = basis.values;
    augmented.bottomRows(k) = std::sqrt(opts.ridge) * Matrix::Identity(k, k);
    Matrix rhs = Matrix::Zero(p + k, field.cols());
    rhs.topRows(p) = field;
    return ShCoefficients{augmented.colPivHouseholderQr().solve(rhs), basis.order};
  }
  return ShCoefficients{basis.values.colPivHouseholderQr().solve(field), basis.order};
}

Matrix isht(const ShCoefficients& coeffs, const ShBasisMatrix& basis) {
  if (coeffs.values.rows() != basis.values.cols()) {
    throw ShapeError("isht: coefficient rows " + std::to_string(coeffs.values.rows()) +
                     " != basis columns " + std::to_string(basis.values.cols()));
  }
  return basis.values * coeffs.values;
}

std::shared_ptr<const ShBasisMatrix> BasisCache::basis(const SphericalGrid& grid,
                                                       int order) {
  const std::pair<std::uint64_t, int> key{grid.hash(), order};
  std::lock_guard lock(mutex_);
  auto it = bases_.find(key);
  if (it != bases_.end()) return it->second;
  auto built = std::make_shared<const ShBasisMatrix>(build_sh_matrix(grid, order));
  bases_.emplace(key, built);
  return built;
}

std::shared_ptr<const ShSolver> BasisCache::solver(const SphericalGrid& grid, int order,
                                                   const SolverOptions& opts) {
  std::uint64_t thr_bits, ridge_bits;
  std::memcpy(&thr_bits, &opts.condition_threshold, sizeof(thr_bits));
  std::memcpy(&ridge_bits, &opts.ridge, sizeof(ridge_bits));
  const SolverKey key{grid.hash(), order, thr_bits, ridge_bits};
  std::lock_guard lock(mutex_);
  auto it = solvers_.find(key);
  if (it != solvers_.end()) return it->second;
  auto built = std::make_shared<const ShSolver>(grid, order, opts);
  solvers_.emplace(key, built);
  return built;
}

}  // namespace sphcnn
