#include "sphcnn/direction.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace sphcnn {
namespace {

std::uint64_t fnv1a(std::uint64_t hash, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, sizeof(bits));
  for (int i = 0; i < 8; ++i) {
    hash ^= (bits >> (8 * i)) & 0xffULL;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace

Direction::Direction(double elevation, double azimuth) {
  if (!(elevation >= -kPi / 2 && elevation <= kPi / 2)) {
    throw DomainError("Direction: elevation must lie in [-pi/2, pi/2], got " +
                      std::to_string(elevation));
  }
  if (!std::isfinite(azimuth)) {
    throw DomainError("Direction: azimuth must be finite");
  }
  theta = elevation;
  phi = std::fmod(azimuth, kTwoPi);
  if (phi < 0.0) phi += kTwoPi;
  if (phi >= kTwoPi) phi = 0.0;
}

double Direction::x() const { return std::cos(theta) * std::cos(phi); }
double Direction::y() const { return std::cos(theta) * std::sin(phi); }
double Direction::z() const { return std::sin(theta); }

double great_circle_distance(const Direction& a, const Direction& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  const double chord = std::sqrt(dx * dx + dy * dy + dz * dz);
  return 2.0 * std::asin(std::min(1.0, chord / 2.0));
}

SphericalGrid::SphericalGrid(std::vector<Direction> directions,
                             std::vector<PointLabel> labels)
    : directions_(std::move(directions)), labels_(std::move(labels)) {
  if (directions_.empty()) {
    throw DomainError("SphericalGrid: needs at least one direction");
  }
  if (!labels_.empty() && labels_.size() != directions_.size()) {
    throw ShapeError("SphericalGrid: label count " + std::to_string(labels_.size()) +
                     " != point count " + std::to_string(directions_.size()));
  }

  // Duplicate scan via a z-sorted sliding window: great-circle distance d
  // implies |z_i - z_j| <= d, so only near-equal-z pairs need the full check.
  std::vector<int> order(directions_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return directions_[static_cast<std::size_t>(a)].z() <
           directions_[static_cast<std::size_t>(b)].z();
  });
  const double tol = kDuplicateTolerance;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& a = directions_[static_cast<std::size_t>(order[i])];
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const auto& b = directions_[static_cast<std::size_t>(order[j])];
      if (b.z() - a.z() > tol) break;
      if (great_circle_distance(a, b) < tol) {
        throw DomainError("SphericalGrid: duplicate directions at indices " +
                          std::to_string(order[i]) + " and " + std::to_string(order[j]));
      }
    }
  }

  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& d : directions_) {
    h = fnv1a(h, d.theta);
    h = fnv1a(h, d.phi);
  }
  hash_ = h;
}

SphericalGrid SphericalGrid::subset(const std::vector<int>& indices) const {
  std::vector<Direction> dirs;
  std::vector<PointLabel> labs;
  dirs.reserve(indices.size());
  for (int idx : indices) {
    if (idx < 0 || idx >= size()) {
      throw DomainError("SphericalGrid::subset: index " + std::to_string(idx) +
                        " out of range [0, " + std::to_string(size()) + ")");
    }
    dirs.push_back(directions_[static_cast<std::size_t>(idx)]);
    if (has_labels()) labs.push_back(labels_[static_cast<std::size_t>(idx)]);
  }
  return SphericalGrid(std::move(dirs), std::move(labs));
}

}  // namespace sphcnn
