#pragma once

#include <cstdint>
#include <vector>

#include "sphcnn/error.hpp"
#include "sphcnn/types.hpp"

namespace sphcnn {

// A point on the unit sphere. theta is elevation in [-pi/2, pi/2] -- not
// colatitude -- and phi is azimuth, normalized into [0, 2*pi) on
// construction. Most spherical-harmonic texts parameterize by colatitude;
// everything downstream passes sin(theta) where those texts use cos(colat).
struct Direction {
  double theta = 0.0;
  double phi = 0.0;

  Direction() = default;
  Direction(double elevation, double azimuth);

  // Unit-vector components, z along the pole.
  double x() const;
  double y() const;
  double z() const;
};

double great_circle_distance(const Direction& a, const Direction& b);

enum class PointLabel : std::uint8_t { Unlabeled = 0, Known = 1, Unknown = 2 };

// Immutable ordered point set on the sphere. Construction rejects pairs
// closer than kDuplicateTolerance radians of great-circle distance.
class SphericalGrid {
 public:
  static constexpr double kDuplicateTolerance = 1e-9;

  explicit SphericalGrid(std::vector<Direction> directions,
                         std::vector<PointLabel> labels = {});

  int size() const { return static_cast<int>(directions_.size()); }
  const Direction& operator[](int p) const { return directions_[static_cast<std::size_t>(p)]; }
  const std::vector<Direction>& directions() const { return directions_; }

  bool has_labels() const { return !labels_.empty(); }
  const std::vector<PointLabel>& labels() const { return labels_; }

  // FNV-1a over the exact bit patterns of (theta, phi) in point order.
  // Serves as the grid identity for basis caching and checkpoints.
  std::uint64_t hash() const { return hash_; }

  SphericalGrid subset(const std::vector<int>& indices) const;

 private:
  std::vector<Direction> directions_;
  std::vector<PointLabel> labels_;
  std::uint64_t hash_ = 0;
};

}  // namespace sphcnn
