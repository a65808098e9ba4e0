#pragma once

#include <cstdint>
#include <optional>

#include "stobnts/surrogate_net.hpp"

namespace stobnts {

enum class DomainKind { discrete, box };

/// Search space in user coordinates, with the map into network inputs.
///
/// The normalizer sends the bounding box to u in [-1, 1]^d and appends a
/// constant coordinate: z = (u, 1) / sqrt(d + 1), so ||z|| <= 1. The extra
/// coordinate lets bias-free networks represent offsets, which is why the
/// network input dimension is d + 1.
class Domain {
 public:
  /// Explicit point list (one point per column). Bounds default to the
  /// points' bounding box.
  static Domain discrete(Matrix points, std::optional<Vector> lower = std::nullopt,
                         std::optional<Vector> upper = std::nullopt);
  static Domain box(Vector lower, Vector upper);

  DomainKind kind() const { return kind_; }
  int dim() const { return static_cast<int>(lower_.size()); }
  int network_input_dim() const { return dim() + 1; }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }

  /// Number of points for discrete domains; 0 for boxes.
  Eigen::Index cardinality() const { return points_.cols(); }
  const Matrix& points() const { return points_; }
  Vector point(Eigen::Index index) const { return points_.col(index); }

  /// Coordinates rescaled to [0, 1]^d (degenerate dimensions map to 0).
  Matrix unit_coordinates(const Matrix& raw) const;
  /// Network inputs, one column per raw point.
  Matrix normalize(const Matrix& raw) const;
  Vector normalize_point(const Vector& raw) const { return normalize(raw).col(0); }

  bool contains(const Vector& raw, double tol = 1e-12) const;
  /// Clips a point into the box.
  Vector project(const Vector& raw) const;

 private:
  Domain() = default;

  DomainKind kind_ = DomainKind::box;
  Vector lower_;
  Vector upper_;
  Matrix points_;
};

/// Product grid with `per_dim` evenly spaced values per axis, bounds included.
Domain uniform_grid(const Vector& lower, const Vector& upper, int per_dim);

/// Regular grid with spacing 1/sqrt(T) in every dimension, starting at the
/// lower bound; the last point of each axis is clipped to the upper bound.
/// Throws if the grid would exceed max_points.
Domain discretize_domain(const Vector& lower, const Vector& upper, int horizon,
                         Eigen::Index max_points = 1000000);

}  // namespace stobnts
