#include "stobnts/domain.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace stobnts {

namespace {

void check_bounds(const Vector& lower, const Vector& upper) {
  if (lower.size() == 0) throw std::invalid_argument("domain: dimension must be >= 1");
  if (lower.size() != upper.size()) throw std::invalid_argument("domain: bound size mismatch");
  if (!lower.allFinite() || !upper.allFinite()) {
    throw std::invalid_argument("domain: bounds must be finite");
  }
  for (Eigen::Index j = 0; j < lower.size(); ++j) {
    if (lower[j] > upper[j]) {
      throw std::invalid_argument("domain: lower bound exceeds upper bound in dimension " +
                                  std::to_string(j));
    }
  }
}

}  // namespace

Domain Domain::discrete(Matrix points, std::optional<Vector> lower, std::optional<Vector> upper) {
  if (points.cols() == 0) throw std::invalid_argument("domain: discrete domain has no points");
  if (!points.allFinite()) throw std::invalid_argument("domain: non-finite point");
  Domain dom;
  dom.kind_ = DomainKind::discrete;
  dom.lower_ = lower ? *lower : Vector(points.rowwise().minCoeff());
  dom.upper_ = upper ? *upper : Vector(points.rowwise().maxCoeff());
  check_bounds(dom.lower_, dom.upper_);
  if (points.rows() != dom.lower_.size()) throw std::invalid_argument("domain: point dimension");
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    if (!dom.contains(points.col(j), 1e-9)) {
      throw std::invalid_argument("domain: point " + std::to_string(j) + " lies outside the bounds");
    }
  }
  dom.points_ = std::move(points);
  return dom;
}

Domain Domain::box(Vector lower, Vector upper) {
  check_bounds(lower, upper);
  Domain dom;
  dom.kind_ = DomainKind::box;
  dom.lower_ = std::move(lower);
  dom.upper_ = std::move(upper);
  dom.points_.resize(dom.lower_.size(), 0);
  return dom;
}

Matrix Domain::unit_coordinates(const Matrix& raw) const {
  if (raw.rows() != dim()) throw std::invalid_argument("domain: input dimension mismatch");
  Matrix unit(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.rows(); ++j) {
    const double span = upper_[j] - lower_[j];
    if (span > 0.0) {
      unit.row(j) = (raw.row(j).array() - lower_[j]) / span;
    } else {
      unit.row(j).setZero();
    }
  }
  return unit;
}

Matrix Domain::normalize(const Matrix& raw) const {
  const Matrix unit = unit_coordinates(raw);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim() + 1));
  Matrix z(dim() + 1, raw.cols());
  z.topRows(dim()) = (2.0 * unit.array() - 1.0) * scale;
  z.row(dim()).setConstant(scale);
  return z;
}

bool Domain::contains(const Vector& raw, double tol) const {
  if (raw.size() != dim()) return false;
  for (Eigen::Index j = 0; j < raw.size(); ++j) {
    const double slack = tol * std::max(1.0, upper_[j] - lower_[j]);
    if (raw[j] < lower_[j] - slack || raw[j] > upper_[j] + slack) return false;
  }
  return true;
}

Vector Domain::project(const Vector& raw) const { return raw.cwiseMax(lower_).cwiseMin(upper_); }

namespace {

Matrix product_grid(const std::vector<Vector>& axes) {
  Eigen::Index n = 1;
  for (const Vector& a : axes) n *= a.size();
  const auto d = static_cast<Eigen::Index>(axes.size());
  Matrix points(d, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index rem = k;
    // first dimension varies slowest
    for (Eigen::Index j = d - 1; j >= 0; --j) {
      const Vector& axis = axes[static_cast<std::size_t>(j)];
      points(j, k) = axis[rem % axis.size()];
      rem /= axis.size();
    }
  }
  return points;
}

}  // namespace

Domain uniform_grid(const Vector& lower, const Vector& upper, int per_dim) {
  check_bounds(lower, upper);
  if (per_dim < 2) throw std::invalid_argument("grid: need at least 2 points per dimension");
  std::vector<Vector> axes;
  for (Eigen::Index j = 0; j < lower.size(); ++j) {
    axes.push_back(Vector::LinSpaced(per_dim, lower[j], upper[j]));
  }
  return Domain::discrete(product_grid(axes), lower, upper);
}

Domain discretize_domain(const Vector& lower, const Vector& upper, int horizon,
                         Eigen::Index max_points) {
  check_bounds(lower, upper);
  if (horizon < 1) throw std::invalid_argument("discretize: horizon must be >= 1");
  const double spacing = 1.0 / std::sqrt(static_cast<double>(horizon));
  const Eigen::Index d = lower.size();
  std::vector<Eigen::Index> counts(d);
  double total = 1.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double steps = (upper[j] - lower[j]) / spacing;
    counts[j] = static_cast<Eigen::Index>(std::ceil(steps - 1e-9)) + 1;
    total *= static_cast<double>(counts[j]);
  }
  if (total > static_cast<double>(max_points)) {
    throw std::invalid_argument("discretize: grid would have " + std::to_string(total) +
                                " points, above the cap of " + std::to_string(max_points));
  }
  std::vector<Vector> axes;
  for (Eigen::Index j = 0; j < d; ++j) {
    Vector axis(counts[j]);
    for (Eigen::Index k = 0; k < counts[j]; ++k) {
      axis[k] = std::min(lower[j] + static_cast<double>(k) * spacing, upper[j]);
    }
    axes.push_back(std::move(axis));
  }
  Matrix points = product_grid(axes);
  return Domain::discrete(std::move(points), lower, upper);
}

}  // namespace stobnts
