#include "stobnts/objective.hpp"

#include <cmath>

#include "stobnts/gp.hpp"
#include "stobnts/number_format.hpp"

namespace stobnts {

std::string describe_point(const Vector& x) {
  std::string out = "(";
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (j > 0) out += ", ";
    out += format_double(x[j]);
  }
  return out + ")";
}

SyntheticGpObjective::SyntheticGpObjective(Domain grid, double lengthscale, std::uint64_t seed)
    : grid_(std::move(grid)) {
  if (grid_.kind() != DomainKind::discrete) {
    throw std::invalid_argument("synthetic objective needs a discrete grid");
  }
  const Matrix unit = grid_.unit_coordinates(grid_.points());
  GramMatrix gram{se_gram(unit, unit, lengthscale), KernelTag::squared_exponential};
  values_ = sample_gp_prior(gram, seed);
  values_.maxCoeff(&argmax_);  // first maximal index
}

SyntheticGpObjective SyntheticGpObjective::unit_interval(int points, double lengthscale,
                                                         std::uint64_t seed) {
  if (points < 2) throw std::invalid_argument("synthetic objective needs at least 2 grid points");
  Matrix grid = Eigen::RowVectorXd::LinSpaced(points, 0.0, 1.0);
  return SyntheticGpObjective(Domain::discrete(grid), lengthscale, seed);
}

Eigen::Index SyntheticGpObjective::locate(const Vector& x,
                                          std::optional<Eigen::Index> domain_index) const {
  if (domain_index) {
    if (*domain_index < 0 || *domain_index >= grid_.cardinality()) {
      throw ObjectiveError("grid index out of range at " + describe_point(x));
    }
    return *domain_index;
  }
  if (x.size() != grid_.dim()) {
    throw ObjectiveError("input " + describe_point(x) + " has the wrong dimension");
  }
  Eigen::Index best = 0;
  (grid_.points().colwise() - x).colwise().squaredNorm().minCoeff(&best);
  if ((grid_.point(best) - x).norm() > 1e-9 * (1.0 + x.norm())) {
    throw ObjectiveError("input " + describe_point(x) + " is not a grid point");
  }
  return best;
}

double SyntheticGpObjective::observe(const Vector& x, std::optional<Eigen::Index> domain_index) {
  return values_[locate(x, domain_index)];
}

std::optional<double> SyntheticGpObjective::truth(const Vector& x,
                                                  std::optional<Eigen::Index> domain_index) const {
  return values_[locate(x, domain_index)];
}

FunctionObjective::FunctionObjective(Function f, std::optional<double> optimum, bool known_truth,
                                     bool inject_noise)
    : f_(std::move(f)), optimum_(optimum), known_truth_(known_truth), inject_noise_(inject_noise) {}

double FunctionObjective::observe(const Vector& x, std::optional<Eigen::Index>) {
  const double y = f_(x);
  if (!std::isfinite(y)) throw ObjectiveError("objective returned a non-finite value at " +
                                              describe_point(x));
  return y;
}

std::optional<double> FunctionObjective::truth(const Vector& x,
                                               std::optional<Eigen::Index>) const {
  if (!known_truth_) return std::nullopt;
  return f_(x);
}

}  // namespace stobnts
