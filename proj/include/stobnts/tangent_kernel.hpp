#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stobnts/surrogate_net.hpp"

namespace stobnts {

/// Neural tangent features: row i is param_gradient(spec, theta0, x_i).
struct FeatureMatrix {
  Matrix values;  // n x p
  NetworkSpec spec;
  std::optional<std::uint64_t> theta0_seed;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

enum class KernelTag { empirical_ntk, squared_exponential, rff_approx, reference };

std::string to_string(KernelTag tag);
KernelTag parse_kernel_tag(const std::string& name);

struct GramMatrix {
  Matrix values;
  KernelTag tag = KernelTag::empirical_ntk;

  Eigen::Index size() const { return values.rows(); }

  /// Symmetric to 1e-12 absolute and eigenvalues >= -1e-8 * trace.
  bool satisfies_invariants() const;
};

FeatureMatrix tangent_features(const NetworkSpec& spec, const ParamVector& theta0,
                               const Matrix& inputs,
                               std::optional<std::uint64_t> theta0_seed = std::nullopt);

GramMatrix empirical_ntk(const FeatureMatrix& features);

/// Empirical NTK computed without holding the n x p feature matrix.
GramMatrix empirical_ntk(const NetworkSpec& spec, const ParamVector& theta0, const Matrix& inputs);

struct ReferenceKernelOptions {
  std::size_t min_seeds = 4;
  int min_width_factor = 4;
};

/// Seed-averaged empirical NTK of `spec_template` widened to `wide_width`.
GramMatrix reference_kernel(const NetworkSpec& spec_template, int wide_width, const Matrix& inputs,
                            std::span<const std::uint64_t> seeds,
                            const ReferenceKernelOptions& options = {});

/// Entrywise standard deviation across seeds of the empirical NTK at width m.
Matrix empirical_ntk_seed_spread(const NetworkSpec& spec, const Matrix& inputs,
                                 std::span<const std::uint64_t> seeds);

// CSV dump: first line "# kernel=<tag> n=<n>", then n rows of n values.
void write_gram_csv(std::ostream& out, const GramMatrix& gram);
GramMatrix read_gram_csv(std::istream& in);

}  // namespace stobnts
