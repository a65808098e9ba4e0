#include "stobnts/tangent_kernel.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "stobnts/number_format.hpp"

namespace stobnts {

std::string to_string(KernelTag tag) {
  switch (tag) {
    case KernelTag::empirical_ntk:
      return "empirical-ntk";
    case KernelTag::squared_exponential:
      return "se";
    case KernelTag::rff_approx:
      return "rff-approx";
    case KernelTag::reference:
      return "reference";
  }
  return "unknown";
}

KernelTag parse_kernel_tag(const std::string& name) {
  for (KernelTag tag : {KernelTag::empirical_ntk, KernelTag::squared_exponential,
                        KernelTag::rff_approx, KernelTag::reference}) {
    if (to_string(tag) == name) return tag;
  }
  throw std::invalid_argument("unknown kernel tag '" + name + "'");
}

bool GramMatrix::satisfies_invariants() const {
  if (values.rows() != values.cols()) return false;
  if (values.size() == 0) return true;
  if ((values - values.transpose()).cwiseAbs().maxCoeff() > 1e-12) return false;
  const double trace = values.trace();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(values, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() >= -1e-8 * std::abs(trace);
}

FeatureMatrix tangent_features(const NetworkSpec& spec, const ParamVector& theta0,
                               const Matrix& inputs, std::optional<std::uint64_t> theta0_seed) {
  FeatureMatrix features{Matrix(0, spec.param_count()), spec, theta0_seed};
  if (inputs.cols() == 0) {
    if (inputs.rows() != spec.input_dim && inputs.rows() != 0) {
      throw std::invalid_argument("input dimension does not match network input_dim");
    }
    return features;
  }
  if (inputs.rows() != spec.input_dim) {
    throw std::invalid_argument("input dimension does not match network input_dim");
  }
  features.values.resize(inputs.cols(), spec.param_count());
  for (Eigen::Index i = 0; i < inputs.cols(); ++i) {
    features.values.row(i) = param_gradient(spec, theta0, inputs.col(i)).transpose();
  }
  return features;
}

GramMatrix empirical_ntk(const FeatureMatrix& features) {
  Matrix k = features.values * features.values.transpose();
  return {0.5 * (k + k.transpose()), KernelTag::empirical_ntk};
}

GramMatrix empirical_ntk(const NetworkSpec& spec, const ParamVector& theta0,
                         const Matrix& inputs) {
  if (inputs.cols() == 0) return {Matrix(0, 0), KernelTag::empirical_ntk};
  return {TangentBatch(spec, theta0, inputs).gram(), KernelTag::empirical_ntk};
}

GramMatrix reference_kernel(const NetworkSpec& spec_template, int wide_width,
                            const Matrix& inputs, std::span<const std::uint64_t> seeds,
                            const ReferenceKernelOptions& options) {
  if (seeds.size() < options.min_seeds || seeds.empty()) {
    throw std::invalid_argument("reference kernel needs at least " +
                                std::to_string(std::max<std::size_t>(options.min_seeds, 1)) +
                                " seeds, got " + std::to_string(seeds.size()));
  }
  if (wide_width < options.min_width_factor * spec_template.width) {
    throw std::invalid_argument("reference width " + std::to_string(wide_width) +
                                " is below " + std::to_string(options.min_width_factor) +
                                "x the operational width");
  }
  const NetworkSpec wide = spec_template.with_width(wide_width);
  Matrix sum = Matrix::Zero(inputs.cols(), inputs.cols());
  for (std::uint64_t seed : seeds) {
    sum += empirical_ntk(wide, init_params(wide, seed), inputs).values;
  }
  return {sum / static_cast<double>(seeds.size()), KernelTag::reference};
}

Matrix empirical_ntk_seed_spread(const NetworkSpec& spec, const Matrix& inputs,
                                 std::span<const std::uint64_t> seeds) {
  if (seeds.size() < 2) throw std::invalid_argument("seed spread needs at least 2 seeds");
  const Eigen::Index n = inputs.cols();
  Matrix mean = Matrix::Zero(n, n);
  Matrix sq = Matrix::Zero(n, n);
  for (std::uint64_t seed : seeds) {
    const Matrix k = empirical_ntk(spec, init_params(spec, seed), inputs).values;
    mean += k;
    sq += k.cwiseProduct(k);
  }
  const double count = static_cast<double>(seeds.size());
  mean /= count;
  const Matrix var = (sq / count - mean.cwiseProduct(mean)) * (count / (count - 1.0));
  return var.cwiseMax(0.0).cwiseSqrt();
}

void write_gram_csv(std::ostream& out, const GramMatrix& gram) {
  out << "# kernel=" << to_string(gram.tag) << " n=" << gram.size() << '\n';
  for (Eigen::Index i = 0; i < gram.size(); ++i) {
    for (Eigen::Index j = 0; j < gram.size(); ++j) {
      if (j > 0) out << ',';
      out << format_double(gram.values(i, j));
    }
    out << '\n';
  }
}

GramMatrix read_gram_csv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("# kernel=", 0) != 0) {
    throw std::runtime_error("gram csv: missing '# kernel=' header");
  }
  std::istringstream hs(header.substr(9));
  std::string tag_name;
  std::string size_field;
  hs >> tag_name >> size_field;
  if (size_field.rfind("n=", 0) != 0) throw std::runtime_error("gram csv: missing n=");
  const long n = std::stol(size_field.substr(2));
  if (n < 0) throw std::runtime_error("gram csv: negative size");
  GramMatrix gram{Matrix(n, n), parse_kernel_tag(tag_name)};
  std::string line;
  for (long i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw std::runtime_error("gram csv: truncated");
    std::istringstream row(line);
    std::string cell;
    for (long j = 0; j < n; ++j) {
      if (!std::getline(row, cell, ',')) throw std::runtime_error("gram csv: short row");
      gram.values(i, j) = parse_double(cell);
    }
  }
  return gram;
}

}  // namespace stobnts
