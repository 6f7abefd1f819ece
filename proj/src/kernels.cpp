#include "mftdn/kernels.hpp"

#include <cstdio>

namespace mftdn {

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::radial: return "radial";
    case KernelFamily::bernoulli: return "bernoulli";
    case KernelFamily::polynomial: return "polynomial";
    case KernelFamily::periodic: return "periodic";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "radial") return KernelFamily::radial;
  if (name == "bernoulli") return KernelFamily::bernoulli;
  if (name == "polynomial") return KernelFamily::polynomial;
  if (name == "periodic") return KernelFamily::periodic;
  throw std::invalid_argument("unknown kernel family '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
  if (family == KernelFamily::periodic && !(period > 0.0 && std::isfinite(period))) {
    throw std::invalid_argument("periodic kernel requires a positive period");
  }
}

std::string KernelSpec::label() const {
  if (family != KernelFamily::periodic) return to_string(family);
  char buf[64];
  std::snprintf(buf, sizeof buf, "periodic(p=%.6g)", period);
  return buf;
}

Matrix gram(const KernelSpec& spec, std::span<const double> anchors) {
  const auto m = static_cast<Index>(anchors.size());
  Matrix g(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j <= i; ++j) {
      g(i, j) = kernel_eval(spec, anchors[i], anchors[j]);
      g(j, i) = g(i, j);
    }
  }
  return g;
}

Matrix cross_gram(const KernelSpec& spec, std::span<const double> points,
                  std::span<const double> anchors) {
  Matrix g(static_cast<Index>(points.size()), static_cast<Index>(anchors.size()));
  for (Index i = 0; i < g.rows(); ++i) {
    for (Index j = 0; j < g.cols(); ++j) g(i, j) = kernel_eval(spec, points[i], anchors[j]);
  }
  return g;
}

Vector kernel_row(const KernelSpec& spec, double t, std::span<const double> anchors) {
  Vector row(static_cast<Index>(anchors.size()));
  for (Index h = 0; h < row.size(); ++h) row(h) = kernel_eval(spec, t, anchors[h]);
  return row;
}

double rkhs_norm_sq(const Eigen::Ref<const Vector>& theta, const Matrix& gram) {
  if (theta.size() != gram.rows() || gram.rows() != gram.cols()) {
    throw std::invalid_argument("rkhs_norm_sq: coefficient length does not match Gram size");
  }
  const double q = theta.dot(gram * theta);
  return q > 0.0 ? q : 0.0;
}

}  // namespace mftdn
