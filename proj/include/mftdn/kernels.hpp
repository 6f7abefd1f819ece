#pragma once

#include "mftdn/types.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>

namespace mftdn {

enum class KernelFamily { radial, bernoulli, polynomial, periodic };

std::string to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

// Reproducing kernel on [0,1] x [0,1]. `period` is only read by the periodic
// family and is expressed in normalized time units.
struct KernelSpec {
  KernelFamily family = KernelFamily::periodic;
  double period = 1.0;

  static KernelSpec radial() { return {KernelFamily::radial, 1.0}; }
  static KernelSpec bernoulli() { return {KernelFamily::bernoulli, 1.0}; }
  static KernelSpec polynomial() { return {KernelFamily::polynomial, 1.0}; }
  static KernelSpec periodic(double period) { return {KernelFamily::periodic, period}; }

  void validate() const;
  std::string label() const;

  bool operator==(const KernelSpec&) const = default;
};

namespace detail {

template <typename Scalar>
Scalar bernoulli_k1(Scalar x) {
  return x - Scalar(0.5);
}

template <typename Scalar>
Scalar bernoulli_k2(Scalar x) {
  const Scalar k1 = bernoulli_k1(x);
  return (k1 * k1 - Scalar(1) / Scalar(12)) / Scalar(2);
}

template <typename Scalar>
Scalar bernoulli_k4(Scalar x) {
  const Scalar k1sq = bernoulli_k1(x) * bernoulli_k1(x);
  return (k1sq * k1sq - k1sq / Scalar(2) + Scalar(7) / Scalar(240)) / Scalar(24);
}

}  // namespace detail

template <typename Scalar>
Scalar kernel_eval(const KernelSpec& spec, Scalar x, Scalar y) {
  using std::abs;
  using std::exp;
  using std::pow;
  using std::sin;
  switch (spec.family) {
    case KernelFamily::radial:
      return exp(-abs(x - y));
    case KernelFamily::bernoulli:
      return Scalar(1) + detail::bernoulli_k1(x) * detail::bernoulli_k1(y) +
             detail::bernoulli_k2(x) * detail::bernoulli_k2(y) - detail::bernoulli_k4(abs(x - y));
    case KernelFamily::polynomial: {
      const Scalar base = Scalar(0.5) * x * y + Scalar(1);
      return base * base * base;
    }
    case KernelFamily::periodic: {
      const Scalar s = sin(Scalar(std::numbers::pi) * abs(x - y) / Scalar(spec.period));
      return exp(-s * s);
    }
  }
  return Scalar(0);
}

// m x m matrix of kernel values over the anchor grid.
Matrix gram(const KernelSpec& spec, std::span<const double> anchors);

// rows indexed by `points`, columns by `anchors`.
Matrix cross_gram(const KernelSpec& spec, std::span<const double> points,
                  std::span<const double> anchors);

// Kernel vector (K(t, h_1), ..., K(t, h_m)).
Vector kernel_row(const KernelSpec& spec, double t, std::span<const double> anchors);

// Squared RKHS norm theta' G theta of a representer-form function, clamped at 0.
double rkhs_norm_sq(const Eigen::Ref<const Vector>& theta, const Matrix& gram);

}  // namespace mftdn
