#pragma once

#include "mftdn/kernels.hpp"
#include "mftdn/network.hpp"
#include "mftdn/types.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mftdn {

// K x d x d x m coefficient array, stored flat in row-major (s, k, l, h) order.
class CoefficientArray {
 public:
  using LayerView = Eigen::Map<RowMatrix>;
  using ConstLayerView = Eigen::Map<const RowMatrix>;

  CoefficientArray() = default;
  CoefficientArray(Index layers, Index dim, Index anchors)
      : layers_(layers), dim_(dim), anchors_(anchors),
        values_(Vector::Zero(layers * dim * dim * anchors)) {}

  Index layers() const { return layers_; }
  Index dim() const { return dim_; }
  Index anchors() const { return anchors_; }
  Index size() const { return values_.size(); }

  Index offset(Index s, Index k, Index l) const { return ((s * dim_ + k) * dim_ + l) * anchors_; }
  double& operator()(Index s, Index k, Index l, Index h) { return values_(offset(s, k, l) + h); }
  double operator()(Index s, Index k, Index l, Index h) const { return values_(offset(s, k, l) + h); }

  // Coefficients of R_{s,k,l}(.) over the anchors.
  auto slice(Index s, Index k, Index l) { return values_.segment(offset(s, k, l), anchors_); }
  auto slice(Index s, Index k, Index l) const { return values_.segment(offset(s, k, l), anchors_); }

  // (d*d) x m view of one layer; row k*d + l holds slice(s, k, l).
  LayerView layer(Index s) {
    return {values_.data() + offset(s, 0, 0), dim_ * dim_, anchors_};
  }
  ConstLayerView layer(Index s) const {
    return {values_.data() + offset(s, 0, 0), dim_ * dim_, anchors_};
  }

  Vector& values() { return values_; }
  const Vector& values() const { return values_; }

 private:
  Index layers_ = 0;
  Index dim_ = 0;
  Index anchors_ = 0;
  Vector values_;
};

// Factors X, Y (n x d) and representer coefficients theta defining
// R_{s,k,l}(t) = sum_h theta_{s,k,l,h} K(t, h) and logits X R_s(t) Y'.
struct ModelParams {
  Matrix X;
  Matrix Y;
  CoefficientArray theta;
  std::vector<double> anchors;
  KernelSpec kernel;

  Index n() const { return X.rows(); }
  Index dim() const { return X.cols(); }
  Index layers() const { return theta.layers(); }
  Index num_anchors() const { return static_cast<Index>(anchors.size()); }

  void validate() const;
  Matrix gram_matrix() const { return gram(kernel, anchors); }
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double log1p_exp(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Per-entry Bernoulli negative log-likelihood log(1 + exp(p)) - a p.
inline double bernoulli_nll(double a, double logit) { return log1p_exp(logit) - a * logit; }

// R_s evaluated from a precomputed kernel vector (K(t, h))_h.
Matrix core_from_kernel_row(const ModelParams& params, Index s,
                            const Eigen::Ref<const Vector>& kernel_row);

Matrix eval_R(const ModelParams& params, Index s, double t);
Matrix eval_logits(const ModelParams& params, Index s, double t);
Matrix eval_probs(const ModelParams& params, Index s, double t);

// Bernoulli negative log-likelihood summed over observed entries.
double neg_log_likelihood(const ModelParams& params, const ObservationSet& data);

// sum_{s,k,l} |X_:k| |Y_:l| |R_{s,k,l}|_H
double sigma(const ModelParams& params);
double sigma(const ModelParams& params, const Matrix& gram);

// Throws DataError unless data and parameters agree on n and layer count.
void check_compatible(const ModelParams& params, const ObservationSet& data);

}  // namespace mftdn
