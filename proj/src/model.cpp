#include "mftdn/model.hpp"

#include <string>

namespace mftdn {

void ModelParams::validate() const {
  const Index d = dim();
  if (d < 1) throw DataError("model dimension must be at least 1");
  if (Y.rows() != X.rows() || Y.cols() != d) throw DataError("X and Y must have the same shape");
  if (theta.dim() != d || theta.anchors() != num_anchors() || theta.layers() < 1) {
    throw DataError("theta shape does not match (K, d, d, m)");
  }
  if (!X.allFinite() || !Y.allFinite() || !theta.values().allFinite()) {
    throw DataError("model parameters must be finite");
  }
  kernel.validate();
}

void check_compatible(const ModelParams& params, const ObservationSet& data) {
  if (params.n() != data.n) {
    throw DataError("model has n = " + std::to_string(params.n()) + " but data has n = " +
                    std::to_string(data.n));
  }
  if (params.layers() != data.layers) {
    throw DataError("model has K = " + std::to_string(params.layers()) +
                    " layers but data has K = " + std::to_string(data.layers));
  }
}

Matrix core_from_kernel_row(const ModelParams& params, Index s,
                            const Eigen::Ref<const Vector>& kernel_row) {
  const Index d = params.dim();
  const Vector flat = params.theta.layer(s) * kernel_row;
  // flat is ordered k*d + l, i.e. a row-major d x d matrix.
  return Eigen::Map<const RowMatrix>(flat.data(), d, d);
}

Matrix eval_R(const ModelParams& params, Index s, double t) {
  return core_from_kernel_row(params, s, kernel_row(params.kernel, t, params.anchors));
}

Matrix eval_logits(const ModelParams& params, Index s, double t) {
  return params.X * eval_R(params, s, t) * params.Y.transpose();
}

Matrix eval_probs(const ModelParams& params, Index s, double t) {
  return eval_logits(params, s, t).unaryExpr([](double x) { return sigmoid(x); });
}

double neg_log_likelihood(const ModelParams& params, const ObservationSet& data) {
  check_compatible(params, data);
  const Matrix cross = cross_gram(params.kernel, data.times, params.anchors);
  const Index m = data.num_times();
  double total = 0.0;
  if (data.is_sparse()) {
    std::vector<Matrix> cores;
    for (Index s = 0; s < data.layers; ++s) {
      for (Index t = 0; t < m; ++t) cores.push_back(core_from_kernel_row(params, s, cross.row(t).transpose()));
    }
    for (const auto& [key, obs] : data.unaligned) {
      if (data.exclude_diagonal && key.src == key.dst) continue;
      for (const auto& [t, a] : obs) {
        const double logit =
            params.X.row(key.src) * cores[static_cast<std::size_t>(key.layer * m + t)] *
            params.Y.row(key.dst).transpose();
        total += bernoulli_nll(a, logit);
      }
    }
    return total;
  }
  for (Index s = 0; s < data.layers; ++s) {
    for (Index t = 0; t < m; ++t) {
      const Matrix logits = params.X * core_from_kernel_row(params, s, cross.row(t).transpose()) *
                            params.Y.transpose();
      const Matrix& a = data.snapshot(s, t);
      for (Index i = 0; i < data.n; ++i) {
        for (Index j = 0; j < data.n; ++j) {
          if (data.observed(s, t, i, j)) total += bernoulli_nll(a(i, j), logits(i, j));
        }
      }
    }
  }
  return total;
}

double sigma(const ModelParams& params) { return sigma(params, params.gram_matrix()); }

double sigma(const ModelParams& params, const Matrix& gram) {
  const Index d = params.dim();
  const Vector x_norms = params.X.colwise().norm().transpose();
  const Vector y_norms = params.Y.colwise().norm().transpose();
  double total = 0.0;
  for (Index s = 0; s < params.layers(); ++s) {
    for (Index k = 0; k < d; ++k) {
      for (Index l = 0; l < d; ++l) {
        total += x_norms(k) * y_norms(l) * std::sqrt(rkhs_norm_sq(params.theta.slice(s, k, l), gram));
      }
    }
  }
  return total;
}

}  // namespace mftdn
