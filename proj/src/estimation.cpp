#include "mftdn/estimation.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <random>

namespace mftdn {

namespace {

// 0/1 weights of the entries of block (s, t) that enter the loss, or an empty
// array when every entry does.
Eigen::ArrayXXd observed_weights(const ObservationSet& data, Index s, Index t) {
  if (!data.has_mask() && !data.exclude_diagonal) return {};
  Eigen::ArrayXXd w = data.has_mask()
                          ? Eigen::ArrayXXd(data.mask[static_cast<std::size_t>(data.block(s, t))].cast<double>().array())
                          : Eigen::ArrayXXd::Ones(data.n, data.n);
  if (data.exclude_diagonal) w.matrix().diagonal().setZero();
  return w;
}

// Loss of one dense block; also writes sigmoid(logits) - A into `residual`.
// Unobserved entries contribute exactly zero to both.
double block_terms(const ObservationSet& data, Index s, Index t, const Matrix& logits,
                   Matrix* residual) {
  const auto l = logits.array();
  const auto a = data.snapshot(s, t).array();
  const Eigen::ArrayXXd e = (-l.abs()).exp();
  const Eigen::ArrayXXd nll = l.max(0.0) + e.log1p() - a * l;
  const Eigen::ArrayXXd w = observed_weights(data, s, t);
  if (residual) {
    const Eigen::ArrayXXd prob = (l >= 0.0).select((1.0 + e).inverse(), e / (1.0 + e));
    if (w.size() == 0) {
      residual->array() = prob - a;
    } else {
      residual->array() = (w > 0.0).select(prob - a, 0.0);
    }
  }
  if (w.size() == 0) return nll.sum();
  return (w > 0.0).select(nll, 0.0).sum();
}

// Loss and gradients over the observed entries. The factor gradients are only
// formed when `with_factors` is set; the theta gradient is always formed.
double evaluate(const ModelParams& p, const ObservationSet& data, const Matrix& cross,
                Gradient& g, bool with_factors) {
  const Index n = data.n;
  const Index d = p.dim();
  const Index m = data.num_times();
  if (with_factors) {
    g.X = Matrix::Zero(n, d);
    g.Y = Matrix::Zero(n, d);
  }
  g.theta = CoefficientArray(p.layers(), d, p.num_anchors());

  double total = 0.0;
  // d x d gradients with respect to R_s(t), one column (row-major vec) per time.
  Matrix core_grad(d * d, m);

  if (data.is_sparse()) {
    std::vector<Matrix> cores;
    std::vector<Matrix> core_grads(static_cast<std::size_t>(data.layers * m), Matrix::Zero(d, d));
    for (Index s = 0; s < data.layers; ++s) {
      for (Index t = 0; t < m; ++t) cores.push_back(core_from_kernel_row(p, s, cross.row(t).transpose()));
    }
    for (const auto& [key, obs] : data.unaligned) {
      if (data.exclude_diagonal && key.src == key.dst) continue;
      const auto x = p.X.row(key.src);
      const auto y = p.Y.row(key.dst);
      for (const auto& [t, a] : obs) {
        const auto b = static_cast<std::size_t>(key.layer * m + t);
        const Matrix& r = cores[b];
        const double logit = x * r * y.transpose();
        total += bernoulli_nll(a, logit);
        const double e = sigmoid(logit) - a;
        if (with_factors) {
          g.X.row(key.src) += e * (r * y.transpose()).transpose();
          g.Y.row(key.dst) += e * (x * r);
        }
        core_grads[b] += e * x.transpose() * y;
      }
    }
    for (Index s = 0; s < data.layers; ++s) {
      for (Index t = 0; t < m; ++t) {
        core_grad.col(t) = Eigen::Map<const Vector>(
            RowMatrix(core_grads[static_cast<std::size_t>(s * m + t)]).data(), d * d);
      }
      g.theta.layer(s) = core_grad * cross;
    }
    return total;
  }

  Matrix residual(n, n);
  for (Index s = 0; s < data.layers; ++s) {
    for (Index t = 0; t < m; ++t) {
      const Matrix r = core_from_kernel_row(p, s, cross.row(t).transpose());
      const Matrix xr = p.X * r;
      const Matrix logits = xr * p.Y.transpose();
      total += block_terms(data, s, t, logits, &residual);
      if (with_factors) {
        g.X.noalias() += residual * (p.Y * r.transpose());
        g.Y.noalias() += residual.transpose() * xr;
      }
      const RowMatrix gr = (p.X.transpose() * residual) * p.Y;
      core_grad.col(t) = Eigen::Map<const Vector>(gr.data(), d * d);
    }
    g.theta.layer(s) = core_grad * cross;
  }
  return total;
}

double loss_only(const ModelParams& p, const ObservationSet& data, const Matrix& cross) {
  const Index m = data.num_times();
  double total = 0.0;
  if (data.is_sparse()) {
    std::vector<Matrix> cores;
    for (Index s = 0; s < data.layers; ++s) {
      for (Index t = 0; t < m; ++t) cores.push_back(core_from_kernel_row(p, s, cross.row(t).transpose()));
    }
    for (const auto& [key, obs] : data.unaligned) {
      if (data.exclude_diagonal && key.src == key.dst) continue;
      for (const auto& [t, a] : obs) {
        const double logit = p.X.row(key.src) * cores[static_cast<std::size_t>(key.layer * m + t)] *
                             p.Y.row(key.dst).transpose();
        total += bernoulli_nll(a, logit);
      }
    }
    return total;
  }
  for (Index s = 0; s < data.layers; ++s) {
    for (Index t = 0; t < m; ++t) {
      const Matrix r = core_from_kernel_row(p, s, cross.row(t).transpose());
      total += block_terms(data, s, t, p.X * r * p.Y.transpose(), nullptr);
    }
  }
  return total;
}

// Curvature of the loss in vec(R_s(t)) for every block (s, t): the d^2 x d^2
// matrix sum_ij w_ij (x_i (x) y_j)(x_i (x) y_j)' with w = p (1 - p) over the
// observed entries, indexed in the row-major (k, l) order of CoefficientArray.
std::vector<Matrix> core_curvature(const ModelParams& p, const ObservationSet& data,
                                   const Matrix& cross) {
  const Index n = data.n;
  const Index d = p.dim();
  const Index dd = d * d;
  const Index m = data.num_times();
  std::vector<Matrix> out(static_cast<std::size_t>(data.layers * m), Matrix::Zero(dd, dd));
  if (data.is_sparse()) {
    std::vector<Matrix> cores;
    for (Index s = 0; s < data.layers; ++s) {
      for (Index t = 0; t < m; ++t) cores.push_back(core_from_kernel_row(p, s, cross.row(t).transpose()));
    }
    Vector phi(dd);
    for (const auto& [key, obs] : data.unaligned) {
      if (data.exclude_diagonal && key.src == key.dst) continue;
      for (Index k = 0; k < d; ++k) {
        for (Index l = 0; l < d; ++l) phi(k * d + l) = p.X(key.src, k) * p.Y(key.dst, l);
      }
      for (const auto& [t, a] : obs) {
        const auto b = static_cast<std::size_t>(key.layer * m + t);
        const double prob = sigmoid(p.X.row(key.src) * cores[b] * p.Y.row(key.dst).transpose());
        out[b].noalias() += prob * (1.0 - prob) * phi * phi.transpose();
      }
    }
    return out;
  }
  // Column products x_ik x_ik' and y_jl y_jl'.
  Matrix px(n, dd);
  Matrix py(n, dd);
  for (Index k = 0; k < d; ++k) {
    for (Index k2 = 0; k2 < d; ++k2) {
      px.col(k * d + k2) = p.X.col(k).cwiseProduct(p.X.col(k2));
      py.col(k * d + k2) = p.Y.col(k).cwiseProduct(p.Y.col(k2));
    }
  }
  for (Index s = 0; s < data.layers; ++s) {
    for (Index t = 0; t < m; ++t) {
      const Matrix r = core_from_kernel_row(p, s, cross.row(t).transpose());
      // p (1 - p) = e / (1 + e)^2 with e = exp(-|logit|)
      const Eigen::ArrayXXd e = (-(p.X * r * p.Y.transpose()).array().abs()).exp();
      Eigen::ArrayXXd w = e / (1.0 + e).square();
      const Eigen::ArrayXXd mask = observed_weights(data, s, t);
      if (mask.size() != 0) w *= mask;
      // c((k,k'), (l,l')) = sum_i x_ik x_ik' sum_j w_ij y_jl y_jl'
      const Matrix c = px.transpose() * (w.matrix() * py);
      Matrix& mt = out[static_cast<std::size_t>(s * m + t)];
      for (Index k = 0; k < d; ++k) {
        for (Index k2 = 0; k2 < d; ++k2) {
          for (Index l = 0; l < d; ++l) {
            for (Index l2 = 0; l2 < d; ++l2) mt(k * d + l, k2 * d + l2) = c(k * d + k2, l * d + l2);
          }
        }
      }
    }
  }
  return out;
}

// Hessian of the loss in layer s's coefficients, indexed q * m_anchors + h.
Matrix layer_hessian(const std::vector<Matrix>& curvature, Index s, Index m, Index dd,
                     const Matrix& cross) {
  const Index ma = cross.cols();
  Matrix h(dd * ma, dd * ma);
  Vector weights(m);
  for (Index q = 0; q < dd; ++q) {
    for (Index q2 = q; q2 < dd; ++q2) {
      for (Index t = 0; t < m; ++t) weights(t) = curvature[static_cast<std::size_t>(s * m + t)](q, q2);
      h.block(q * ma, q2 * ma, ma, ma) = cross.transpose() * weights.asDiagonal() * cross;
      if (q2 != q) h.block(q2 * ma, q * ma, ma, ma) = h.block(q * ma, q2 * ma, ma, ma).transpose();
    }
  }
  return h;
}

// Flips column signs so the largest-magnitude entry of each column is positive.
void canonical_signs(Matrix& u) {
  for (Index c = 0; c < u.cols(); ++c) {
    Index at = 0;
    u.col(c).cwiseAbs().maxCoeff(&at);
    if (u(at, c) < 0.0) u.col(c) *= -1.0;
  }
}

Matrix leading_left_singular_vectors(const Matrix& m, Index d) {
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
  return svd.matrixU().leftCols(d);
}

double ridge_penalty(const CoefficientArray& theta, const Matrix& gram) {
  double total = 0.0;
  for (Index s = 0; s < theta.layers(); ++s) {
    for (Index k = 0; k < theta.dim(); ++k) {
      for (Index l = 0; l < theta.dim(); ++l) total += rkhs_norm_sq(theta.slice(s, k, l), gram);
    }
  }
  return total;
}

void check_dims(const ModelParams& params, const ObservationSet& data) {
  params.validate();
  data.validate(false);
  check_compatible(params, data);
}

}  // namespace

LossAndGradient loss_and_gradient(const ModelParams& params, const ObservationSet& data) {
  check_dims(params, data);
  LossAndGradient out;
  const Matrix cross = cross_gram(params.kernel, data.times, params.anchors);
  out.loss = evaluate(params, data, cross, out.grad, true);
  return out;
}

Gradient gradient(const ModelParams& params, const ObservationSet& data) {
  return loss_and_gradient(params, data).grad;
}

ModelParams rescale_to_constraint(const ModelParams& params, double constraint) {
  const double current = sigma(params);
  if (!(current > constraint) || current == 0.0) return params;
  const double factor = std::cbrt(constraint / current);
  ModelParams out = params;
  out.X *= factor;
  out.Y *= factor;
  out.theta.values() *= factor;
  return out;
}

ModelParams orthogonalize_output(const ModelParams& params) {
  const Index d = params.dim();
  auto orthonormal_basis = [d](const Matrix& f, const char* name) {
    Eigen::BDCSVD<Matrix> svd(f, Eigen::ComputeThinU);
    const Vector& sv = svd.singularValues();
    if (f.rows() < d || sv(d - 1) <= 1e-10 * std::max(sv(0), 1e-300)) {
      throw NumericalError(std::string("orthogonalization failed: ") + name + " has rank below d");
    }
    Matrix u = svd.matrixU().leftCols(d);
    canonical_signs(u);
    return u;
  };
  const Matrix u = orthonormal_basis(params.X, "X");
  const Matrix v = orthonormal_basis(params.Y, "Y");
  const Matrix left = u.transpose() * params.X;
  const Matrix right = params.Y.transpose() * v;

  ModelParams out = params;
  out.X = u;
  out.Y = v;
  // The representer map theta -> R is linear, so the change of basis acts on
  // each anchor's d x d coefficient block directly.
  for (Index s = 0; s < params.layers(); ++s) {
    for (Index h = 0; h < params.num_anchors(); ++h) {
      Matrix block(d, d);
      for (Index k = 0; k < d; ++k) {
        for (Index l = 0; l < d; ++l) block(k, l) = params.theta(s, k, l, h);
      }
      const Matrix moved = left * block * right;
      for (Index k = 0; k < d; ++k) {
        for (Index l = 0; l < d; ++l) out.theta(s, k, l, h) = moved(k, l);
      }
    }
  }
  return out;
}

SpectralFactors spectral_init(const ObservationSet& input, Index d) {
  if (d < 1) throw std::invalid_argument("spectral_init needs d >= 1");
  if (d > input.n) throw std::invalid_argument("spectral_init needs d <= n");
  const ObservationSet data = input.to_dense();
  const Index blocks = data.layers * data.num_times();
  Matrix left_blocks(data.n, blocks * d);
  Matrix right_blocks(data.n, blocks * d);
  Matrix centered(data.n, data.n);
  for (Index s = 0; s < data.layers; ++s) {
    for (Index t = 0; t < data.num_times(); ++t) {
      const Matrix& a = data.snapshot(s, t);
      for (Index j = 0; j < data.n; ++j) {
        for (Index i = 0; i < data.n; ++i) {
          centered(i, j) = data.observed(s, t, i, j) ? a(i, j) - 0.5 : 0.0;
        }
      }
      Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Index b = data.block(s, t);
      left_blocks.middleCols(b * d, d) = svd.matrixU().leftCols(d);
      right_blocks.middleCols(b * d, d) = svd.matrixV().leftCols(d);
    }
  }
  SpectralFactors out{leading_left_singular_vectors(left_blocks, d),
                      leading_left_singular_vectors(right_blocks, d)};
  canonical_signs(out.X);
  canonical_signs(out.Y);
  return out;
}

ThetaSolveResult solve_theta_convex(const ObservationSet& data, const Matrix& X, const Matrix& Y,
                                    const KernelSpec& kernel, const std::vector<double>& anchors,
                                    const ThetaSolveOptions& options,
                                    const CoefficientArray* start) {
  kernel.validate();
  if (X.rows() != data.n || Y.rows() != data.n || X.cols() != Y.cols()) {
    throw DataError("frozen factors do not match the data's vertex count");
  }
  if (!(options.ridge >= 0.0)) throw std::invalid_argument("ridge must be non-negative");
  ModelParams p;
  p.X = X;
  p.Y = Y;
  p.anchors = anchors;
  p.kernel = kernel;
  p.theta = start ? *start : CoefficientArray(data.layers, X.cols(), static_cast<Index>(anchors.size()));
  check_dims(p, data);

  const Matrix cross = cross_gram(kernel, data.times, anchors);
  const Matrix g = gram(kernel, anchors);
  const double ridge = options.ridge;
  const Index dd = p.dim() * p.dim();
  const Index ma = p.num_anchors();
  const Index block = dd * ma;

  auto objective = [&](const ModelParams& q, Gradient* grad) {
    double loss = 0.0;
    if (grad) {
      loss = evaluate(q, data, cross, *grad, false);
      if (ridge > 0.0) {
        for (Index s = 0; s < q.layers(); ++s) {
          grad->theta.layer(s) += 2.0 * ridge * (q.theta.layer(s) * g);
        }
      }
    } else {
      loss = loss_only(q, data, cross);
    }
    return std::pair{loss, loss + (ridge > 0.0 ? ridge * ridge_penalty(q.theta, g) : 0.0)};
  };

  ThetaSolveResult result;
  Gradient grad;
  auto [loss, value] = objective(p, &grad);
  if (!std::isfinite(value)) throw NumericalError("non-finite loss in theta solve");

  // Damped Newton. Layers do not interact, so the Hessian is block diagonal
  // with one (d^2 m) x (d^2 m) block per layer.
  ModelParams trial = p;
  Vector direction(p.theta.size());
  for (Index it = 0; it < options.max_iters; ++it) {
    result.iterations = it;
    const std::vector<Matrix> curv = core_curvature(p, data, cross);
    for (Index s = 0; s < p.layers(); ++s) {
      Matrix h = layer_hessian(curv, s, data.num_times(), dd, cross);
      if (ridge > 0.0) {
        for (Index q = 0; q < dd; ++q) h.block(q * ma, q * ma, ma, ma) += 2.0 * ridge * g;
      }
      const double damping = 1e-8 * std::max(h.diagonal().mean(), 1e-300);
      h.diagonal().array() += damping;
      const auto gs = grad.theta.values().segment(s * block, block);
      direction.segment(s * block, block) = -h.ldlt().solve(gs);
    }
    double slope = grad.theta.values().dot(direction);
    if (!direction.allFinite() || !(slope < 0.0)) {
      direction = -grad.theta.values();
      slope = -direction.squaredNorm();
    }
    if (slope == 0.0 || -0.5 * slope <= options.rel_tol * std::max(std::abs(value), 1e-300)) {
      result.converged = true;
      break;
    }
    double step = 1.0;
    double trial_loss = 0.0;
    double trial_value = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int h = 0; h < 60; ++h) {
      trial.theta.values() = p.theta.values() + step * direction;
      std::tie(trial_loss, trial_value) = objective(trial, nullptr);
      if (std::isfinite(trial_value) && trial_value <= value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.converged = true;
      break;
    }
    const double decrease = value - trial_value;
    std::swap(p.theta, trial.theta);
    std::tie(loss, value) = objective(p, &grad);
    result.iterations = it + 1;
    if (decrease <= options.rel_tol * std::max(std::abs(value), 1e-300)) {
      result.converged = true;
      break;
    }
  }
  result.theta = std::move(p.theta);
  result.loss = loss;
  result.objective = value;
  return result;
}

std::string to_string(InitMethod init) {
  switch (init) {
    case InitMethod::spectral: return "spectral";
    case InitMethod::random: return "random";
    case InitMethod::provided: return "provided";
  }
  return "unknown";
}

InitMethod parse_init_method(const std::string& name) {
  if (name == "spectral") return InitMethod::spectral;
  if (name == "random") return InitMethod::random;
  if (name == "provided") return InitMethod::provided;
  throw std::invalid_argument("unknown init method '" + name + "'");
}

void FitConfig::validate() const {
  if (d < 1) throw std::invalid_argument("d must be at least 1");
  if (constraint && !(*constraint > 0.0)) throw std::invalid_argument("constraint C must be positive");
  if (!(step_size > 0.0)) throw std::invalid_argument("step size must be positive");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be at least 1");
  if (!(rel_tol >= 0.0)) throw std::invalid_argument("rel_tol must be non-negative");
  if (init == InitMethod::provided && !initial) {
    throw std::invalid_argument("init 'provided' requires initial parameters");
  }
}

ModelParams initialize(const ObservationSet& data, Index d, const KernelSpec& kernel,
                       const ThetaSolveOptions& options) {
  const SpectralFactors factors = spectral_init(data, d);
  ModelParams p;
  p.X = factors.X;
  p.Y = factors.Y;
  p.anchors = data.times;
  p.kernel = kernel;
  p.theta = solve_theta_convex(data, p.X, p.Y, kernel, p.anchors, options).theta;
  return p;
}

ModelParams random_init(const ObservationSet& data, Index d, const KernelSpec& kernel,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  auto draw = [&] {
    Matrix f(data.n, d);
    for (Index j = 0; j < d; ++j) {
      for (Index i = 0; i < data.n; ++i) f(i, j) = normal(rng);
    }
    f.colwise().normalize();
    return f;
  };
  ModelParams p;
  p.X = draw();
  p.Y = draw();
  p.anchors = data.times;
  p.kernel = kernel;
  p.theta = CoefficientArray(data.layers, d, data.num_times());
  return p;
}

FitReport fit(const ObservationSet& data, const FitConfig& config, const KernelSpec& kernel) {
  const auto started = std::chrono::steady_clock::now();
  config.validate();
  kernel.validate();
  data.validate(false);

  ModelParams params;
  switch (config.init) {
    case InitMethod::spectral:
      params = initialize(data, config.d, kernel, config.theta_solve);
      break;
    case InitMethod::random:
      params = random_init(data, config.d, kernel, config.seed);
      break;
    case InitMethod::provided:
      params = *config.initial;
      if (params.dim() != config.d) throw DataError("initial parameters have the wrong dimension d");
      break;
  }
  check_dims(params, data);

  const Matrix g = params.gram_matrix();
  const Matrix cross = cross_gram(params.kernel, data.times, params.anchors);
  FitReport report;
  const double sigma0 = sigma(params, g);
  report.constraint = config.constraint.value_or(sigma0 > 0.0 ? 2.0 * sigma0
                                                              : std::numeric_limits<double>::infinity());

  Gradient grad;
  double loss = evaluate(params, data, cross, grad, true);
  if (!std::isfinite(loss)) throw NumericalError("non-finite loss at the initial parameters");
  report.loss_trace.push_back(loss);
  report.sigma_trace.push_back(sigma0);

  double alpha = config.step_size;
  constexpr std::size_t window = 5;
  ModelParams trial = params;
  for (Index it = 0; it < config.max_iters; ++it) {
    bool accepted = false;
    bool any_finite = false;
    double trial_loss = 0.0;
    for (int h = 0; h <= config.max_halvings; ++h) {
      trial.X = params.X - alpha * grad.X;
      trial.Y = params.Y - alpha * grad.Y;
      trial.theta.values() = params.theta.values() - alpha * grad.theta.values();
      trial = rescale_to_constraint(trial, report.constraint);
      trial_loss = loss_only(trial, data, cross);
      any_finite = any_finite || std::isfinite(trial_loss);
      if (std::isfinite(trial_loss) && trial_loss <= loss) {
        accepted = true;
        break;
      }
      if (h < config.max_halvings) alpha *= 0.5;
    }
    if (!accepted) {
      if (!any_finite) throw NumericalError("non-finite loss: step size too large");
      // No step along the gradient lowers the loss: stationary to working precision.
      report.converged = true;
      break;
    }
    std::swap(params, trial);
    loss = evaluate(params, data, cross, grad, true);
    report.loss_trace.push_back(loss);
    report.sigma_trace.push_back(sigma(params, g));
    report.iterations_run = it + 1;

    const auto& trace = report.loss_trace;
    if (trace.size() > window) {
      const double before = trace[trace.size() - 1 - window];
      if (before - loss <= config.rel_tol * std::abs(before)) {
        report.converged = true;
        break;
      }
    }
  }

  report.params = orthogonalize_output(params);
  report.final_loss = loss_only(report.params, data, cross);
  report.sigma_final = sigma(report.params, g);
  report.step_size_final = alpha;
  report.bic = bic(report.final_loss, config.d, data.n, data.layers, data.num_times());
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

double bic(double loss, Index d, Index n, Index layers, Index m) {
  const auto dd = static_cast<double>(d);
  const auto nn = static_cast<double>(n);
  const double km = static_cast<double>(layers) * static_cast<double>(m);
  return 2.0 * loss + dd * (2.0 * nn + dd * km) * std::log(km * nn * nn);
}

std::optional<std::size_t> best_bic_row(const std::vector<BicRow>& table) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const BicRow& row = table[i];
    if (!row.ok) continue;
    if (!best) {
      best = i;
      continue;
    }
    const BicRow& cur = table[*best];
    const double tol = 1e-12 * std::max(1.0, std::abs(cur.bic));
    if (row.bic < cur.bic - tol || (std::abs(row.bic - cur.bic) <= tol && row.d < cur.d)) best = i;
  }
  return best;
}

SelectionResult select_model(const ObservationSet& data, const std::vector<Index>& candidate_ds,
                             const std::vector<KernelSpec>& candidate_kernels,
                             const FitConfig& base) {
  if (candidate_ds.empty() || candidate_kernels.empty()) {
    throw std::invalid_argument("model selection needs at least one d and one kernel");
  }
  SelectionResult result;
  std::vector<FitReport> reports;
  for (Index d : candidate_ds) {
    std::optional<SpectralFactors> factors;
    std::string factor_error;
    if (base.init == InitMethod::spectral) {
      try {
        factors = spectral_init(data, d);
      } catch (const std::exception& e) {
        factor_error = e.what();
      }
    }
    for (const KernelSpec& kernel : candidate_kernels) {
      BicRow row;
      row.d = d;
      row.kernel = kernel;
      FitReport report;
      try {
        FitConfig cfg = base;
        cfg.d = d;
        if (base.init == InitMethod::spectral) {
          if (!factors) throw NumericalError(factor_error);
          ModelParams p;
          p.X = factors->X;
          p.Y = factors->Y;
          p.anchors = data.times;
          p.kernel = kernel;
          p.theta = solve_theta_convex(data, p.X, p.Y, kernel, p.anchors, base.theta_solve).theta;
          cfg.init = InitMethod::provided;
          cfg.initial = std::move(p);
        }
        report = fit(data, cfg, kernel);
        row.ok = true;
        row.bic = report.bic;
        row.loss = report.final_loss;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      result.table.push_back(row);
      reports.push_back(std::move(report));
    }
  }
  const auto best = best_bic_row(result.table);
  if (!best) throw NumericalError("every candidate fit failed");
  result.best_d = result.table[*best].d;
  result.best_kernel = result.table[*best].kernel;
  result.best_fit = std::move(reports[*best]);
  return result;
}

}  // namespace mftdn
