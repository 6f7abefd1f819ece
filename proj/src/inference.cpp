#include "mftdn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace mftdn {

namespace {

void check_orthonormal(const Matrix& x, const char* name) {
  const Matrix gram = x.transpose() * x;
  if ((gram - Matrix::Identity(x.cols(), x.cols())).cwiseAbs().maxCoeff() > 1e-8) {
    throw std::invalid_argument(std::string("subspace_error: ") + name + " is not column-orthonormal");
  }
}

// Relabels arbitrary ids to 0..c-1 in order of first appearance.
std::vector<Index> compact(const std::vector<Index>& labels, Index& count) {
  std::map<Index, Index> ids;
  std::vector<Index> out;
  out.reserve(labels.size());
  for (Index l : labels) {
    auto [it, inserted] = ids.try_emplace(l, static_cast<Index>(ids.size()));
    out.push_back(it->second);
  }
  count = static_cast<Index>(ids.size());
  return out;
}

// Maximum-weight perfect matching on a square matrix (Hungarian method on costs).
double hungarian_max(const Matrix& weights) {
  const Index n = weights.rows();
  const double big = weights.maxCoeff();
  // 1-based potentials formulation on cost = big - weight.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const Index i0 = p[j0];
      double delta = std::numeric_limits<double>::infinity();
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = (big - weights(i0 - 1, j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (Index j = 1; j <= n; ++j) total += weights(p[j] - 1, j - 1);
  return total;
}

double permutation_max(const Matrix& weights) {
  std::vector<Index> perm(static_cast<std::size_t>(weights.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Index r = 0; r < weights.rows(); ++r) total += weights(r, perm[static_cast<std::size_t>(r)]);
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

KMeansResult lloyd(const Matrix& rows, Index k, std::mt19937_64& rng, int max_iters) {
  const Index n = rows.rows();
  KMeansResult r;
  r.centroids.resize(k, rows.cols());
  // k-means++ seeding.
  std::uniform_int_distribution<Index> first(0, n - 1);
  r.centroids.row(0) = rows.row(first(rng));
  Vector nearest = (rows.rowwise() - r.centroids.row(0)).rowwise().squaredNorm();
  for (Index c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Index pick = 0;
    if (total > 0.0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        target -= nearest(pick);
        if (target < 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    r.centroids.row(c) = rows.row(pick);
    nearest = nearest.cwiseMin((rows.rowwise() - r.centroids.row(c)).rowwise().squaredNorm());
  }

  r.labels.assign(static_cast<std::size_t>(n), -1);
  Vector dist(n);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < k; ++c) {
        const double dd = (rows.row(i) - r.centroids.row(c)).squaredNorm();
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      dist(i) = best_d;
      if (r.labels[static_cast<std::size_t>(i)] != best) {
        r.labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    Matrix sums = Matrix::Zero(k, rows.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(r.labels[static_cast<std::size_t>(i)]) += rows.row(i);
      ++counts[static_cast<std::size_t>(r.labels[static_cast<std::size_t>(i)])];
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        r.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Empty cluster: move its centroid onto the point farthest from its own.
      Index far = 0;
      dist.maxCoeff(&far);
      r.centroids.row(c) = rows.row(far);
      dist(far) = 0.0;
      r.labels[static_cast<std::size_t>(far)] = c;
      changed = true;
    }
    if (!changed) break;
  }
  r.wcss = 0.0;
  for (Index i = 0; i < n; ++i) {
    r.wcss += (rows.row(i) - r.centroids.row(r.labels[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return r;
}

}  // namespace

double subspace_error(const Matrix& x_hat, const Matrix& x) {
  if (x_hat.rows() != x.rows()) throw std::invalid_argument("subspace_error: row counts differ");
  check_orthonormal(x_hat, "estimate");
  check_orthonormal(x, "reference");
  const Matrix diff = x_hat * x_hat.transpose() - x * x.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(diff, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

Alignment align(const ModelParams& estimate, const Matrix& X, const Matrix& Y) {
  return {procrustes(estimate.X, X), procrustes(estimate.Y, Y)};
}

double acc_R(const CoreFunction& estimate, const CoreFunction& truth, Index layers,
             const Alignment& alignment, Index grid_size) {
  const Index d = alignment.W_X.rows();
  if (alignment.W_X.cols() != d || alignment.W_Y.rows() != d || alignment.W_Y.cols() != d) {
    throw std::invalid_argument("acc_R: alignment has the wrong dimension");
  }
  const std::vector<double> grid = uniform_grid(grid_size);
  const Index blocks = layers * grid_size;
  Matrix est(d, d * blocks);
  Matrix ref(d, d * blocks);
  Index b = 0;
  for (Index s = 0; s < layers; ++s) {
    for (double t : grid) {
      const Matrix e = estimate(s, t);
      const Matrix r = truth(s, t);
      if (e.rows() != d || e.cols() != d || r.rows() != d || r.cols() != d) {
        throw std::invalid_argument("acc_R: core shape mismatch");
      }
      est.middleCols(b * d, d) = alignment.W_X.transpose() * e * alignment.W_Y;
      ref.middleCols(b * d, d) = r;
      ++b;
    }
  }
  return matrix_corr(est, ref);
}

double acc_R(const ModelParams& estimate, const CoreFunction& truth, Index layers,
             const Alignment& alignment, Index grid_size) {
  if (layers != estimate.layers()) throw std::invalid_argument("acc_R: layer counts differ");
  if (alignment.W_X.rows() != estimate.dim()) throw std::invalid_argument("acc_R: alignment has the wrong dimension");
  return acc_R([&](Index s, double t) { return eval_R(estimate, s, t); }, truth, layers, alignment,
               grid_size);
}

EstimationMetrics evaluate_estimate(const Matrix& x_hat, const Matrix& y_hat, const CoreFunction& r_hat,
                                    Index layers, const GroundTruth& truth, Index grid_size) {
  if (x_hat.cols() != truth.dim() || y_hat.cols() != truth.dim()) {
    throw DataError("estimate and truth have different d");
  }
  if (x_hat.rows() != truth.X.rows() || y_hat.rows() != truth.Y.rows()) {
    throw DataError("estimate and truth have different n");
  }
  if (layers != truth.layers()) throw DataError("estimate and truth have different K");
  EstimationMetrics m;
  m.err_x = subspace_error(x_hat, truth.X);
  m.err_y = subspace_error(y_hat, truth.Y);
  m.err = 0.5 * (m.err_x + m.err_y);
  m.alignment = {procrustes(x_hat, truth.X), procrustes(y_hat, truth.Y)};
  m.acc_r = acc_R(r_hat, [&](Index s, double t) { return truth.R(s, t); }, layers, m.alignment, grid_size);
  return m;
}

EstimationMetrics evaluate_estimate(const ModelParams& estimate, const GroundTruth& truth,
                                    Index grid_size) {
  return evaluate_estimate(
      estimate.X, estimate.Y, [&](Index s, double t) { return eval_R(estimate, s, t); },
      estimate.layers(), truth, grid_size);
}

KMeansResult kmeans(const Matrix& rows, Index k, std::uint64_t seed, int restarts, int max_iters) {
  if (k < 1) throw std::invalid_argument("kmeans needs k >= 1");
  if (k > rows.rows()) throw std::invalid_argument("kmeans needs k <= number of points");
  std::mt19937_64 master(seed);
  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(restarts, 1); ++r) {
    std::mt19937_64 rng(master());
    KMeansResult run = lloyd(rows, k, rng, max_iters);
    if (run.wcss < best.wcss) best = std::move(run);
  }
  return best;
}

double clustering_accuracy(const std::vector<Index>& predicted, const std::vector<Index>& truth) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("clustering_accuracy: label vectors differ in length");
  }
  if (truth.empty()) return 1.0;
  Index p = 0, q = 0;
  const auto pc = compact(predicted, p);
  const auto tc = compact(truth, q);
  const Index size = std::max(p, q);
  Matrix counts = Matrix::Zero(size, size);
  for (std::size_t i = 0; i < pc.size(); ++i) counts(pc[i], tc[i]) += 1.0;
  const double matched = size <= 10 ? permutation_max(counts) : hungarian_max(counts);
  return matched / static_cast<double>(truth.size());
}

Matrix layer_features(const ModelParams& params) {
  const Index per_layer = params.dim() * params.dim() * params.num_anchors();
  Matrix out(params.layers(), per_layer);
  for (Index s = 0; s < params.layers(); ++s) {
    out.row(s) = params.theta.values().segment(params.theta.offset(s, 0, 0), per_layer).transpose();
  }
  return out;
}

Matrix trajectory_features(const ModelParams& params, const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("trajectory features need a non-empty grid");
  const Index d = params.dim();
  const Matrix cross = cross_gram(params.kernel, grid, params.anchors);
  Matrix out(params.layers(), d * d * static_cast<Index>(grid.size()));
  for (Index s = 0; s < params.layers(); ++s) {
    // (d*d) x |grid|, column t = row-major vec of R_s(t).
    const Matrix samples = params.theta.layer(s) * cross.transpose();
    out.row(s) = Eigen::Map<const Vector>(samples.data(), samples.size()).transpose();
  }
  return out;
}

Matrix trajectory_distance_matrix(const ModelParams& params, const std::vector<double>& grid,
                                  DistanceMode mode) {
  if (grid.empty()) throw std::invalid_argument("trajectory distances need a non-empty grid");
  const Matrix features = trajectory_features(params, grid);
  Matrix points;
  if (mode == DistanceMode::per_trajectory) {
    points = features;
  } else {
    const Index dd = params.dim() * params.dim();
    const auto g = static_cast<Index>(grid.size());
    points.resize(params.layers() * g, dd);
    for (Index s = 0; s < params.layers(); ++s) {
      for (Index t = 0; t < g; ++t) points.row(s * g + t) = features.row(s).segment(t * dd, dd);
    }
  }
  const Index count = points.rows();
  Matrix out = Matrix::Zero(count, count);
  for (Index i = 0; i < count; ++i) {
    for (Index j = i + 1; j < count; ++j) {
      out(i, j) = (points.row(i) - points.row(j)).norm();
      out(j, i) = out(i, j);
    }
  }
  return out;
}

double trajectory_distance(const CoreFunction& a, Index layer_a, const CoreFunction& b,
                           Index layer_b, const std::vector<double>& grid) {
  double total = 0.0;
  for (double t : grid) total += (a(layer_a, t) - b(layer_b, t)).squaredNorm();
  return std::sqrt(total);
}

Matrix classical_mds(const Matrix& distances, Index dim) {
  const Index n = distances.rows();
  if (n == 0 || distances.cols() != n) throw std::invalid_argument("classical_mds needs a square matrix");
  if (dim < 1) throw std::invalid_argument("classical_mds needs dim >= 1");
  if ((distances - distances.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, distances.cwiseAbs().maxCoeff()) ||
      distances.diagonal().cwiseAbs().maxCoeff() > 0.0) {
    throw std::invalid_argument("classical_mds needs a symmetric matrix with zero diagonal");
  }
  const Matrix centering = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  const Matrix squared = distances.cwiseProduct(distances);
  const Matrix b = -0.5 * centering * squared * centering;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (b + b.transpose()));
  const Vector& values = eig.eigenvalues();  // ascending
  const double tol = 1e-10 * std::max(1.0, values.cwiseAbs().maxCoeff());
  Matrix coords = Matrix::Zero(n, dim);
  Index used = 0;
  for (Index c = n - 1; c >= 0 && used < dim; --c) {
    if (values(c) < -tol) break;
    const double scale = std::sqrt(std::max(values(c), 0.0));
    coords.col(used) = eig.eigenvectors().col(c) * scale;
    Index at = 0;
    coords.col(used).cwiseAbs().maxCoeff(&at);
    if (coords(at, used) < 0.0) coords.col(used) *= -1.0;
    ++used;
  }
  if (used == 0) throw NumericalError("classical_mds: no non-negative eigenvalues");
  return coords;
}

Dendrogram hierarchical_cluster(const Matrix& distances, Linkage linkage) {
  const Index k = distances.rows();
  if (distances.cols() != k) throw std::invalid_argument("hierarchical_cluster needs a square matrix");
  if (k < 2) throw std::invalid_argument("hierarchical_cluster needs at least two items");
  Matrix dist = distances;
  std::vector<Index> id(static_cast<std::size_t>(k));
  std::vector<Index> size(static_cast<std::size_t>(k), 1);
  std::vector<bool> active(static_cast<std::size_t>(k), true);
  std::iota(id.begin(), id.end(), 0);
  Dendrogram tree;
  tree.leaves = k;
  for (Index step = 0; step < k - 1; ++step) {
    Index bi = -1, bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < k; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (Index j = i + 1; j < k; ++j) {
        if (active[static_cast<std::size_t>(j)] && dist(i, j) < best) {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    const auto ui = static_cast<std::size_t>(bi);
    const auto uj = static_cast<std::size_t>(bj);
    tree.merges.push_back({step, std::min(id[ui], id[uj]), std::max(id[ui], id[uj]), best});
    const auto si = static_cast<double>(size[ui]);
    const auto sj = static_cast<double>(size[uj]);
    for (Index o = 0; o < k; ++o) {
      if (!active[static_cast<std::size_t>(o)] || o == bi || o == bj) continue;
      double merged = 0.0;
      switch (linkage) {
        case Linkage::average: merged = (si * dist(bi, o) + sj * dist(bj, o)) / (si + sj); break;
        case Linkage::single: merged = std::min(dist(bi, o), dist(bj, o)); break;
        case Linkage::complete: merged = std::max(dist(bi, o), dist(bj, o)); break;
      }
      dist(bi, o) = merged;
      dist(o, bi) = merged;
    }
    active[uj] = false;
    size[ui] += size[uj];
    id[ui] = k + step;
  }
  return tree;
}

std::vector<Index> Dendrogram::cut(Index k) const {
  if (k < 1 || k > leaves) throw std::invalid_argument("dendrogram cut needs 1 <= k <= leaves");
  std::vector<Index> parent(static_cast<std::size_t>(leaves + static_cast<Index>(merges.size())));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
    return x;
  };
  for (Index step = 0; step < leaves - k; ++step) {
    const Merge& m = merges[static_cast<std::size_t>(step)];
    parent[static_cast<std::size_t>(find(m.left))] = leaves + step;
    parent[static_cast<std::size_t>(find(m.right))] = leaves + step;
  }
  std::map<Index, Index> names;
  std::vector<Index> labels(static_cast<std::size_t>(leaves));
  for (Index i = 0; i < leaves; ++i) {
    auto [it, inserted] = names.try_emplace(find(i), static_cast<Index>(names.size()));
    labels[static_cast<std::size_t>(i)] = it->second;
  }
  return labels;
}

OfflineFit offline_fit_R(const ObservationSet& new_data, const ModelParams& trained,
                         const ThetaSolveOptions& options) {
  if (new_data.n != trained.n()) {
    throw DataError("new network has n = " + std::to_string(new_data.n) +
                    " but the frozen factors have n = " + std::to_string(trained.n()));
  }
  ThetaSolveResult solved =
      solve_theta_convex(new_data, trained.X, trained.Y, trained.kernel, new_data.times, options);
  return {std::move(solved.theta), solved.loss};
}

}  // namespace mftdn
