#include "mftdn/network.hpp"

#include "mftdn/model.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace mftdn {

namespace {

void check_grid(const std::vector<double>& times) {
  if (times.empty()) throw DataError("time grid is empty");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || times[i] < 0.0 || times[i] > 1.0) {
      throw DataError("time grid must lie in [0, 1]");
    }
    if (i > 0 && !(times[i] > times[i - 1])) {
      throw DataError("time grid must be strictly increasing");
    }
  }
}

double uniform(std::mt19937_64& rng, const UniformRange& r) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

Matrix uniform_matrix(std::mt19937_64& rng, Index d, const UniformRange& r, double scale = 1.0) {
  Matrix out(d, d);
  for (Index k = 0; k < d; ++k) {
    for (Index l = 0; l < d; ++l) out(k, l) = scale * uniform(rng, r);
  }
  return out;
}

// Labels drawn uniformly from {0..d-1}; redrawn until every community is populated.
std::vector<Index> draw_labels(std::mt19937_64& rng, Index n, Index d) {
  std::uniform_int_distribution<Index> pick(0, d - 1);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<Index> labels(static_cast<std::size_t>(n));
    std::vector<Index> counts(static_cast<std::size_t>(d), 0);
    for (auto& c : labels) {
      c = pick(rng);
      ++counts[static_cast<std::size_t>(c)];
    }
    if (std::find(counts.begin(), counts.end(), 0) == counts.end()) return labels;
  }
  throw DataError("could not draw community labels with every community populated");
}

Matrix membership(const std::vector<Index>& labels, Index d) {
  Matrix z = Matrix::Zero(static_cast<Index>(labels.size()), d);
  for (std::size_t i = 0; i < labels.size(); ++i) z(static_cast<Index>(i), labels[i]) = 1.0;
  return z;
}

}  // namespace

Index ObservationSet::observed_count() const {
  if (is_sparse()) {
    Index count = 0;
    for (const auto& [key, obs] : unaligned) {
      if (exclude_diagonal && key.src == key.dst) continue;
      count += static_cast<Index>(obs.size());
    }
    return count;
  }
  Index count = 0;
  for (Index s = 0; s < layers; ++s) {
    for (Index t = 0; t < num_times(); ++t) {
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) count += observed(s, t, i, j) ? 1 : 0;
      }
    }
  }
  return count;
}

void ObservationSet::validate(bool binary) const {
  if (n <= 0 || layers <= 0) throw DataError("network needs n >= 1 and K >= 1");
  check_grid(times);
  auto check_value = [&](double v) {
    if (binary ? !(v == 0.0 || v == 1.0) : !(v >= 0.0 && v <= 1.0)) {
      throw DataError(binary ? "adjacency entries must be 0 or 1"
                             : "adjacency entries must lie in [0, 1]");
    }
  };
  if (!unaligned.empty()) {
    if (!adjacency.empty() || !mask.empty()) {
      throw DataError("sparse observations cannot be mixed with dense adjacency");
    }
    for (const auto& [key, obs] : unaligned) {
      if (key.layer < 0 || key.layer >= layers || key.src < 0 || key.src >= n || key.dst < 0 ||
          key.dst >= n) {
        throw DataError("sparse observation index out of range");
      }
      for (const auto& [t, v] : obs) {
        if (t < 0 || t >= num_times()) throw DataError("sparse observation time index out of range");
        check_value(v);
      }
    }
    return;
  }
  const auto blocks = static_cast<std::size_t>(layers * num_times());
  if (adjacency.size() != blocks) throw DataError("adjacency must hold K * m matrices");
  if (!mask.empty() && mask.size() != blocks) throw DataError("mask must match adjacency layout");
  for (std::size_t b = 0; b < blocks; ++b) {
    if (adjacency[b].rows() != n || adjacency[b].cols() != n) {
      throw DataError("adjacency matrices must be n x n");
    }
    if (!mask.empty() && (mask[b].rows() != n || mask[b].cols() != n)) {
      throw DataError("mask matrices must be n x n");
    }
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) check_value(adjacency[b](i, j));
    }
  }
}

ObservationSet ObservationSet::zeros(Index n, Index layers, std::vector<double> times) {
  ObservationSet out;
  out.n = n;
  out.layers = layers;
  out.times = std::move(times);
  out.adjacency.assign(static_cast<std::size_t>(layers * out.num_times()), Matrix::Zero(n, n));
  return out;
}

ObservationSet ObservationSet::to_dense() const {
  if (!is_sparse()) return *this;
  ObservationSet out = zeros(n, layers, times);
  out.exclude_diagonal = exclude_diagonal;
  out.mask.assign(out.adjacency.size(), Mask::Zero(n, n));
  for (const auto& [key, obs] : unaligned) {
    for (const auto& [t, v] : obs) {
      out.snapshot(key.layer, t)(key.src, key.dst) = v;
      out.mask[static_cast<std::size_t>(out.block(key.layer, t))](key.src, key.dst) = 1;
    }
  }
  return out;
}

std::vector<double> normalize_times(std::span<const double> raw) {
  if (raw.size() < 2) throw DataError("need at least two distinct time points");
  for (std::size_t i = 1; i < raw.size(); ++i) {
    if (!(raw[i] > raw[i - 1])) throw DataError("time points must be strictly increasing");
  }
  const double lo = raw.front();
  const double span = raw.back() - lo;
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) / span;
  out.front() = 0.0;
  out.back() = 1.0;
  return out;
}

std::vector<double> uniform_grid(Index m) {
  if (m < 1) throw std::invalid_argument("grid needs at least one point");
  std::vector<double> grid(static_cast<std::size_t>(m), 0.0);
  for (Index i = 1; i < m; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(m - 1);
  return grid;
}

Matrix SinusoidalCore::value(Index group, double t) const {
  const auto g = static_cast<std::size_t>(group);
  const double omega = 2.0 * std::numbers::pi * t / period;
  return mu[g] + delta[g].cwiseProduct((phi[g].array() + omega).sin().matrix());
}

Matrix GroundTruth::R(Index s, double t) const {
  return left_scale.asDiagonal() * core.value(layer_group[static_cast<std::size_t>(s)], t) *
         right_scale.asDiagonal();
}

void SbmSpec::validate() const {
  if (n < 1 || d < 1 || m < 1 || layers < 1) throw std::invalid_argument("SBM sizes must be positive");
  if (d > n) throw std::invalid_argument("SBM needs d <= n");
  if (!(period > 0.0)) throw std::invalid_argument("SBM period must be positive");
  if (mu.lo > mu.hi || delta.lo > delta.hi || phi.lo > phi.hi) {
    throw std::invalid_argument("SBM ranges must have lo <= hi");
  }
}

SbmSpec SbmSpec::community_detection(Index n, Index m, std::uint64_t seed) {
  SbmSpec spec;
  spec.n = n;
  spec.d = 3;
  spec.m = m;
  spec.layers = 1;
  spec.mu = {-1.0, 1.0};
  spec.delta = {-1.0, 1.0};
  spec.phi = {0.0, std::numbers::pi / 2.0};
  spec.seed = seed;
  return spec;
}

void LayerClusterSpec::validate() const {
  if (n < 1 || d < 1 || m < 1 || layers < 1 || clusters < 1) {
    throw std::invalid_argument("layer-cluster sizes must be positive");
  }
  if (d > n) throw std::invalid_argument("layer-cluster model needs d <= n");
  if (clusters > layers) throw std::invalid_argument("more clusters than layers");
  if (!(period > 0.0)) throw std::invalid_argument("period must be positive");
}

SimulatedNetwork generate_dynamic_multilayer_sbm(const SbmSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  GroundTruth truth;
  truth.labels_out = draw_labels(rng, spec.n, spec.d);
  truth.labels_in = draw_labels(rng, spec.n, spec.d);
  const Matrix z_out = membership(truth.labels_out, spec.d);
  const Matrix z_in = membership(truth.labels_in, spec.d);
  // Z'Z is diagonal with community sizes on the diagonal.
  const Vector size_out = z_out.colwise().sum().transpose();
  const Vector size_in = z_in.colwise().sum().transpose();
  truth.X = z_out * size_out.cwiseSqrt().cwiseInverse().asDiagonal();
  truth.Y = z_in * size_in.cwiseSqrt().cwiseInverse().asDiagonal();
  truth.left_scale = size_out.cwiseSqrt();
  truth.right_scale = size_in.cwiseSqrt();
  truth.core.period = spec.period;
  for (Index s = 0; s < spec.layers; ++s) {
    truth.core.mu.push_back(uniform_matrix(rng, spec.d, spec.mu));
    truth.core.delta.push_back(uniform_matrix(rng, spec.d, spec.delta));
    truth.core.phi.push_back(uniform_matrix(rng, spec.d, spec.phi));
    truth.layer_group.push_back(s);
  }
  SimulatedNetwork out;
  out.data = sample_bernoulli(
      spec.n, spec.layers, uniform_grid(spec.m),
      [&](Index s, double t) { return truth.logits(s, t); }, rng());
  out.truth = std::move(truth);
  return out;
}

SimulatedNetwork generate_layer_clusters(const LayerClusterSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  GroundTruth truth;
  truth.X = random_orthonormal(spec.n, spec.d, rng());
  truth.Y = random_orthonormal(spec.n, spec.d, rng());
  truth.left_scale = Vector::Ones(spec.d);
  truth.right_scale = Vector::Ones(spec.d);
  truth.core.period = spec.period;
  const auto scale = static_cast<double>(spec.n);
  for (Index c = 0; c < spec.clusters; ++c) {
    truth.core.mu.push_back(uniform_matrix(rng, spec.d, spec.mu, scale));
    truth.core.delta.push_back(uniform_matrix(rng, spec.d, spec.delta, scale));
    truth.core.phi.push_back(uniform_matrix(rng, spec.d, spec.phi));
  }
  // Every cluster gets at least one layer; the rest are assigned uniformly.
  std::uniform_int_distribution<Index> pick(0, spec.clusters - 1);
  for (int attempt = 0;; ++attempt) {
    truth.layer_group.clear();
    std::vector<bool> seen(static_cast<std::size_t>(spec.clusters), false);
    for (Index s = 0; s < spec.layers; ++s) {
      truth.layer_group.push_back(pick(rng));
      seen[static_cast<std::size_t>(truth.layer_group.back())] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) == seen.end()) break;
    if (attempt == 99) throw DataError("could not populate every layer cluster");
  }
  SimulatedNetwork out;
  out.data = sample_bernoulli(
      spec.n, spec.layers, uniform_grid(spec.m),
      [&](Index s, double t) { return truth.logits(s, t); }, rng());
  out.truth = std::move(truth);
  return out;
}

ObservationSet sample_bernoulli(Index n, Index layers, const std::vector<double>& times,
                                const LogitFunction& logits_at, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ObservationSet out = ObservationSet::zeros(n, layers, times);
  for (Index s = 0; s < layers; ++s) {
    for (Index t = 0; t < out.num_times(); ++t) {
      const Matrix logits = logits_at(s, times[static_cast<std::size_t>(t)]);
      Matrix& a = out.snapshot(s, t);
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) a(i, j) = unit(rng) < sigmoid(logits(i, j)) ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

ObservationSet sample_from_model(const ModelParams& params, const std::vector<double>& times,
                                 std::uint64_t seed) {
  params.validate();
  return sample_bernoulli(
      params.n(), params.layers(), times,
      [&](Index s, double t) { return eval_logits(params, s, t); }, seed);
}

Matrix random_orthonormal(Index n, Index d, std::uint64_t seed) {
  if (d > n) throw std::invalid_argument("random_orthonormal needs d <= n");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix g(n, d);
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < n; ++i) g(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(n, d);
}

}  // namespace mftdn
