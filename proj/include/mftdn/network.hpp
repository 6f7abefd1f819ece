#pragma once

#include "mftdn/types.hpp"

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace mftdn {

struct EdgeKey {
  Index layer = 0;
  Index src = 0;
  Index dst = 0;
  auto operator<=>(const EdgeKey&) const = default;
};

// Observed adjacency data of a dynamic multilayer network.
//
// Dense layout: one n x n matrix per (layer, time index), stored layer-major in
// `adjacency`; an optional `mask` of the same layout marks observed entries.
// Sparse (unaligned) layout: `unaligned` maps every edge (layer, src, dst) to the
// time indices at which it was observed and the value seen there; `adjacency`
// and `mask` are then empty and entries not listed are unobserved.
struct ObservationSet {
  Index n = 0;
  Index layers = 0;
  std::vector<double> times;
  std::vector<Matrix> adjacency;
  std::vector<Mask> mask;
  std::map<EdgeKey, std::map<Index, double>> unaligned;
  // Drop self-loops A_{s,i,i} from every loss and gradient.
  bool exclude_diagonal = false;

  Index num_times() const { return static_cast<Index>(times.size()); }
  bool is_sparse() const { return adjacency.empty() && !unaligned.empty(); }
  bool has_mask() const { return !mask.empty(); }

  Index block(Index s, Index t) const { return s * num_times() + t; }
  const Matrix& snapshot(Index s, Index t) const { return adjacency[block(s, t)]; }
  Matrix& snapshot(Index s, Index t) { return adjacency[block(s, t)]; }

  // Dense layout only.
  bool observed(Index s, Index t, Index i, Index j) const {
    if (exclude_diagonal && i == j) return false;
    return mask.empty() || mask[block(s, t)](i, j) != 0;
  }

  // Number of (layer, time, src, dst) entries that enter the loss.
  Index observed_count() const;

  // Checks shapes and the time grid; with `binary`, also that every value is 0 or 1.
  void validate(bool binary = true) const;

  // Fully observed dense data of zeros on the given grid.
  static ObservationSet zeros(Index n, Index layers, std::vector<double> times);

  // Converts the sparse layout to dense adjacency plus mask on the same grid.
  ObservationSet to_dense() const;
};

// Affine map of a strictly increasing grid onto [0, 1].
std::vector<double> normalize_times(std::span<const double> raw);

// Evenly spaced grid on [0, 1]; {0} when m == 1.
std::vector<double> uniform_grid(Index m);

// Time-varying d x d cores of the form mu + delta * sin(2 pi t / M + phi), one per group.
struct SinusoidalCore {
  std::vector<Matrix> mu;
  std::vector<Matrix> delta;
  std::vector<Matrix> phi;
  double period = 3.0;

  Index groups() const { return static_cast<Index>(mu.size()); }
  Matrix value(Index group, double t) const;
};

// Ground truth behind a simulated network: logits are X R_s(t) Y' with
// R_s(t) = diag(left_scale) * core_{group(s)}(t) * diag(right_scale).
struct GroundTruth {
  Matrix X;
  Matrix Y;
  SinusoidalCore core;
  std::vector<Index> layer_group;
  Vector left_scale;
  Vector right_scale;
  std::vector<Index> labels_out;
  std::vector<Index> labels_in;

  Index layers() const { return static_cast<Index>(layer_group.size()); }
  Index dim() const { return X.cols(); }
  Matrix R(Index s, double t) const;
  Matrix logits(Index s, double t) const { return X * R(s, t) * Y.transpose(); }
};

struct UniformRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct SbmSpec {
  Index n = 50;
  Index d = 3;
  Index m = 20;
  Index layers = 4;
  double period = 3.0;
  UniformRange mu{-10.0, 10.0};
  UniformRange delta{-1.0, 1.0};
  UniformRange phi{0.0, 3.141592653589793};
  std::uint64_t seed = 0;

  void validate() const;
  // Settings used for the vertex community detection experiment.
  static SbmSpec community_detection(Index n, Index m, std::uint64_t seed);
};

// Layers fall into `clusters` groups sharing one core trajectory; X and Y are
// random orthonormal. mu and delta ranges are multiplied by n.
struct LayerClusterSpec {
  Index n = 30;
  Index d = 2;
  Index m = 15;
  Index layers = 10;
  Index clusters = 3;
  double period = 3.0;
  UniformRange mu{0.15, 0.15};
  UniformRange delta{0.15, 0.15};
  UniformRange phi{0.0, 3.141592653589793};
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimulatedNetwork {
  ObservationSet data;
  GroundTruth truth;
};

SimulatedNetwork generate_dynamic_multilayer_sbm(const SbmSpec& spec);
SimulatedNetwork generate_layer_clusters(const LayerClusterSpec& spec);

using LogitFunction = std::function<Matrix(Index layer, double t)>;

// Independent Bernoulli(sigmoid(logit)) draws, in layer, time, row-major order.
ObservationSet sample_bernoulli(Index n, Index layers, const std::vector<double>& times,
                                const LogitFunction& logits_at, std::uint64_t seed);

struct ModelParams;

// Draws a network from fitted or hand-built model parameters.
ObservationSet sample_from_model(const ModelParams& params, const std::vector<double>& times,
                                 std::uint64_t seed);

// Random n x d matrix with orthonormal columns.
Matrix random_orthonormal(Index n, Index d, std::uint64_t seed);

}  // namespace mftdn
