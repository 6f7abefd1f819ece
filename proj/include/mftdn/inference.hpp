#pragma once

#include "mftdn/estimation.hpp"
#include "mftdn/model.hpp"
#include "mftdn/network.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace mftdn {

// Orthogonal W minimizing |A W - B|_F.
template <typename DerivedA, typename DerivedB>
Matrix procrustes(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("procrustes: shapes differ");
  }
  Eigen::JacobiSVD<Matrix> svd(a.transpose() * b, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

// Spectral norm of X_hat X_hat' - X X'; both arguments must be column-orthonormal.
double subspace_error(const Matrix& x_hat, const Matrix& x);

// <vec M1, vec M2> / (|M1|_F |M2|_F)
template <typename Derived1, typename Derived2>
double matrix_corr(const Eigen::MatrixBase<Derived1>& m1, const Eigen::MatrixBase<Derived2>& m2) {
  if (m1.rows() != m2.rows() || m1.cols() != m2.cols()) {
    throw std::invalid_argument("matrix_corr: shapes differ");
  }
  const double n1 = m1.norm();
  const double n2 = m2.norm();
  if (n1 == 0.0 || n2 == 0.0) throw std::invalid_argument("matrix_corr: zero matrix");
  return m1.cwiseProduct(m2).sum() / (n1 * n2);
}

using CoreFunction = std::function<Matrix(Index layer, double t)>;

struct Alignment {
  Matrix W_X;
  Matrix W_Y;
};

Alignment align(const ModelParams& estimate, const Matrix& X, const Matrix& Y);

// Correlation between aligned estimated and true cores, concatenated over all
// layers and `grid_size` evenly spaced times in [0, 1].
double acc_R(const CoreFunction& estimate, const CoreFunction& truth, Index layers,
             const Alignment& alignment, Index grid_size = 100);
double acc_R(const ModelParams& estimate, const CoreFunction& truth, Index layers,
             const Alignment& alignment, Index grid_size = 100);

struct EstimationMetrics {
  double err_x = 0.0;
  double err_y = 0.0;
  double err = 0.0;
  double acc_r = 0.0;
  Alignment alignment;
};

// Estimates given as factors plus a core trajectory, e.g. another ground truth.
EstimationMetrics evaluate_estimate(const Matrix& x_hat, const Matrix& y_hat, const CoreFunction& r_hat,
                                    Index layers, const GroundTruth& truth, Index grid_size = 100);
EstimationMetrics evaluate_estimate(const ModelParams& estimate, const GroundTruth& truth,
                                    Index grid_size = 100);

struct KMeansResult {
  std::vector<Index> labels;
  Matrix centroids;
  double wcss = 0.0;
};

// Lloyd iterations from k-means++ seeds; best of `restarts` runs by within-cluster
// sum of squares.
KMeansResult kmeans(const Matrix& rows, Index k, std::uint64_t seed, int restarts = 16,
                    int max_iters = 300);

// Fraction of matching labels under the best relabeling of `predicted`.
double clustering_accuracy(const std::vector<Index>& predicted, const std::vector<Index>& truth);

// One row per layer: theta coefficients in (k, l, h) order.
Matrix layer_features(const ModelParams& params);

// One row per layer: R_s(t) entries (row-major) at every grid time, concatenated.
Matrix trajectory_features(const ModelParams& params, const std::vector<double>& grid);

enum class DistanceMode { per_point, per_trajectory };

// per_point: (K * |grid|)^2 Frobenius distances between snapshots R_s(t), rows
// ordered layer-major. per_trajectory: K x K Euclidean distances between the
// sampled trajectories.
Matrix trajectory_distance_matrix(const ModelParams& params, const std::vector<double>& grid,
                                  DistanceMode mode);

Matrix classical_mds(const Matrix& distances, Index dim);

struct Merge {
  Index step = 0;
  Index left = 0;
  Index right = 0;
  double height = 0.0;
};

// Agglomerative clustering. Leaves are 0..K-1 and the cluster formed at step i
// gets id K + i.
struct Dendrogram {
  Index leaves = 0;
  std::vector<Merge> merges;

  std::vector<Index> cut(Index k) const;
};

enum class Linkage { average, single, complete };

Dendrogram hierarchical_cluster(const Matrix& distances, Linkage linkage = Linkage::average);

struct OfflineFit {
  CoefficientArray theta;
  double loss = 0.0;
};

// Trajectory coefficients of a new network against frozen factors.
OfflineFit offline_fit_R(const ObservationSet& new_data, const ModelParams& trained,
                         const ThetaSolveOptions& options = {});

// Euclidean distance between two sampled core trajectories.
double trajectory_distance(const CoreFunction& a, Index layer_a, const CoreFunction& b,
                           Index layer_b, const std::vector<double>& grid);

}  // namespace mftdn
