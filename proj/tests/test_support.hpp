#pragma once

#include "mftdn/model.hpp"
#include "mftdn/network.hpp"

#include <random>

namespace mftdn::testing {

inline Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

inline Matrix random_orthogonal(Index d, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(d, d, rng));
  return qr.householderQ();
}

inline ModelParams random_params(Index n, Index d, Index layers, Index m, std::mt19937_64& rng,
                                 KernelSpec kernel = KernelSpec::radial(), double theta_scale = 0.5) {
  ModelParams p;
  p.X = gaussian(n, d, rng);
  p.Y = gaussian(n, d, rng);
  p.anchors = uniform_grid(m);
  p.kernel = kernel;
  p.theta = CoefficientArray(layers, d, m);
  std::normal_distribution<double> normal(0.0, theta_scale);
  for (Index i = 0; i < p.theta.size(); ++i) p.theta.values()(i) = normal(rng);
  return p;
}

inline ObservationSet random_network(Index n, Index layers, const std::vector<double>& times,
                                  std::mt19937_64& rng) {
  ObservationSet data = ObservationSet::zeros(n, layers, times);
  std::bernoulli_distribution coin(0.4);
  for (auto& a : data.adjacency) {
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) a(i, j) = coin(rng) ? 1.0 : 0.0;
    }
  }
  return data;
}

// Applies (X W_X, Y W_Y, W_X' R W_Y) through the linear representer map.
inline ModelParams rotate(const ModelParams& p, const Matrix& wx, const Matrix& wy) {
  ModelParams out = p;
  out.X = p.X * wx;
  out.Y = p.Y * wy;
  const Index d = p.dim();
  for (Index s = 0; s < p.layers(); ++s) {
    for (Index h = 0; h < p.num_anchors(); ++h) {
      Matrix block(d, d);
      for (Index k = 0; k < d; ++k) {
        for (Index l = 0; l < d; ++l) block(k, l) = p.theta(s, k, l, h);
      }
      const Matrix moved = wx.transpose() * block * wy;
      for (Index k = 0; k < d; ++k) {
        for (Index l = 0; l < d; ++l) out.theta(s, k, l, h) = moved(k, l);
      }
    }
  }
  return out;
}

}  // namespace mftdn::testing
