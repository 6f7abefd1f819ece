#include "doctest.h"

#include "mftdn/estimation.hpp"
#include "mftdn/inference.hpp"
#include "test_support.hpp"

#include <cmath>

using namespace mftdn;
using namespace mftdn::testing;

namespace {

double wcss(const Matrix& rows, const std::vector<Index>& labels, Index k) {
  double total = 0.0;
  for (Index c = 0; c < k; ++c) {
    Vector centre = Vector::Zero(rows.cols());
    double count = 0.0;
    for (Index i = 0; i < rows.rows(); ++i) {
      if (labels[i] == c) {
        centre += rows.row(i).transpose();
        count += 1.0;
      }
    }
    if (count == 0.0) continue;
    centre /= count;
    for (Index i = 0; i < rows.rows(); ++i) {
      if (labels[i] == c) total += (rows.row(i).transpose() - centre).squaredNorm();
    }
  }
  return total;
}

Matrix pairwise(const Matrix& points) {
  Matrix d(points.rows(), points.rows());
  for (Index i = 0; i < points.rows(); ++i) {
    for (Index j = 0; j < points.rows(); ++j) d(i, j) = (points.row(i) - points.row(j)).norm();
  }
  return d;
}

}  // namespace

TEST_CASE("procrustes") {
  std::mt19937_64 rng(1);
  const Matrix a = gaussian(10, 3, rng);
  CHECK((procrustes(a, a) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix q = random_orthogonal(3, rng);
  const Matrix w = procrustes(a, a * q);
  CHECK((a * w - a * q).norm() <= 1e-10);

  const Matrix b = gaussian(10, 3, rng);
  const double best = (a * procrustes(a, b) - b).norm();
  for (int i = 0; i < 100; ++i) CHECK(best <= (a * random_orthogonal(3, rng) - b).norm() + 1e-12);
  CHECK_THROWS_AS(procrustes(a, gaussian(9, 3, rng)), std::invalid_argument);
}

TEST_CASE("subspace error") {
  std::mt19937_64 rng(2);
  const Matrix x = random_orthonormal(12, 3, 5);
  CHECK(subspace_error(x * random_orthogonal(3, rng), x) <= 1e-12);

  const Matrix e = Matrix::Identity(6, 6);
  CHECK(subspace_error(e.leftCols(2), e.rightCols(2)) == doctest::Approx(1.0).epsilon(1e-15));

  // Dense singular value oracle on the projector difference.
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix u = random_orthonormal(9, 2, 100 + rep);
    const Matrix v = random_orthonormal(9, 2, 200 + rep);
    Eigen::JacobiSVD<Matrix> svd(u * u.transpose() - v * v.transpose());
    CHECK(std::abs(subspace_error(u, v) - svd.singularValues()(0)) <= 1e-10);
  }
  CHECK_THROWS_AS(subspace_error(2.0 * x, x), std::invalid_argument);
}

TEST_CASE("matrix correlation") {
  std::mt19937_64 rng(3);
  const Matrix m = gaussian(3, 4, rng);
  CHECK(matrix_corr(m, m) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(matrix_corr(m, -m) == doctest::Approx(-1.0).epsilon(1e-15));
  Matrix a = Matrix::Zero(2, 2);
  Matrix b = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  b(1, 1) = 1.0;
  CHECK(matrix_corr(a, b) == 0.0);
  CHECK_THROWS_AS(matrix_corr(a, Matrix::Zero(2, 2)), std::invalid_argument);
}

TEST_CASE("core accuracy") {
  std::mt19937_64 rng(4);
  const ModelParams p = random_params(6, 2, 2, 5, rng, KernelSpec::periodic(0.5));
  const CoreFunction truth = [&](Index s, double t) { return eval_R(p, s, t); };
  const Alignment identity{Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  CHECK(acc_R(p, truth, 2, identity) == doctest::Approx(1.0).epsilon(1e-14));

  ModelParams negated = p;
  negated.theta.values() *= -1.0;
  CHECK(acc_R(negated, truth, 2, identity) == doctest::Approx(-1.0).epsilon(1e-14));

  ModelParams noisy = p;
  const double eps = 1e-3;
  for (Index i = 0; i < noisy.theta.size(); ++i) noisy.theta.values()(i) += eps * gaussian(1, 1, rng)(0, 0);
  // Direct correlation over the 100-point grid.
  double dot = 0.0, ee = 0.0, rr = 0.0;
  for (Index s = 0; s < 2; ++s) {
    for (double t : uniform_grid(100)) {
      const Matrix e = eval_R(noisy, s, t);
      const Matrix r = eval_R(p, s, t);
      dot += e.cwiseProduct(r).sum();
      ee += e.squaredNorm();
      rr += r.squaredNorm();
    }
  }
  const double acc = acc_R(noisy, truth, 2, identity);
  CHECK(std::abs(acc - dot / std::sqrt(ee * rr)) <= 1e-12);
  CHECK(acc >= 1.0 - 1e-4);
}

TEST_CASE("alignment recovers orthogonally transformed estimates") {
  SbmSpec spec;
  spec.n = 25;
  spec.m = 6;
  spec.seed = 11;
  const GroundTruth truth = generate_dynamic_multilayer_sbm(spec).truth;
  // Truth written as model parameters: interpolate the cores at the anchors.
  ModelParams p;
  p.X = truth.X;
  p.Y = truth.Y;
  p.anchors = uniform_grid(6);
  p.kernel = KernelSpec::radial();
  p.theta = CoefficientArray(truth.layers(), 3, 6);
  const Matrix g = gram(p.kernel, p.anchors);
  for (Index s = 0; s < truth.layers(); ++s) {
    Matrix values(9, 6);
    for (Index h = 0; h < 6; ++h) {
      const RowMatrix r = truth.R(s, p.anchors[h]);
      values.col(h) = Eigen::Map<const Vector>(r.data(), 9);
    }
    p.theta.layer(s) = g.ldlt().solve(values.transpose()).transpose();
  }
  std::mt19937_64 rng(12);
  const ModelParams q = rotate(p, random_orthogonal(3, rng), random_orthogonal(3, rng));
  const Alignment w = align(q, truth.X, truth.Y);
  CHECK(subspace_error(q.X, truth.X) <= 1e-8);
  CHECK(subspace_error(q.Y, truth.Y) <= 1e-8);
  const CoreFunction at_anchors = [&](Index s, double t) { return eval_R(p, s, t); };
  CHECK(acc_R(q, at_anchors, truth.layers(), w) >= 1.0 - 1e-8);
}

TEST_CASE("k-means") {
  std::mt19937_64 rng(5);
  Matrix clouds(40, 2);
  clouds.topRows(20) = gaussian(20, 2, rng, 0.1);
  clouds.bottomRows(20) = gaussian(20, 2, rng, 0.1).array() + 50.0;
  const KMeansResult two = kmeans(clouds, 2, 1);
  for (Index i = 1; i < 20; ++i) CHECK(two.labels[i] == two.labels[0]);
  for (Index i = 21; i < 40; ++i) CHECK(two.labels[i] == two.labels[20]);
  CHECK(two.labels[0] != two.labels[20]);

  const Matrix few = gaussian(6, 2, rng);
  const KMeansResult each = kmeans(few, 6, 2);
  CHECK(each.wcss == 0.0);

  // Exhaustive search over all 2-partitions.
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix pts = gaussian(8, 2, rng);
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < (1u << 7); ++mask) {
      std::vector<Index> labels(8, 0);
      for (Index i = 0; i < 7; ++i) labels[i] = (mask >> i) & 1u;
      best = std::min(best, wcss(pts, labels, 2));
    }
    const KMeansResult r = kmeans(pts, 2, 10 + rep);
    CHECK(r.wcss == doctest::Approx(best).epsilon(1e-10));
    CHECK(wcss(pts, r.labels, 2) == doctest::Approx(r.wcss).epsilon(1e-10));
  }
  CHECK(kmeans(few, 3, 9).labels == kmeans(few, 3, 9).labels);
  CHECK_THROWS_AS(kmeans(few, 7, 1), std::invalid_argument);
}

TEST_CASE("clustering accuracy") {
  const std::vector<Index> truth{0, 0, 1, 1, 2, 2};
  CHECK(clustering_accuracy(truth, truth) == 1.0);
  CHECK(clustering_accuracy({5, 5, 3, 3, 9, 9}, truth) == 1.0);
  CHECK(clustering_accuracy({0, 0, 0, 0}, {0, 0, 1, 1}) == 0.5);
  CHECK(clustering_accuracy({0, 1, 1, 1, 2, 2}, truth) == doctest::Approx(5.0 / 6.0));
  CHECK_THROWS_AS(clustering_accuracy({0, 1}, truth), std::invalid_argument);

  // Twelve classes go through the assignment solver: a relabeled truth with
  // three points moved scores 33/36.
  std::vector<Index> big_truth;
  std::vector<Index> big_pred;
  for (Index c = 0; c < 12; ++c) {
    for (int i = 0; i < 3; ++i) {
      big_truth.push_back(c);
      big_pred.push_back((c * 5 + 7) % 12);
    }
  }
  big_pred[0] = big_pred[3];
  big_pred[10] = big_pred[20];
  big_pred[35] = big_pred[1];
  CHECK(clustering_accuracy(big_pred, big_truth) == doctest::Approx(33.0 / 36.0));

  // Relabeling the prediction never changes the score.
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<Index> label(0, 3);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Index> p(15), t(15);
    for (auto& v : p) v = label(rng);
    for (auto& v : t) v = label(rng);
    std::vector<Index> renamed(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) renamed[i] = (p[i] + 2) % 4 + 10;
    CHECK(clustering_accuracy(renamed, t) == clustering_accuracy(p, t));
  }
}

TEST_CASE("layer and trajectory features") {
  std::mt19937_64 rng(7);
  ModelParams p = random_params(5, 2, 3, 4, rng, KernelSpec::bernoulli());
  for (Index i = 0; i < 16; ++i) p.theta.values()(p.theta.offset(1, 0, 0) + i) = p.theta.values()(i);
  p.theta.layer(2).setZero();
  const Matrix f = layer_features(p);
  CHECK(f.rows() == 3);
  CHECK(f.cols() == 16);
  CHECK(f.row(0) == f.row(1));
  CHECK(f.row(2).cwiseAbs().maxCoeff() == 0.0);
  for (Index s = 0; s < 3; ++s) {
    for (Index k = 0; k < 2; ++k) {
      for (Index l = 0; l < 2; ++l) {
        for (Index h = 0; h < 4; ++h) CHECK(f(s, (k * 2 + l) * 4 + h) == p.theta(s, k, l, h));
      }
    }
  }

  const std::vector<double> grid = uniform_grid(7);
  const Matrix tf = trajectory_features(p, grid);
  for (Index s = 0; s < 3; ++s) {
    for (Index t = 0; t < 7; ++t) {
      const Matrix r = eval_R(p, s, grid[t]);
      for (Index k = 0; k < 2; ++k) {
        for (Index l = 0; l < 2; ++l) CHECK(std::abs(tf(s, t * 4 + k * 2 + l) - r(k, l)) < 1e-12);
      }
    }
  }
}

TEST_CASE("trajectory distance matrices are metrics") {
  std::mt19937_64 rng(8);
  ModelParams p = random_params(5, 2, 3, 4, rng);
  p.theta.layer(2) = p.theta.layer(0);
  const std::vector<double> grid = uniform_grid(9);
  for (DistanceMode mode : {DistanceMode::per_point, DistanceMode::per_trajectory}) {
    const Matrix d = trajectory_distance_matrix(p, grid, mode);
    CHECK(d.rows() == (mode == DistanceMode::per_point ? 27 : 3));
    CHECK(d == d.transpose());
    CHECK(d.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK(d.minCoeff() >= 0.0);
  }
  const Matrix traj = trajectory_distance_matrix(p, grid, DistanceMode::per_trajectory);
  CHECK(traj(0, 2) == 0.0);
  const CoreFunction core = [&](Index s, double t) { return eval_R(p, s, t); };
  CHECK(std::abs(traj(0, 1) - trajectory_distance(core, 0, core, 1, grid)) < 1e-12);
}

TEST_CASE("classical MDS") {
  Matrix two(2, 2);
  two << 0.0, 3.0, 3.0, 0.0;
  const Matrix c = classical_mds(two, 1);
  CHECK(std::abs(std::abs(c(0, 0)) - 1.5) < 1e-12);
  CHECK(std::abs(c(0, 0) + c(1, 0)) < 1e-12);

  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix pts = gaussian(10, 3, rng);
    const Matrix d = pairwise(pts);
    CHECK((pairwise(classical_mds(d, 3)) - d).cwiseAbs().maxCoeff() <= 1e-8);
  }
  CHECK(classical_mds(Matrix::Zero(4, 4), 2).cwiseAbs().maxCoeff() == 0.0);
  Matrix asym = two;
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(classical_mds(asym, 1), std::invalid_argument);
}

TEST_CASE("hierarchical clustering") {
  Matrix three(3, 3);
  three << 0.0, 0.1, 10.0, 0.1, 0.0, 10.0, 10.0, 10.0, 0.0;
  const Dendrogram t3 = hierarchical_cluster(three);
  REQUIRE(t3.merges.size() == 2);
  CHECK(t3.merges[0].left == 0);
  CHECK(t3.merges[0].right == 1);
  CHECK(t3.merges[0].height == 0.1);
  CHECK(t3.merges[1].left == 2);
  CHECK(t3.merges[1].right == 3);
  CHECK(t3.merges[1].height == 10.0);
  CHECK(t3.cut(2) == std::vector<Index>{0, 0, 1});
  CHECK(t3.cut(1) == std::vector<Index>{0, 0, 0});
  CHECK(t3.cut(3) == std::vector<Index>{0, 1, 2});

  Matrix two(2, 2);
  two << 0.0, 2.0, 2.0, 0.0;
  CHECK(hierarchical_cluster(two).merges.size() == 1);

  std::mt19937_64 rng(10);
  for (Linkage linkage : {Linkage::average, Linkage::single, Linkage::complete}) {
    for (int rep = 0; rep < 10; ++rep) {
      const Dendrogram tree = hierarchical_cluster(pairwise(gaussian(5, 3, rng)), linkage);
      REQUIRE(tree.merges.size() == 4);
      for (std::size_t i = 1; i < tree.merges.size(); ++i) {
        CHECK(tree.merges[i].height >= tree.merges[i - 1].height);
      }
    }
  }
}

TEST_CASE("offline fit against frozen factors") {
  std::mt19937_64 rng(11);
  SbmSpec spec;
  spec.n = 20;
  spec.m = 6;
  spec.layers = 1;
  spec.d = 2;
  spec.seed = 21;
  const ObservationSet data = generate_dynamic_multilayer_sbm(spec).data;
  const ModelParams trained = initialize(data, 2, KernelSpec::radial());
  const OfflineFit same = offline_fit_R(data, trained);
  const ThetaSolveResult direct = solve_theta_convex(data, trained.X, trained.Y, trained.kernel, data.times);
  CHECK(std::abs(same.loss - direct.loss) <= 1e-6);

  ObservationSet wrong = ObservationSet::zeros(19, 1, data.times);
  CHECK_THROWS_AS(offline_fit_R(wrong, trained), DataError);
}

TEST_CASE("offline trajectories stay closer to their own model") {
  const Index n = 30;
  const std::vector<double> grid = uniform_grid(50);
  int closer = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    ModelParams model = random_params(n, 2, 1, 8, rng, KernelSpec::radial(), 1.0);
    model.X = random_orthonormal(n, 2, 1000 + seed) * std::sqrt(static_cast<double>(n));
    model.Y = random_orthonormal(n, 2, 2000 + seed) * std::sqrt(static_cast<double>(n)) / 4.0;
    ModelParams other = model;
    other.theta = random_params(n, 2, 1, 8, rng, KernelSpec::radial(), 1.0).theta;

    const ObservationSet fresh = sample_from_model(model, model.anchors, 500 + seed);
    ModelParams refit = model;
    refit.theta = offline_fit_R(fresh, model).theta;
    const CoreFunction a = [&](Index s, double t) { return eval_R(refit, s, t); };
    const CoreFunction b = [&](Index s, double t) { return eval_R(model, s, t); };
    const CoreFunction c = [&](Index s, double t) { return eval_R(other, s, t); };
    if (trajectory_distance(a, 0, b, 0, grid) < trajectory_distance(a, 0, c, 0, grid)) ++closer;
  }
  CHECK(closer >= 18);
}
