#include "doctest.h"

#include "mftdn/model.hpp"
#include "test_support.hpp"

#include <cmath>
#include <numbers>

using namespace mftdn;
using namespace mftdn::testing;

namespace {

ModelParams scalar_params(double x, double y, double theta, double anchor = 0.5) {
  ModelParams p;
  p.X = Matrix::Constant(1, 1, x);
  p.Y = Matrix::Constant(1, 1, y);
  p.anchors = {anchor};
  p.kernel = KernelSpec::radial();
  p.theta = CoefficientArray(1, 1, 1);
  p.theta(0, 0, 0, 0) = theta;
  return p;
}

}  // namespace

TEST_CASE("eval_R follows the representer form") {
  std::mt19937_64 rng(1);
  ModelParams p = random_params(4, 3, 2, 5, rng, KernelSpec::periodic(0.4));
  ModelParams zero = p;
  zero.theta.values().setZero();
  CHECK(eval_R(zero, 1, 0.37).cwiseAbs().maxCoeff() == 0.0);

  ModelParams one;
  one.X = Matrix::Identity(3, 2);
  one.Y = Matrix::Identity(3, 2);
  one.anchors = {0.3};
  one.kernel = KernelSpec::radial();
  one.theta = CoefficientArray(1, 2, 1);
  one.theta(0, 1, 0, 0) = 1.0;
  for (double t : {0.0, 0.3, 0.71, 1.0}) {
    const Matrix r = eval_R(one, 0, t);
    CHECK(r(1, 0) == doctest::Approx(std::exp(-std::abs(t - 0.3))));
    CHECK(r(0, 0) == 0.0);
    CHECK(r(0, 1) == 0.0);
    CHECK(r(1, 1) == 0.0);
  }

  // Naive quadruple-loop oracle at an anchor and between anchors.
  for (double t : {p.anchors[2], 0.123}) {
    for (Index s = 0; s < 2; ++s) {
      const Matrix r = eval_R(p, s, t);
      for (Index k = 0; k < 3; ++k) {
        for (Index l = 0; l < 3; ++l) {
          double ref = 0.0;
          for (Index h = 0; h < 5; ++h) ref += p.theta(s, k, l, h) * kernel_eval(p.kernel, t, p.anchors[h]);
          CHECK(std::abs(r(k, l) - ref) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("eval_logits equals X R Y'") {
  ModelParams p;
  p.X = Matrix::Identity(4, 2);
  p.Y = Matrix::Identity(4, 2);
  p.anchors = {0.0, 1.0};
  p.kernel = KernelSpec::radial();
  p.theta = CoefficientArray(1, 2, 2);
  p.theta.values() << 1, 2, 3, 4, 5, 6, 7, 8;
  const Matrix logits = eval_logits(p, 0, 0.5);
  const Matrix r = eval_R(p, 0, 0.5);
  CHECK((logits.topLeftCorner(2, 2) - r).cwiseAbs().maxCoeff() == 0.0);
  CHECK(logits.rightCols(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(logits.bottomRows(2).cwiseAbs().maxCoeff() == 0.0);

  ModelParams zero = p;
  zero.theta.values().setZero();
  CHECK(eval_logits(zero, 0, 0.2).cwiseAbs().maxCoeff() == 0.0);

  std::mt19937_64 rng(3);
  const ModelParams q = random_params(3, 2, 1, 4, rng);
  const Matrix got = eval_logits(q, 0, 0.6);
  const Matrix rq = eval_R(q, 0, 0.6);
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) {
      double ref = 0.0;
      for (Index k = 0; k < 2; ++k) {
        for (Index l = 0; l < 2; ++l) ref += q.X(i, k) * rq(k, l) * q.Y(j, l);
      }
      CHECK(std::abs(got(i, j) - ref) < 1e-12);
    }
  }
}

TEST_CASE("sigmoid and probabilities") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(1000.0) == 1.0);
  CHECK(sigmoid(-1000.0) == 0.0);
  CHECK(std::abs(sigmoid(std::log(3.0)) - 0.75) < 1e-15);
  CHECK(log1p_exp(800.0) == 800.0);
  CHECK(std::isfinite(log1p_exp(-800.0)));

  const ModelParams p = scalar_params(1.0, 1.0, 1000.0, 0.5);
  const Matrix probs = eval_probs(p, 0, 0.5);
  CHECK(probs(0, 0) == 1.0);
  CHECK(eval_probs(scalar_params(1.0, 1.0, 0.0), 0, 0.1)(0, 0) == 0.5);
}

TEST_CASE("negative log-likelihood on scalar and toy networks") {
  ObservationSet one = ObservationSet::zeros(1, 1, {0.5});
  one.snapshot(0, 0)(0, 0) = 1.0;
  const ModelParams zero = scalar_params(1.0, 1.0, 0.0);
  CHECK(std::abs(neg_log_likelihood(zero, one) - 0.6931471805599453) < 1e-15);
  one.snapshot(0, 0)(0, 0) = 0.0;
  CHECK(std::abs(neg_log_likelihood(zero, one) - 0.6931471805599453) < 1e-15);

  // Bernoulli log-density oracle: -sum [a log p + (1 - a) log(1 - p)].
  std::mt19937_64 rng(9);
  const ModelParams p = random_params(2, 1, 2, 3, rng);
  const ObservationSet data = random_network(2, 2, p.anchors, rng);
  double ref = 0.0;
  for (Index s = 0; s < 2; ++s) {
    for (Index t = 0; t < 3; ++t) {
      const Matrix logits = eval_logits(p, s, p.anchors[t]);
      for (Index i = 0; i < 2; ++i) {
        for (Index j = 0; j < 2; ++j) {
          const double prob = 1.0 / (1.0 + std::exp(-logits(i, j)));
          const double a = data.snapshot(s, t)(i, j);
          ref -= a * std::log(prob) + (1.0 - a) * std::log(1.0 - prob);
        }
      }
    }
  }
  CHECK(std::abs(neg_log_likelihood(p, data) - ref) < 1e-10);
}

TEST_CASE("every entry contributes a non-negative cross-entropy") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> logit(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = logit(rng);
    CHECK(bernoulli_nll(0.0, x) >= 0.0);
    CHECK(bernoulli_nll(1.0, x) >= 0.0);
  }
}

TEST_CASE("masked entries never influence the loss") {
  std::mt19937_64 rng(21);
  const ModelParams p = random_params(5, 2, 2, 4, rng);
  ObservationSet data = random_network(5, 2, p.anchors, rng);
  data.mask.assign(data.adjacency.size(), Mask::Ones(5, 5));
  std::bernoulli_distribution drop(0.3);
  for (auto& m : data.mask) {
    for (Index j = 0; j < 5; ++j) {
      for (Index i = 0; i < 5; ++i) m(i, j) = drop(rng) ? 0 : 1;
    }
  }
  const double before = neg_log_likelihood(p, data);
  for (std::size_t b = 0; b < data.adjacency.size(); ++b) {
    for (Index j = 0; j < 5; ++j) {
      for (Index i = 0; i < 5; ++i) {
        if (data.mask[b](i, j) == 0) data.adjacency[b](i, j) = 1.0 - data.adjacency[b](i, j);
      }
    }
  }
  CHECK(neg_log_likelihood(p, data) == before);

  data.exclude_diagonal = true;
  const double no_diag = neg_log_likelihood(p, data);
  for (auto& a : data.adjacency) a.diagonal() = Vector::Ones(5) - a.diagonal();
  CHECK(neg_log_likelihood(p, data) == no_diag);
}

TEST_CASE("sigma is the sum of column-norm weighted RKHS norms") {
  CHECK(sigma(scalar_params(2.0, 3.0, 0.0)) == 0.0);
  // K(h, h) = 1 for the radial kernel.
  CHECK(sigma(scalar_params(2.0, 3.0, 5.0)) == doctest::Approx(30.0).epsilon(1e-15));

  std::mt19937_64 rng(8);
  ModelParams p = random_params(6, 2, 3, 4, rng, KernelSpec::bernoulli());
  const double base = sigma(p);
  p.X *= 2.5;
  CHECK(sigma(p) == doctest::Approx(2.5 * base).epsilon(1e-13));
}

TEST_CASE("probabilities are invariant to orthogonal reparameterization") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    const ModelParams p = random_params(6, 3, 2, 4, rng, KernelSpec::periodic(0.5));
    const ModelParams q = rotate(p, random_orthogonal(3, rng), random_orthogonal(3, rng));
    for (Index s = 0; s < 2; ++s) {
      for (double t : {0.0, 0.33, 1.0}) {
        CHECK((eval_probs(p, s, t) - eval_probs(q, s, t)).cwiseAbs().maxCoeff() <= 1e-10);
      }
    }
  }
}

TEST_CASE("eval_R is Lipschitz in t for radial and periodic kernels") {
  std::mt19937_64 rng(6);
  for (const KernelSpec k : {KernelSpec::radial(), KernelSpec::periodic(0.3)}) {
    const ModelParams p = random_params(3, 2, 1, 6, rng, k);
    const double kernel_lipschitz =
        k.family == KernelFamily::radial ? 1.0 : std::numbers::pi / k.period;
    const std::vector<double> grid = uniform_grid(401);
    for (Index kk = 0; kk < 2; ++kk) {
      for (Index l = 0; l < 2; ++l) {
        const double bound = kernel_lipschitz * p.theta.slice(0, kk, l).cwiseAbs().sum();
        for (std::size_t i = 1; i < grid.size(); ++i) {
          const double diff = std::abs(eval_R(p, 0, grid[i])(kk, l) - eval_R(p, 0, grid[i - 1])(kk, l));
          REQUIRE(diff <= bound * (grid[i] - grid[i - 1]) + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("parameter validation and compatibility") {
  std::mt19937_64 rng(2);
  ModelParams p = random_params(4, 2, 2, 3, rng);
  CHECK_NOTHROW(p.validate());
  ModelParams bad = p;
  bad.Y = Matrix::Zero(4, 3);
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = p;
  bad.X(0, 0) = std::nan("");
  CHECK_THROWS_AS(bad.validate(), DataError);

  const ObservationSet wrong_n = ObservationSet::zeros(5, 2, p.anchors);
  CHECK_THROWS_AS(neg_log_likelihood(p, wrong_n), DataError);
  const ObservationSet wrong_k = ObservationSet::zeros(4, 3, p.anchors);
  CHECK_THROWS_AS(neg_log_likelihood(p, wrong_k), DataError);
}
