#pragma once

#include "mftdn/kernels.hpp"
#include "mftdn/model.hpp"
#include "mftdn/network.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mftdn {

struct Gradient {
  Matrix X;
  Matrix Y;
  CoefficientArray theta;
};

struct LossAndGradient {
  double loss = 0.0;
  Gradient grad;
};

// Full chain-rule gradient of the negative log-likelihood in (X, Y, theta).
Gradient gradient(const ModelParams& params, const ObservationSet& data);
LossAndGradient loss_and_gradient(const ModelParams& params, const ObservationSet& data);

// Scales X, Y and theta by (C / sigma)^(1/3) when sigma exceeds C.
ModelParams rescale_to_constraint(const ModelParams& params, double constraint);

// Replaces X, Y by their leading left singular vectors and transforms theta so
// that every logit matrix X R_s(t) Y' is unchanged. Throws NumericalError when
// X or Y has rank below d.
ModelParams orthogonalize_output(const ModelParams& params);

struct SpectralFactors {
  Matrix X;
  Matrix Y;
};

// Leading-subspace estimate from per-snapshot SVDs of A - 1/2 aggregated by a
// second SVD. Unobserved entries are filled with 1/2.
SpectralFactors spectral_init(const ObservationSet& data, Index d);

struct ThetaSolveOptions {
  // Weight of the penalty ridge * sum |R_{s,k,l}|_H^2. A small positive value
  // keeps the coefficients bounded when the Gram matrix is ill-conditioned.
  double ridge = 1e-4;
  Index max_iters = 200;
  double rel_tol = 1e-8;
};

struct ThetaSolveResult {
  CoefficientArray theta;
  // Objective value including the ridge term.
  double objective = 0.0;
  double loss = 0.0;
  Index iterations = 0;
  bool converged = false;
};

// Minimizes the loss over theta alone with X, Y frozen (a convex problem),
// by damped Newton steps with backtracking line search.
ThetaSolveResult solve_theta_convex(const ObservationSet& data, const Matrix& X, const Matrix& Y,
                                    const KernelSpec& kernel, const std::vector<double>& anchors,
                                    const ThetaSolveOptions& options = {},
                                    const CoefficientArray* start = nullptr);

enum class InitMethod { spectral, random, provided };

std::string to_string(InitMethod init);
InitMethod parse_init_method(const std::string& name);

struct FitConfig {
  Index d = 2;
  // Constraint on sigma; defaults to twice sigma at the initial parameters.
  std::optional<double> constraint;
  double step_size = 1e-3;
  Index max_iters = 300;
  double rel_tol = 1e-7;
  std::uint64_t seed = 0;
  InitMethod init = InitMethod::spectral;
  std::optional<ModelParams> initial;
  ThetaSolveOptions theta_solve;
  // Maximum number of step halvings tried in one iteration.
  int max_halvings = 20;

  void validate() const;
};

struct FitReport {
  ModelParams params;
  std::vector<double> loss_trace;
  std::vector<double> sigma_trace;
  double constraint = 0.0;
  double sigma_final = 0.0;
  double final_loss = 0.0;
  double step_size_final = 0.0;
  Index iterations_run = 0;
  bool converged = false;
  double bic = 0.0;
  double seconds = 0.0;
};

// Initial parameters: spectral factors followed by the convex theta solve.
ModelParams initialize(const ObservationSet& data, Index d, const KernelSpec& kernel,
                       const ThetaSolveOptions& options = {});

ModelParams random_init(const ObservationSet& data, Index d, const KernelSpec& kernel,
                        std::uint64_t seed);

FitReport fit(const ObservationSet& data, const FitConfig& config, const KernelSpec& kernel);

double bic(double loss, Index d, Index n, Index layers, Index m);

struct BicRow {
  Index d = 0;
  KernelSpec kernel;
  double bic = 0.0;
  double loss = 0.0;
  bool ok = false;
  std::string error;
};

struct SelectionResult {
  Index best_d = 0;
  KernelSpec best_kernel;
  std::vector<BicRow> table;
  FitReport best_fit;
};

// Index of the smallest BIC among successful rows; BICs within 1e-12 (relative)
// are ties, resolved towards the smaller d and then the earlier row.
std::optional<std::size_t> best_bic_row(const std::vector<BicRow>& table);

// Fits every (d, kernel) pair and returns the pair with the smallest BIC; ties
// go to the smaller d, then to the earlier kernel in the candidate list.
SelectionResult select_model(const ObservationSet& data, const std::vector<Index>& candidate_ds,
                             const std::vector<KernelSpec>& candidate_kernels,
                             const FitConfig& base = {});

}  // namespace mftdn
