#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "copem/copula.hpp"
#include "copem/dataset.hpp"

namespace copem {

/// Per-observation conditional second-moment matrix V_l and the sample mean
/// S = (1/N) sum V_l that the correlation update consumes.
struct EStepStatistic {
  std::vector<SymMatrix> per_row;
  SymMatrix mean;
};

/// Inner optimizer settings for the marginal-parameter update.
struct ThetaOptConfig {
  int max_steps = 200;
  double grad_tol = 1e-6;  // infinity norm of the objective gradient
};

struct EcmConfig {
  int g = 15;                    // mixture components per marginal
  int n_max = 25;                // hard iteration cap
  double eps_converged = 1e-5;   // L1 threshold on successive correlation matrices
  int m_small = 20;              // Monte Carlo draws per row, early phase
  int m_large = 1000;            // draws per row, late phase
  int n_small = 20;              // iterations run at m_small
  int n_late = 5;                // iterations run at m_large
  std::uint64_t master_seed = 0;
  ThetaOptConfig theta_opt;
  int workers = 1;
};

struct EcmIterate {
  SymMatrix sigma;
  MarginalSet theta;
  double eps = 0.0;        // ||dSigma||_1 + ||dtheta||_1, diagnostics only
  double eps_sigma = 0.0;  // ||dSigma||_1, drives stopping
  double objective = 0.0;  // Monte Carlo objective at the accepted iterate
  int m_used = 0;
  int theta_steps = 0;     // inner optimizer steps taken this iteration
};

struct EcmTrace {
  std::vector<EcmIterate> iterations;
  std::vector<std::string> warnings;
  std::string stop_reason;
};

/// Monte Carlo completions of an incomplete dataset under a fixed model.
/// Observed cells are stored once per row; rows with missing cells carry m
/// draws of the missing block.  Fully observed rows carry no draws and enter
/// objectives with weight one (their m copies would be identical).
struct CompletedSamples {
  struct Row {
    IndexPartition part;
    std::vector<double> x_obs;      // values of part.obs, in obs order
    std::vector<double> mis_draws;  // flat m x |mis|, draw-major
    int m = 0;                      // 0 for fully observed rows
  };
  std::vector<Row> rows;
  int p = 0;
};

/// Conditional second moment E[z z^T | x_obs] under the current model,
/// assembled in original coordinate order.  Fully observed rows reduce to the
/// outer product z z^T; fully missing rows to sigma itself.
SymMatrix e_step_v(const CopulaModel& model_t, const IndexPartition& part,
                   const std::vector<double>& x_obs);

/// Same with the observed block already on the gaussian scale.
SymMatrix e_step_v_gaussian(const SymMatrix& sigma, const IndexPartition& part,
                            const std::vector<double>& z_obs);

/// V_l for every row of the dataset plus their mean.
EStepStatistic e_step(const CopulaModel& model_t, const IncompleteDataset& data, int workers = 1);

/// Correlation update P S P; if normalization leaves the matrix numerically
/// non-PD, off-diagonals are shrunk by 0.999 (at most 100 times) and a warning
/// is appended.
CorrelationMatrix sigma_update(const EStepStatistic& stat,
                               std::vector<std::string>* warnings = nullptr);

/// Draws m completions of every row under model_t; per-row streams derive
/// from (seed, iteration, row), so results do not depend on scheduling.
CompletedSamples complete_dataset(const CopulaModel& model_t, const IncompleteDataset& data, int m,
                                  std::uint64_t seed, std::uint64_t iteration, int workers = 1);

/// Monte Carlo marginal objective: sum over rows of the mean over draws of
///   -1/2 z_theta^T (K - I) z_theta + sum_j ln f_j(x_j).
double theta_objective(const MarginalSet& theta, const SymMatrix& k_next,
                       const CompletedSamples& mc, int workers = 1);

/// Analytic gradient of theta_objective with respect to every center,
/// flattened marginal-by-marginal.
std::vector<double> theta_objective_grad(const MarginalSet& theta, const SymMatrix& k_next,
                                         const CompletedSamples& mc, int workers = 1);

struct ThetaUpdateResult {
  MarginalSet theta;
  double objective = 0.0;
  int steps = 0;
  bool converged = false;  // gradient tolerance reached
};

/// Maximizes the Monte Carlo objective by gradient ascent with Armijo
/// backtracking (c = 1e-4, shrink 0.5), re-sorting centers after every step.
/// Never returns an iterate below the starting objective.
ThetaUpdateResult theta_update(const MarginalSet& theta_t, const SymMatrix& k_next,
                               const CompletedSamples& mc, const ThetaOptConfig& opt,
                               std::vector<std::string>* warnings = nullptr, int workers = 1);

struct EcmResult {
  CopulaModel model;
  EcmTrace trace;
};

/// The full driver: iterates E-step, correlation update, conditional
/// re-sampling under the pre-update parameters, and the marginal update.
/// Stopping tests ||dSigma||_1 < eps_converged only once the m_large phase
/// has begun.
EcmResult run_ecm(const IncompleteDataset& data, const EcmConfig& cfg);

/// Correlation-only EM over data already on the gaussian scale (observed
/// cells of z_data are N(0,1) images); marginals stay fixed.  Used by the
/// baselines that pin marginals to ecdfs or to the truth.
struct SigmaOnlyResult {
  SymMatrix sigma;
  int iterations = 0;
  bool converged = false;
};
SigmaOnlyResult sigma_only_em(const IncompleteDataset& z_data, double eps_converged = 1e-5,
                              int max_iterations = 200, int workers = 1);

/// Trace rows as CSV: iteration, eps, eps_sigma, flattened sigma, objective.
std::string trace_to_csv(const EcmTrace& trace);

}  // namespace copem
