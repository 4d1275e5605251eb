#pragma once

// Multi-restart EM for the ZIPCWM family: E-step posteriors, closed-form
// M-steps for the weights and covariate blocks, and an IRLS inner solver for
// the Poisson regression coefficients.

#include "zipcwm/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace zipcwm {

/// n x G posterior membership probabilities; rows are simplexes.
struct Responsibilities {
  Eigen::MatrixXd z;
};

struct EmConfig {
  int max_iterations = 500;
  double loglik_rel_tolerance = 1e-8;
  int irls_max_steps = 25;
  double irls_grad_tolerance = 1e-8;
  int restarts = 10;
  std::uint64_t seed = 0;
  double ridge = 1e-8;
  // Worker threads for independent restarts; 0 picks the hardware concurrency.
  int threads = 1;

  void validate() const;
};

// Thresholds that are part of the fitting contract rather than user knobs.
inline constexpr double kEmptyComponentWeight = 1e-8;
inline constexpr double kCovarianceFloor = 1e-6;
inline constexpr double kAlphaFloor = 1e-8;
inline constexpr double kAscentSlack = 1e-6;

struct RestartOutcome {
  int index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  double final_loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string failure;
};

struct FitReport {
  ModelSpec spec;
  MixtureParameters params;  // canonicalized
  std::vector<double> loglik_trace;
  double final_loglik = 0.0;
  double complete_loglik = 0.0;
  Responsibilities responsibilities;
  std::vector<int> map_labels;  // 1-based
  bool converged = false;
  int iterations_used = 0;
  int restart_index_of_best = 0;
  int free_parameters = 0;
  RankReport rank;
  bool ridge_changed_solution = false;
  std::vector<RestartOutcome> restarts;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------

double observed_loglik(const Dataset& data, const MixtureParameters& params,
                       const ModelSpec& spec);

double complete_data_loglik(const Dataset& data, const MixtureParameters& params,
                            const ModelSpec& spec, const Responsibilities& resp);

Responsibilities e_step(const Dataset& data, const MixtureParameters& params,
                        const ModelSpec& spec);

/// E-step that also returns the observed log-likelihood accumulated on the way.
struct EStep {
  Responsibilities resp;
  double loglik = 0.0;
};
EStep e_step_with_loglik(const Dataset& data, const MixtureParameters& params,
                         const ModelSpec& spec);

struct IrlsOptions {
  int max_steps = 25;
  double grad_tolerance = 1e-8;
  double ridge = 1e-8;
};

struct IrlsResult {
  Eigen::VectorXd beta;
  double score_norm = 0.0;  // infinity norm of the weighted score at beta
  int steps = 0;
  bool converged = false;
  // Damped and undamped Newton solutions differed by more than 1e-6 on the last step.
  bool ridge_changed_solution = false;
};

/// Weighted Poisson regression by Fisher scoring. Each step solves
/// (X'SX + ridge I) step = score with S = diag(z mu), halving the step until
/// the weighted log-likelihood does not decrease.
IrlsResult irls_update_beta(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& weights, const Eigen::VectorXd& beta_init,
                            const IrlsOptions& options = {});

/// sum_i z_i (y_i x_i'beta - exp(x_i'beta)); the beta-dependent part of the
/// weighted Poisson log-likelihood.
double weighted_poisson_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& weights, const Eigen::VectorXd& beta);
Eigen::VectorXd weighted_poisson_score(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& weights,
                                       const Eigen::VectorXd& beta);

Eigen::VectorXd m_step_pi(const Responsibilities& resp);

struct GaussianMoments {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};
GaussianMoments m_step_gaussian(const Eigen::MatrixXd& Q, const Eigen::VectorXd& weights,
                                CovarianceStructure structure);

std::vector<Eigen::VectorXd> m_step_alpha(const std::vector<CategoricalBlock>& W,
                                          const Eigen::VectorXd& weights);

/// Initial responsibilities for one restart (k-means seeding, see fit_em).
Responsibilities initial_responsibilities(const Dataset& data, const ModelSpec& spec,
                                          std::uint64_t seed);

/// Full M-step given responsibilities. `previous` supplies warm starts for
/// IRLS; pass nullptr on the first iteration.
MixtureParameters m_step(const Dataset& data, const Eigen::MatrixXd& design,
                         const ModelSpec& spec, const Responsibilities& resp,
                         const MixtureParameters* previous, const EmConfig& config,
                         bool* ridge_changed = nullptr);

/// Runs one EM restart from the given responsibilities. Throws NumericalError
/// subclasses when the restart cannot continue.
struct SingleRun {
  MixtureParameters params;
  Responsibilities resp;
  std::vector<double> trace;
  bool converged = false;
  int iterations = 0;
  bool ridge_changed_solution = false;
};
SingleRun run_em(const Dataset& data, const ModelSpec& spec, const EmConfig& config,
                 Responsibilities init);

FitReport fit_em(const Dataset& data, const ModelSpec& spec, const EmConfig& config);

/// Deterministic per-index seed derivation (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace zipcwm
