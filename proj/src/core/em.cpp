#include "zipcwm/em.hpp"

#include "zipcwm/error.hpp"

#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <thread>

namespace zipcwm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_shapes(const Dataset& data, const ModelSpec& spec) {
  spec.validate();
  if (data.size() == 0) throw DataError("dataset has no observations");
}

Eigen::VectorXd starting_beta(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& w) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
  const double total = w.sum();
  const double mean = total > 0.0 ? w.dot(y) / total : 1.0;
  beta[0] = std::log(std::max(mean, 1e-3));
  return beta;
}

}  // namespace

void EmConfig::validate() const {
  if (max_iterations < 1) throw UsageError("max_iterations must be positive");
  if (!(loglik_rel_tolerance > 0.0)) throw UsageError("loglik_rel_tolerance must be positive");
  if (irls_max_steps < 1) throw UsageError("irls_max_steps must be positive");
  if (!(irls_grad_tolerance > 0.0)) throw UsageError("irls_grad_tolerance must be positive");
  if (restarts < 1) throw UsageError("restarts must be positive");
  if (!(ridge >= 0.0)) throw UsageError("ridge must be nonnegative");
  if (threads < 0) throw UsageError("threads must be nonnegative");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Likelihoods and E-step

EStep e_step_with_loglik(const Dataset& data, const MixtureParameters& params,
                         const ModelSpec& spec) {
  check_shapes(data, spec);
  const MixtureDensity density(params, spec);
  const Eigen::MatrixXd design = design_for(data, spec);
  const Eigen::Index n = data.size();
  const int G = spec.components;

  EStep out;
  out.resp.z.resize(n, G);
  std::vector<double> terms(static_cast<std::size_t>(G));
  double loglik = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    density.row_terms(data, design, i, terms);
    const double total = log_sum_exp(terms);
    if (!std::isfinite(total))
      throw NumericalError("observation " + std::to_string(i + 1) +
                           " has zero density under every component");
    double row_sum = 0.0;
    for (int g = 0; g < G; ++g) {
      const double v = std::exp(terms[static_cast<std::size_t>(g)] - total);
      out.resp.z(i, g) = v;
      row_sum += v;
    }
    out.resp.z.row(i) /= row_sum;
    loglik += total;
  }
  out.loglik = loglik;
  return out;
}

Responsibilities e_step(const Dataset& data, const MixtureParameters& params,
                        const ModelSpec& spec) {
  return e_step_with_loglik(data, params, spec).resp;
}

double observed_loglik(const Dataset& data, const MixtureParameters& params,
                       const ModelSpec& spec) {
  check_shapes(data, spec);
  const MixtureDensity density(params, spec);
  const Eigen::MatrixXd design = design_for(data, spec);
  std::vector<double> terms(static_cast<std::size_t>(spec.components));
  double loglik = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    density.row_terms(data, design, i, terms);
    loglik += log_sum_exp(terms);
  }
  if (!std::isfinite(loglik)) throw NumericalError("observed log-likelihood is not finite");
  return loglik;
}

double complete_data_loglik(const Dataset& data, const MixtureParameters& params,
                            const ModelSpec& spec, const Responsibilities& resp) {
  check_shapes(data, spec);
  if (resp.z.rows() != data.size() || resp.z.cols() != spec.components)
    throw UsageError("responsibility matrix shape does not match the data and model");
  const MixtureDensity density(params, spec);
  const Eigen::MatrixXd design = design_for(data, spec);
  std::vector<double> terms(static_cast<std::size_t>(spec.components));
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    density.row_terms(data, design, i, terms);
    for (int g = 0; g < spec.components; ++g) {
      const double z = resp.z(i, g);
      if (z == 0.0) continue;
      total += z * terms[static_cast<std::size_t>(g)];
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// IRLS

double weighted_poisson_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& weights, const Eigen::VectorXd& beta) {
  const Eigen::ArrayXd eta = (X * beta).array();
  const double value = (weights.array() * (y.array() * eta - eta.exp())).sum();
  return std::isfinite(value) ? value : kNegInf;
}

Eigen::VectorXd weighted_poisson_score(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& weights,
                                       const Eigen::VectorXd& beta) {
  const Eigen::ArrayXd mu = (X * beta).array().exp();
  return X.transpose() * (weights.array() * (y.array() - mu)).matrix();
}

IrlsResult irls_update_beta(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& weights, const Eigen::VectorXd& beta_init,
                            const IrlsOptions& options) {
  if (X.rows() != y.size() || weights.size() != y.size() || beta_init.size() != X.cols())
    throw UsageError("IRLS argument dimensions disagree");
  if ((weights.array() < 0.0).any()) throw UsageError("IRLS weights must be nonnegative");

  IrlsResult result;
  result.beta = beta_init;
  double objective = weighted_poisson_loglik(X, y, weights, result.beta);
  if (!std::isfinite(objective))
    throw NumericalError("IRLS starting point has a non-finite objective");

  const Eigen::Index p = X.cols();
  const Eigen::MatrixXd ridge = options.ridge * Eigen::MatrixXd::Identity(p, p);
  for (int step = 0; step < options.max_steps; ++step) {
    const Eigen::ArrayXd mu = (X * result.beta).array().exp();
    const Eigen::VectorXd score = X.transpose() * (weights.array() * (y.array() - mu)).matrix();
    result.score_norm = score.lpNorm<Eigen::Infinity>();
    if (result.score_norm < options.grad_tolerance) {
      result.converged = true;
      break;
    }
    const Eigen::VectorXd s = weights.array() * mu;
    const Eigen::MatrixXd info = X.transpose() * (X.array().colwise() * s.array()).matrix();
    Eigen::LDLT<Eigen::MatrixXd> damped(info + ridge);
    Eigen::VectorXd direction = damped.solve(score);
    if (damped.info() != Eigen::Success || !direction.allFinite() || !damped.isPositive())
      throw NumericalError("weighted normal equations are singular beyond ridge rescue");

    Eigen::LDLT<Eigen::MatrixXd> plain(info);
    const Eigen::VectorXd undamped = plain.solve(score);
    result.ridge_changed_solution =
        plain.info() != Eigen::Success || !undamped.allFinite() ||
        (direction - undamped).lpNorm<Eigen::Infinity>() > 1e-6;

    // Step halving keeps the weighted log-likelihood nondecreasing, which
    // makes every M-step a generalized EM step. Near the optimum the gain
    // falls below rounding noise; a step within that noise is still taken
    // when it shrinks the score.
    const double noise = 1e-13 * std::max(1.0, std::abs(objective));
    bool accepted = false;
    double scale = 1.0;
    for (int halving = 0; halving < 50; ++halving, scale *= 0.5) {
      Eigen::VectorXd candidate = result.beta + scale * direction;
      const double value = weighted_poisson_loglik(X, y, weights, candidate);
      const bool improves = value >= objective ||
                            (value >= objective - noise &&
                             weighted_poisson_score(X, y, weights, candidate)
                                     .lpNorm<Eigen::Infinity>() < result.score_norm);
      if (improves) {
        result.beta = std::move(candidate);
        objective = value;
        accepted = true;
        break;
      }
    }
    ++result.steps;
    if (!accepted) break;
  }
  result.score_norm = weighted_poisson_score(X, y, weights, result.beta).lpNorm<Eigen::Infinity>();
  result.converged = result.score_norm < options.grad_tolerance;
  return result;
}

// ---------------------------------------------------------------------------
// Closed-form M-steps

Eigen::VectorXd m_step_pi(const Responsibilities& resp) {
  const auto n = static_cast<double>(resp.z.rows());
  if (n == 0) throw UsageError("responsibility matrix is empty");
  Eigen::VectorXd pi = resp.z.colwise().sum().transpose() / n;
  return pi / pi.sum();
}

GaussianMoments m_step_gaussian(const Eigen::MatrixXd& Q, const Eigen::VectorXd& weights,
                                CovarianceStructure structure) {
  if (Q.rows() != weights.size()) throw UsageError("Gaussian M-step dimensions disagree");
  const double total = weights.sum();
  if (!(total >= kEmptyComponentWeight))
    throw EmptyComponentError("component total responsibility below the empty threshold");
  const Eigen::Index q = Q.cols();
  GaussianMoments out;
  out.mu = Q.transpose() * weights / total;
  const Eigen::MatrixXd centered = Q.rowwise() - out.mu.transpose();
  Eigen::MatrixXd S =
      centered.transpose() * (centered.array().colwise() * weights.array()).matrix() / total;
  S = 0.5 * (S + S.transpose());

  switch (structure) {
    case CovarianceStructure::spherical: {
      const double var = q > 0 ? std::max(S.trace() / static_cast<double>(q), kCovarianceFloor)
                               : kCovarianceFloor;
      out.sigma = var * Eigen::MatrixXd::Identity(q, q);
      break;
    }
    case CovarianceStructure::diagonal:
      out.sigma = S.diagonal().cwiseMax(kCovarianceFloor).asDiagonal();
      break;
    case CovarianceStructure::full: {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
      const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(kCovarianceFloor);
      out.sigma = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
      out.sigma = 0.5 * (out.sigma + out.sigma.transpose());
      break;
    }
  }
  return out;
}

std::vector<Eigen::VectorXd> m_step_alpha(const std::vector<CategoricalBlock>& W,
                                          const Eigen::VectorXd& weights) {
  const double total = weights.sum();
  if (!(total >= kEmptyComponentWeight))
    throw EmptyComponentError("component total responsibility below the empty threshold");
  std::vector<Eigen::VectorXd> alpha;
  alpha.reserve(W.size());
  for (const auto& block : W) {
    if (block.onehot.rows() != weights.size())
      throw UsageError("categorical M-step dimensions disagree");
    Eigen::VectorXd a = block.onehot.transpose() * weights / total;
    a = a.cwiseMax(kAlphaFloor);
    alpha.push_back(a / a.sum());
  }
  return alpha;
}

MixtureParameters m_step(const Dataset& data, const Eigen::MatrixXd& design,
                         const ModelSpec& spec, const Responsibilities& resp,
                         const MixtureParameters* previous, const EmConfig& config,
                         bool* ridge_changed) {
  MixtureParameters params;
  const Eigen::VectorXd mass = resp.z.colwise().sum().transpose();
  for (Eigen::Index g = 0; g < mass.size(); ++g)
    if (!(mass[g] >= kEmptyComponentWeight))
      throw EmptyComponentError("component " + std::to_string(g + 1) +
                                " total responsibility below the empty threshold");
  params.pi = m_step_pi(resp);

  const IrlsOptions irls{config.irls_max_steps, config.irls_grad_tolerance, config.ridge};
  const int first = spec.first_poisson();
  for (int j = 0; j < spec.poisson_components(); ++j) {
    const Eigen::VectorXd w = resp.z.col(first + j);
    ComponentParameters c;
    const Eigen::VectorXd start = previous ? previous->components[static_cast<std::size_t>(j)].beta
                                           : starting_beta(design, data.y, w);
    IrlsResult fit = irls_update_beta(design, data.y, w, start, irls);
    if (ridge_changed && fit.ridge_changed_solution) *ridge_changed = true;
    c.beta = std::move(fit.beta);
    if (spec.uses_covariate_density()) {
      GaussianMoments moments = m_step_gaussian(data.Q, w, spec.covariance);
      c.mu = std::move(moments.mu);
      c.sigma = std::move(moments.sigma);
      c.alpha = m_step_alpha(data.W, w);
    }
    params.components.push_back(std::move(c));
  }
  return params;
}

// ---------------------------------------------------------------------------
// Initialization

Responsibilities initial_responsibilities(const Dataset& data, const ModelSpec& spec,
                                          std::uint64_t seed) {
  const Eigen::Index n = data.size();
  const int K = spec.poisson_components();
  const int first = spec.first_poisson();

  Eigen::MatrixXd features(n, data.Q.cols() + 1);
  features.leftCols(data.Q.cols()) = data.Q;
  features.col(data.Q.cols()) = data.y.array().log1p().matrix();
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    auto col = features.col(j);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n));
    if (sd > 0.0) col /= sd;
  }

  // Zero-inflated families seed the Poisson structure from the positive counts.
  std::vector<Eigen::Index> pool;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!spec.zero_inflated() || data.y[i] > 0) pool.push_back(i);
  if (static_cast<int>(pool.size()) < K) {
    pool.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  }

  std::mt19937_64 rng(seed);
  boost::random::uniform_01<double> unit;
  const auto m = static_cast<Eigen::Index>(pool.size());
  Eigen::MatrixXd centers(K, features.cols());
  Eigen::VectorXd dist2 = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity());
  {
    boost::random::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
    centers.row(0) = features.row(pool[static_cast<std::size_t>(pick(rng))]);
  }
  for (int k = 1; k < K; ++k) {
    for (Eigen::Index t = 0; t < m; ++t)
      dist2[t] = std::min(dist2[t], (features.row(pool[static_cast<std::size_t>(t)]) -
                                     centers.row(k - 1)).squaredNorm());
    const double total = dist2.sum();
    Eigen::Index chosen = m - 1;
    if (total > 0.0) {
      double target = unit(rng) * total;
      for (Eigen::Index t = 0; t < m; ++t) {
        target -= dist2[t];
        if (target <= 0.0) {
          chosen = t;
          break;
        }
      }
    } else {
      boost::random::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
      chosen = pick(rng);
    }
    centers.row(k) = features.row(pool[static_cast<std::size_t>(chosen)]);
  }

  auto nearest = [&](Eigen::Index row, double* best_d2) {
    int best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      const double d2 = (features.row(row) - centers.row(k)).squaredNorm();
      if (d2 < best_value) {
        best_value = d2;
        best = k;
      }
    }
    if (best_d2) *best_d2 = best_value;
    return best;
  };

  std::vector<int> assign(pool.size(), -1);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (std::size_t t = 0; t < pool.size(); ++t) {
      const int k = nearest(pool[t], nullptr);
      if (k != assign[t]) {
        assign[t] = k;
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, features.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(K);
    for (std::size_t t = 0; t < pool.size(); ++t) {
      sums.row(assign[t]) += features.row(pool[t]);
      ++counts[assign[t]];
    }
    for (int k = 0; k < K; ++k) {
      if (counts[k] > 0) {
        centers.row(k) = sums.row(k) / counts[k];
        continue;
      }
      // Empty cluster: move it onto the worst-fit point.
      std::size_t worst = 0;
      double worst_d2 = -1.0;
      for (std::size_t t = 0; t < pool.size(); ++t) {
        const double d2 = (features.row(pool[t]) - centers.row(assign[t])).squaredNorm();
        if (d2 > worst_d2) {
          worst_d2 = d2;
          worst = t;
        }
      }
      centers.row(k) = features.row(pool[worst]);
      changed = true;
    }
    if (!changed) break;
  }

  Responsibilities init;
  init.z = Eigen::MatrixXd::Zero(n, spec.components);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = nearest(i, nullptr);
    if (spec.zero_inflated() && data.y[i] == 0) {
      init.z(i, 0) = 0.5;
      init.z(i, first + k) = 0.5;
    } else {
      init.z(i, first + k) = 1.0;
    }
  }
  return init;
}

// ---------------------------------------------------------------------------
// EM driver

SingleRun run_em(const Dataset& data, const ModelSpec& spec, const EmConfig& config,
                 Responsibilities init) {
  const Eigen::MatrixXd design = design_for(data, spec);
  SingleRun run;
  run.params = m_step(data, design, spec, init, nullptr, config, &run.ridge_changed_solution);
  EStep current = e_step_with_loglik(data, run.params, spec);
  run.trace.push_back(current.loglik);
  for (int it = 1; it <= config.max_iterations; ++it) {
    run.params =
        m_step(data, design, spec, current.resp, &run.params, config, &run.ridge_changed_solution);
    current = e_step_with_loglik(data, run.params, spec);
    if (!std::isfinite(current.loglik))
      throw NumericalError("observed log-likelihood became non-finite");
    const double previous = run.trace.back();
    run.trace.push_back(current.loglik);
    run.iterations = it;
    if (std::abs(current.loglik - previous) <= config.loglik_rel_tolerance * std::abs(previous)) {
      run.converged = true;
      break;
    }
  }
  run.resp = std::move(current.resp);
  return run;
}

FitReport fit_em(const Dataset& data, const ModelSpec& spec, const EmConfig& config) {
  check_shapes(data, spec);
  config.validate();

  FitReport report;
  report.spec = spec;
  const Eigen::MatrixXd design = design_for(data, spec);
  report.rank = check_identifiability(design);
  if (!report.rank.full_rank)
    report.warnings.push_back("regression design is rank deficient (rank " +
                              std::to_string(report.rank.rank) + " of " +
                              std::to_string(report.rank.columns) +
                              "); coefficients are not identifiable");
  report.free_parameters = count_free_parameters(spec, dims_of(data));
  if (data.size() <= report.free_parameters)
    report.warnings.push_back("sample size " + std::to_string(data.size()) +
                              " does not exceed the free parameter count " +
                              std::to_string(report.free_parameters));

  const int R = config.restarts;
  std::vector<std::optional<SingleRun>> runs(static_cast<std::size_t>(R));
  report.restarts.resize(static_cast<std::size_t>(R));

  auto work = [&](int r) {
    auto& outcome = report.restarts[static_cast<std::size_t>(r)];
    outcome.index = r;
    outcome.seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
    try {
      SingleRun run = run_em(data, spec, config, initial_responsibilities(data, spec, outcome.seed));
      outcome.ok = true;
      outcome.final_loglik = run.trace.back();
      outcome.iterations = run.iterations;
      outcome.converged = run.converged;
      runs[static_cast<std::size_t>(r)] = std::move(run);
    } catch (const NumericalError& e) {
      outcome.failure = e.what();
    }
  };

  int threads = config.threads == 0 ? static_cast<int>(std::thread::hardware_concurrency())
                                    : config.threads;
  threads = std::clamp(threads, 1, R);
  if (threads == 1) {
    for (int r = 0; r < R; ++r) work(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int r = next++; r < R; r = next++) work(r);
      });
  }

  // Selection depends only on (loglik, index), never on completion order.
  int best = -1;
  for (int r = 0; r < R; ++r) {
    const auto& outcome = report.restarts[static_cast<std::size_t>(r)];
    if (!outcome.ok) continue;
    if (best < 0 ||
        outcome.final_loglik > report.restarts[static_cast<std::size_t>(best)].final_loglik + 1e-10)
      best = r;
  }
  if (best < 0) {
    std::string causes = "all " + std::to_string(R) + " EM restarts failed";
    for (const auto& outcome : report.restarts)
      causes += (outcome.index == 0 ? ": " : "; ") + std::string("restart ") +
                std::to_string(outcome.index) + ": " + outcome.failure;
    throw FitError(causes);
  }

  SingleRun& chosen = *runs[static_cast<std::size_t>(best)];
  report.restart_index_of_best = best;
  report.loglik_trace = std::move(chosen.trace);
  report.final_loglik = report.loglik_trace.back();
  report.converged = chosen.converged;
  report.iterations_used = chosen.iterations;
  report.ridge_changed_solution = chosen.ridge_changed_solution;
  if (report.ridge_changed_solution)
    report.warnings.push_back("ridge term changed an IRLS solution by more than 1e-6");

  report.params = std::move(chosen.params);
  const std::vector<int> order = canonicalize(report.params, spec);
  report.responsibilities.z.resize(data.size(), spec.components);
  for (int g = 0; g < spec.components; ++g)
    report.responsibilities.z.col(g) = chosen.resp.z.col(order[static_cast<std::size_t>(g)]);

  report.map_labels.resize(static_cast<std::size_t>(data.size()));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    Eigen::Index g;
    report.responsibilities.z.row(i).maxCoeff(&g);
    report.map_labels[static_cast<std::size_t>(i)] = static_cast<int>(g) + 1;
  }
  report.complete_loglik =
      complete_data_loglik(data, report.params, spec, report.responsibilities);
  return report;
}

}  // namespace zipcwm
