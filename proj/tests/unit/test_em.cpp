#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mstep_oracles.hpp"

#include "zipcwm/em.hpp"
#include "zipcwm/error.hpp"
#include "zipcwm/simulation.hpp"

#include <cmath>
#include <random>

using namespace zipcwm;

namespace {

Dataset intercept_only(const std::vector<int>& counts) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t i = 0; i < counts.size(); ++i) y(static_cast<Eigen::Index>(i)) = counts[i];
  return make_dataset(y, Eigen::MatrixXd(y.size(), 0), Eigen::MatrixXi(y.size(), 0), {},
                      CategoricalCoding::dummy);
}

Dataset simulated(long n, std::uint64_t seed) {
  SimulationDesign design;
  design.n = n;
  design.seed = seed;
  return generate(design);
}

EmConfig quick_config(std::uint64_t seed, int restarts = 3) {
  EmConfig config;
  config.seed = seed;
  config.restarts = restarts;
  config.max_iterations = 300;
  return config;
}

void check_ascent(const std::vector<double>& trace) {
  for (std::size_t t = 1; t < trace.size(); ++t) CHECK(trace[t] >= trace[t - 1] - kAscentSlack);
}

}  // namespace

TEST_CASE("two-term Bayes rule for a zero count") {
  const Dataset data = intercept_only({0});
  ModelSpec spec;
  spec.family = Family::fzip;
  spec.components = 2;
  spec.regression_on_covariates = false;
  MixtureParameters params;
  params.pi = Eigen::Vector2d(0.5, 0.5);
  ComponentParameters c;
  c.beta = Eigen::VectorXd::Zero(1);
  params.components = {c};
  const auto resp = e_step(data, params, spec);
  CHECK(resp.z(0, 0) == doctest::Approx(0.5 / (0.5 + 0.5 * std::exp(-1.0))).epsilon(1e-14));
  CHECK(resp.z(0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("e-step rows are simplexes and positive counts never touch the zero component") {
  const Dataset data = simulated(500, 4);
  const SimulationDesign design;
  MixtureParameters params;
  params.pi = Eigen::Vector3d(0.5, 0.3, 0.2);
  for (int g = 0; g < 2; ++g) {
    ComponentParameters c;
    c.beta = design.betas[g];
    c.mu = design.means[g];
    c.sigma = design.covariances[g];
    for (const auto& probs : design.level_probabilities)
      c.alpha.push_back(Eigen::Map<const Eigen::VectorXd>(probs.data(), probs.size()));
    params.components.push_back(c);
  }
  const ModelSpec spec;
  const auto step = e_step_with_loglik(data, params, spec);
  long double oracle_loglik = 0.0L;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    CHECK(step.resp.z.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(step.resp.z.row(i).minCoeff() >= 0.0);
    if (data.y(i) > 0) CHECK(step.resp.z(i, 0) == 0.0);
    // Direct unnormalized products.
    const auto obs = observation(data, i, spec);
    std::vector<long double> terms(3, 0.0L);
    terms[0] = obs.y == 0 ? 0.5L : 0.0L;
    for (int g = 0; g < 2; ++g) {
      const auto& c = params.components[g];
      long double t = params.pi(g + 1);
      t *= std::exp(static_cast<long double>(poisson_log_pmf(obs.y, poisson_mean(obs.x, c.beta))));
      t *= std::exp(static_cast<long double>(gaussian_log_density(obs.q, c.mu, c.sigma)));
      t *= std::exp(static_cast<long double>(categorical_log_pmf(obs.onehots, c.alpha)));
      terms[g + 1] = t;
    }
    const long double sum = terms[0] + terms[1] + terms[2];
    oracle_loglik += std::log(sum);
    for (int g = 0; g < 3; ++g)
      CHECK(step.resp.z(i, g) == doctest::Approx(static_cast<double>(terms[g] / sum)).epsilon(1e-10));
  }
  CHECK(step.loglik == doctest::Approx(static_cast<double>(oracle_loglik)).epsilon(1e-12));
  CHECK(observed_loglik(data, params, spec) == doctest::Approx(step.loglik).epsilon(1e-13));
}

TEST_CASE("complete-data log-likelihood under hard truth labels") {
  // A tiny two-component case whose hard labels are the truth.
  const Dataset data = intercept_only({0, 0, 3, 1, 4});
  ModelSpec spec;
  spec.family = Family::fzip;
  spec.components = 2;
  spec.regression_on_covariates = false;
  MixtureParameters params;
  params.pi = Eigen::Vector2d(0.4, 0.6);
  ComponentParameters c;
  c.beta = Eigen::VectorXd::Constant(1, std::log(2.0));
  params.components = {c};
  Responsibilities hard;
  hard.z = Eigen::MatrixXd::Zero(5, 2);
  hard.z(0, 0) = hard.z(1, 0) = 1;
  hard.z(2, 1) = hard.z(3, 1) = hard.z(4, 1) = 1;
  double expected = 2 * std::log(0.4);
  for (int y : {3, 1, 4}) expected += std::log(0.6) + poisson_log_pmf(y, 2.0);
  CHECK(complete_data_loglik(data, params, spec, hard) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("IRLS closed forms") {
  SUBCASE("intercept only gives the log mean") {
    Eigen::VectorXd y(6);
    y << 0, 2, 3, 1, 5, 4;
    const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(6, 1);
    const auto fit = irls_update_beta(X, y, Eigen::VectorXd::Ones(6), Eigen::VectorXd::Zero(1));
    CHECK(fit.converged);
    CHECK(fit.beta(0) == doctest::Approx(std::log(2.5)).epsilon(1e-10));
  }
  SUBCASE("one binary regressor gives group log means") {
    Eigen::VectorXd y(6);
    y << 1, 2, 3, 6, 7, 8;
    Eigen::MatrixXd X(6, 2);
    X << 1, 0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1;
    const auto fit = irls_update_beta(X, y, Eigen::VectorXd::Ones(6), Eigen::VectorXd::Zero(2));
    CHECK(fit.converged);
    CHECK(fit.beta(0) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(fit.beta(0) + fit.beta(1) == doctest::Approx(std::log(7.0)).epsilon(1e-9));
  }
}

TEST_CASE("IRLS weighted log-likelihood never decreases from the start") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal;
  const int n = 80;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    X.row(i) << 1, normal(rng), normal(rng);
    y(i) = std::poisson_distribution<int>(std::exp(0.5 + 0.7 * X(i, 1) - 0.4 * X(i, 2)))(rng);
  }
  const Eigen::VectorXd z = oracles::random_weights(rng, n);
  const Eigen::Vector3d start(3.0, -2.0, 2.0);  // far from the optimum
  const auto fit = irls_update_beta(X, y, z, start, {100, 1e-8, 1e-8});
  CHECK(fit.converged);
  CHECK(weighted_poisson_loglik(X, y, z, fit.beta) >= weighted_poisson_loglik(X, y, z, start));
}

TEST_CASE("M-step oracles on randomized instances") {
  const auto gaussian = oracles::gaussian_argmax(101, 20);
  CHECK_MESSAGE(gaussian.ok(), gaussian.first_failure);
  const auto alpha = oracles::alpha_argmax(202, 20);
  CHECK_MESSAGE(alpha.ok(), alpha.first_failure);
  const auto pi = oracles::pi_argmax(303, 20);
  CHECK_MESSAGE(pi.ok(), pi.first_failure);
  const auto irls = oracles::irls_finite_difference(404, 20);
  CHECK_MESSAGE(irls.ok(), irls.first_failure);
}

TEST_CASE("M-step closed forms") {
  SUBCASE("pi") {
    Responsibilities uniform;
    uniform.z = Eigen::MatrixXd::Constant(9, 3, 1.0 / 3);
    CHECK(m_step_pi(uniform).isApprox(Eigen::Vector3d::Constant(1.0 / 3)));
    Responsibilities hard;
    hard.z = Eigen::MatrixXd::Zero(100, 3);
    for (int i = 0; i < 100; ++i) hard.z(i, i < 50 ? 0 : (i < 80 ? 1 : 2)) = 1;
    CHECK(m_step_pi(hard).isApprox(Eigen::Vector3d(0.5, 0.3, 0.2)));
  }
  SUBCASE("gaussian with unit weights is the biased sample moment") {
    Eigen::MatrixXd Q(4, 2);
    Q << 1, 2, 3, 1, 0, 0, 2, 5;
    const auto m = m_step_gaussian(Q, Eigen::VectorXd::Ones(4), CovarianceStructure::full);
    const Eigen::RowVectorXd mean = Q.colwise().mean();
    const Eigen::MatrixXd centered = Q.rowwise() - mean;
    CHECK(m.mu.isApprox(mean.transpose()));
    CHECK(m.sigma.isApprox(centered.transpose() * centered / 4.0));
  }
  SUBCASE("a single weighted point collapses onto the floor") {
    Eigen::MatrixXd Q(3, 2);
    Q << 1, 2, 3, 4, 5, 6;
    const auto m = m_step_gaussian(Q, Eigen::Vector3d(0, 1, 0), CovarianceStructure::full);
    CHECK(m.mu.isApprox(Eigen::Vector2d(3, 4)));
    CHECK(m.sigma.isApprox(kCovarianceFloor * Eigen::Matrix2d::Identity()));
  }
  SUBCASE("hard two-cluster moments") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd Q(60, 2);
    Eigen::VectorXd in_first(60);
    for (int i = 0; i < 60; ++i) {
      const bool first = i % 3 == 0;
      in_first(i) = first ? 1 : 0;
      Q.row(i) << normal(rng) + (first ? 4 : 0), normal(rng) * (first ? 2 : 1);
    }
    for (int cluster = 0; cluster < 2; ++cluster) {
      const Eigen::VectorXd w = cluster == 0 ? in_first : Eigen::VectorXd(1.0 - in_first.array());
      Eigen::Vector2d mean = Eigen::Vector2d::Zero();
      double count = 0;
      for (int i = 0; i < 60; ++i)
        if (w(i) > 0) {
          mean += Q.row(i).transpose();
          ++count;
        }
      mean /= count;
      Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
      for (int i = 0; i < 60; ++i)
        if (w(i) > 0) cov += (Q.row(i).transpose() - mean) * (Q.row(i) - mean.transpose());
      cov /= count;
      const auto full = m_step_gaussian(Q, w, CovarianceStructure::full);
      CHECK(full.mu.isApprox(mean, 1e-12));
      CHECK(full.sigma.isApprox(cov, 1e-12));
      const auto diag = m_step_gaussian(Q, w, CovarianceStructure::diagonal);
      CHECK(diag.sigma.isApprox(Eigen::Matrix2d(cov.diagonal().asDiagonal()), 1e-12));
      const auto sph = m_step_gaussian(Q, w, CovarianceStructure::spherical);
      CHECK(sph.sigma(0, 0) == doctest::Approx(cov.trace() / 2));
    }
  }
  SUBCASE("alpha frequencies") {
    CategoricalBlock block;
    block.levels = 2;
    block.onehot = Eigen::MatrixXd::Zero(4, 2);
    block.onehot(0, 0) = block.onehot(1, 1) = block.onehot(2, 0) = block.onehot(3, 1) = 1;
    CHECK(m_step_alpha({block}, Eigen::VectorXd::Ones(4))[0].isApprox(Eigen::Vector2d(0.5, 0.5)));
    CHECK(m_step_alpha({block}, Eigen::VectorXd::Constant(4, 0.5))[0].isApprox(
        Eigen::Vector2d(0.5, 0.5)));
    // An unobserved level is floored, not zero.
    block.onehot.col(0).setOnes();
    block.onehot.col(1).setZero();
    const auto floored = m_step_alpha({block}, Eigen::VectorXd::Ones(4))[0];
    CHECK(floored(1) > 0.0);
    CHECK(floored.sum() == doctest::Approx(1.0).epsilon(1e-14));
  }
  SUBCASE("alpha recovers simulated level probabilities from true labels") {
    const Dataset data = simulated(1000, 21);
    Eigen::VectorXd w(data.size());
    for (Eigen::Index i = 0; i < data.size(); ++i) w(i) = (*data.true_labels)[i] == 2 ? 1 : 0;
    const auto alpha = m_step_alpha(data.W, w);
    const double n2 = w.sum();
    for (int s = 0; s < 3; ++s)
      CHECK(std::abs(alpha[1](s) - 1.0 / 3) < 4 * std::sqrt((1.0 / 3) * (2.0 / 3) / n2));
  }
}

TEST_CASE("an empty component aborts the M-step") {
  const Dataset data = simulated(50, 3);
  ModelSpec spec;
  Responsibilities resp;
  resp.z = Eigen::MatrixXd::Zero(data.size(), 3);
  resp.z.col(0).setConstant(0.5);
  resp.z.col(1).setConstant(0.5);
  CHECK_THROWS_AS(m_step(data, design_for(data, spec), spec, resp, nullptr, EmConfig{}),
                  EmptyComponentError);
}

TEST_CASE("EM ascent for every family") {
  for (Family family : {Family::zipcwm, Family::pcwm, Family::fzip, Family::zip,
                        Family::poisson_mixture}) {
    ModelSpec spec;
    spec.family = family;
    spec.components = family == Family::zip ? 2 : 3;
    for (long n : {30L, 200L}) {
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const Dataset data = simulated(n, 100 * seed + static_cast<std::uint64_t>(n));
        try {
          const FitReport fit = fit_em(data, spec, quick_config(seed, 2));
          for (const auto& trace : {fit.loglik_trace}) check_ascent(trace);
          CHECK(fit.final_loglik == doctest::Approx(observed_loglik(data, fit.params, spec)));
          CHECK(fit.responsibilities.z.rows() == n);
        } catch (const FitError&) {
          // Small samples may empty a component in every restart; that is reported, not a bug.
          CHECK(n == 30);
        }
      }
    }
  }
}

TEST_CASE("intercept-only ZIP matches a dense grid search") {
  std::mt19937_64 rng(77);
  std::vector<int> counts;
  for (int i = 0; i < 30; ++i) {
    const bool structural = std::uniform_real_distribution<double>()(rng) < 0.35;
    counts.push_back(structural ? 0 : std::poisson_distribution<int>(3.0)(rng));
  }
  const Dataset data = intercept_only(counts);
  ModelSpec spec;
  spec.family = Family::zip;
  spec.components = 2;
  EmConfig config = quick_config(5, 5);
  config.max_iterations = 5000;
  config.loglik_rel_tolerance = 1e-12;
  const FitReport fit = fit_em(data, spec, config);

  auto loglik = [&](double pi1, double lambda) {
    double total = 0.0;
    for (int y : counts) {
      const double pois = std::exp(poisson_log_pmf(y, lambda));
      total += std::log((y == 0 ? pi1 : 0.0) + (1 - pi1) * pois);
    }
    return total;
  };
  const int cells = 400;
  double best = -std::numeric_limits<double>::infinity();
  double best_pi = 0, best_lambda = 0;
  for (int a = 0; a < cells; ++a)
    for (int b = 0; b < cells; ++b) {
      const double pi1 = (a + 0.5) / cells;
      const double lambda = 10.0 * (b + 1) / cells;
      const double value = loglik(pi1, lambda);
      if (value > best) {
        best = value;
        best_pi = pi1;
        best_lambda = lambda;
      }
    }
  // The EM optimum is at least as good as the grid and lies within one cell of it.
  CHECK(fit.final_loglik >= best - 1e-9);
  const double lambda_hat = std::exp(fit.params.components[0].beta(0));
  CHECK(std::abs(fit.params.pi(0) - best_pi) <= 1.0 / cells);
  CHECK(std::abs(lambda_hat - best_lambda) <= 10.0 / cells);
}

TEST_CASE("FZIP through the ZIPCWM path equals the dedicated family") {
  const Dataset data = simulated(300, 31);
  ModelSpec reduced;
  reduced.covariate_densities = false;
  ModelSpec fzip;
  fzip.family = Family::fzip;
  const EmConfig config = quick_config(17, 2);
  const FitReport a = fit_em(data, reduced, config);
  const FitReport b = fit_em(data, fzip, config);
  CHECK(std::abs(a.final_loglik - b.final_loglik) <= 1e-8 * std::abs(b.final_loglik));
}

TEST_CASE("single-component Poisson data under FZIP keeps few structural zeros") {
  std::mt19937_64 rng(1);
  std::vector<int> counts;
  for (int i = 0; i < 400; ++i) counts.push_back(std::poisson_distribution<int>(2.5)(rng));
  const Dataset data = intercept_only(counts);
  ModelSpec spec;
  spec.family = Family::fzip;
  spec.components = 2;
  const FitReport fit = fit_em(data, spec, quick_config(3, 3));
  check_ascent(fit.loglik_trace);
  CHECK(fit.params.pi(0) < 0.1);
}

TEST_CASE("restart selection is deterministic and independent of thread count") {
  const Dataset data = simulated(300, 8);
  const ModelSpec spec;
  EmConfig one = quick_config(99, 4);
  EmConfig many = one;
  many.threads = 4;
  const FitReport a = fit_em(data, spec, one);
  const FitReport b = fit_em(data, spec, many);
  CHECK(a.final_loglik == b.final_loglik);
  CHECK(a.restart_index_of_best == b.restart_index_of_best);
  CHECK(a.map_labels == b.map_labels);
  CHECK(a.restarts.size() == 4);
}

TEST_CASE("fit report invariants") {
  const Dataset data = simulated(400, 13);
  const ModelSpec spec;
  const FitReport fit = fit_em(data, spec, quick_config(2));
  CHECK(fit.params.pi.sum() == doctest::Approx(1.0).epsilon(1e-10));
  for (int g = 2; g < 3; ++g) CHECK(fit.params.pi(g) >= fit.params.pi(g - 1));
  CHECK(fit.free_parameters == 28);
  CHECK(fit.rank.full_rank);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    Eigen::Index arg = 0;
    fit.responsibilities.z.row(i).maxCoeff(&arg);
    CHECK(fit.map_labels[static_cast<std::size_t>(i)] == arg + 1);
  }
  CHECK(fit.complete_loglik <= fit.final_loglik + 1e-9);
}

TEST_CASE("invalid configurations are usage errors") {
  EmConfig config;
  config.restarts = 0;
  CHECK_THROWS_AS(config.validate(), UsageError);
  config = EmConfig{};
  config.loglik_rel_tolerance = 0;
  CHECK_THROWS_AS(config.validate(), UsageError);
  config = EmConfig{};
  config.ridge = -1;
  CHECK_THROWS_AS(config.validate(), UsageError);
}
