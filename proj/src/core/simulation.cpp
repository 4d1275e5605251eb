#include "zipcwm/simulation.hpp"

#include "zipcwm/error.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cmath>
#include <random>

namespace zipcwm {

namespace {

bool is_probability_vector(const std::vector<double>& p) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) return false;
    total += v;
  }
  return std::abs(total - 1.0) < 1e-10;
}

}  // namespace

void SimulationDesign::validate() const {
  if (n < 1) throw UsageError("simulation sample size must be positive");
  if (pi.size() < 2) throw UsageError("simulation needs the degenerate and at least one Poisson component");
  if (!is_probability_vector(pi)) throw UsageError("simulation mixing weights must form a probability vector");
  const std::size_t poisson = pi.size() - 1;
  if (means.size() != poisson || covariances.size() != poisson || betas.size() != poisson)
    throw UsageError("simulation needs one mean, covariance and beta per Poisson component");
  const Eigen::Index q = means.front().size();
  Eigen::Index regressors = q;
  for (const auto& probs : level_probabilities) {
    if (probs.size() < 2 || !is_probability_vector(probs))
      throw UsageError("categorical level probabilities must be a probability vector over >= 2 levels");
    regressors += coding == CategoricalCoding::dummy ? static_cast<Eigen::Index>(probs.size()) - 1 : 1;
  }
  for (std::size_t j = 0; j < poisson; ++j) {
    if (means[j].size() != q || covariances[j].rows() != q || covariances[j].cols() != q)
      throw UsageError("simulation Gaussian blocks have inconsistent dimensions");
    if (q > 0 && Eigen::LLT<Eigen::MatrixXd>(covariances[j]).info() != Eigen::Success)
      throw UsageError("simulation covariance is not positive definite");
    if (betas[j].size() != 1 + regressors)
      throw UsageError("simulation beta length " + std::to_string(betas[j].size()) +
                       " does not match the coded design width " + std::to_string(1 + regressors));
  }
}

Dataset generate(const SimulationDesign& design) {
  design.validate();
  const Eigen::Index n = design.n;
  const Eigen::Index q = design.means.front().size();
  const auto p = static_cast<Eigen::Index>(design.level_probabilities.size());
  const int poisson = design.components() - 1;

  std::vector<Eigen::MatrixXd> chol;
  for (const auto& cov : design.covariances)
    chol.emplace_back(q > 0 ? Eigen::MatrixXd(Eigen::LLT<Eigen::MatrixXd>(cov).matrixL())
                            : Eigen::MatrixXd(0, 0));

  std::mt19937_64 rng(design.seed);
  boost::random::uniform_01<double> unit;
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  boost::random::uniform_int_distribution<int> pick_component(0, poisson - 1);

  Eigen::VectorXd y(n);
  Eigen::MatrixXd Q(n, q);
  Eigen::MatrixXi levels(n, p);
  std::vector<int> labels(static_cast<std::size_t>(n));
  Eigen::VectorXd x_row(design.betas.front().size());
  Eigen::VectorXd z(q);

  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = unit(rng);
    int label = design.components();
    double cumulative = 0.0;
    for (int g = 0; g < design.components(); ++g) {
      cumulative += design.pi[static_cast<std::size_t>(g)];
      if (u < cumulative) {
        label = g + 1;
        break;
      }
    }
    labels[static_cast<std::size_t>(i)] = label;

    // Degenerate rows borrow the covariate law of a uniformly chosen Poisson component.
    const int source = label == 1 ? pick_component(rng) : label - 2;
    for (Eigen::Index j = 0; j < q; ++j) z[j] = normal(rng);
    Q.row(i) = (design.means[static_cast<std::size_t>(source)] +
                chol[static_cast<std::size_t>(source)] * z)
                   .transpose();
    for (Eigen::Index k = 0; k < p; ++k) {
      const auto& probs = design.level_probabilities[static_cast<std::size_t>(k)];
      const double v = unit(rng);
      int level = static_cast<int>(probs.size());
      double acc = 0.0;
      for (std::size_t s = 0; s < probs.size(); ++s) {
        acc += probs[s];
        if (v < acc) {
          level = static_cast<int>(s) + 1;
          break;
        }
      }
      levels(i, k) = level;
    }

    if (label == 1) {
      y[i] = 0.0;
      continue;
    }
    x_row[0] = 1.0;
    x_row.segment(1, q) = Q.row(i).transpose();
    Eigen::Index col = 1 + q;
    for (Eigen::Index k = 0; k < p; ++k) {
      const int r = static_cast<int>(design.level_probabilities[static_cast<std::size_t>(k)].size());
      if (design.coding == CategoricalCoding::numeric) {
        x_row[col++] = levels(i, k);
      } else {
        for (int s = 2; s <= r; ++s) x_row[col++] = levels(i, k) == s ? 1.0 : 0.0;
      }
    }
    const double mean = std::exp(x_row.dot(design.betas[static_cast<std::size_t>(label - 2)]));
    boost::random::poisson_distribution<int, double> poisson_draw(mean);
    y[i] = poisson_draw(rng);
  }

  std::vector<int> level_counts;
  for (const auto& probs : design.level_probabilities)
    level_counts.push_back(static_cast<int>(probs.size()));
  return make_dataset(std::move(y), std::move(Q), levels, std::move(level_counts), design.coding,
                      std::move(labels));
}

}  // namespace zipcwm
