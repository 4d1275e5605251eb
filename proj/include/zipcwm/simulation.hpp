#pragma once

#include "zipcwm/model.hpp"

#include <cstdint>
#include <vector>

namespace zipcwm {

/// Generating design for a zero-inflated CWM sample. Component 1 is the point
/// mass at zero; every other component has a Gaussian covariate law, shared
/// categorical level probabilities and a log-linear Poisson mean.
///
/// The defaults are the three-component benchmark: weights (0.5, 0.3, 0.2),
/// unit spherical covariances, two categorical covariates with 2 and 3
/// equiprobable levels, numeric level coding (so beta has 6 entries).
///
/// Random stream: std::mt19937_64 seeded with `seed`. Per subject, Boost.Random
/// draws U (uniform_01), the covariate source component for degenerate rows
/// (uniform_int_distribution), q (normal_distribution), one uniform_01 per
/// categorical level by inversion, and finally y (poisson_distribution).
struct SimulationDesign {
  long n = 1000;
  std::vector<double> pi = {0.5, 0.3, 0.2};
  std::vector<Eigen::VectorXd> means = {Eigen::Vector3d(0.10, 2.00, 1.00),
                                        Eigen::Vector3d(-2.00, 0.00, 3.00)};
  std::vector<Eigen::MatrixXd> covariances = {Eigen::Matrix3d::Identity(),
                                              Eigen::Matrix3d::Identity()};
  std::vector<Eigen::VectorXd> betas = {
      (Eigen::VectorXd(6) << 0.00, 0.88, 0.28, 0.96, 0.09, 0.33).finished(),
      (Eigen::VectorXd(6) << 0.00, 0.77, 0.53, 0.98, 0.07, 0.37).finished()};
  std::vector<std::vector<double>> level_probabilities = {{0.5, 0.5},
                                                          {1.0 / 3, 1.0 / 3, 1.0 / 3}};
  CategoricalCoding coding = CategoricalCoding::numeric;
  std::uint64_t seed = 0;

  int components() const { return static_cast<int>(pi.size()); }
  /// Throws UsageError when shapes or probabilities are inconsistent.
  void validate() const;
};

/// Draws a dataset with true labels. Identical designs give bit-identical output.
Dataset generate(const SimulationDesign& design);

}  // namespace zipcwm
