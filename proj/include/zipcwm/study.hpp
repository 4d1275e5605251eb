#pragma once

// Monte Carlo reproduction of the three-component simulation benchmark:
// generate replicate datasets at several sample sizes, sweep G with ZIPCWM,
// score the G = 3 fit against the truth, and compare against FZIP and PCWM.

#include "zipcwm/io.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

namespace zipcwm {

struct StudyOptions {
  std::uint64_t seed = 42;
  std::vector<long> sample_sizes = {200, 500, 1000};
  int replicates = 10;
  std::vector<int> G_range = {2, 3, 4, 5};
  int true_G = 3;
  // Sample size at which FZIP and PCWM are fitted for comparison.
  long comparison_n = 1000;
  EmConfig em;
  SimulationDesign design;  // n and seed are overridden per replicate
};

/// A G = true_G fit scored against the truth. Component parameters are
/// reordered to match the true labels (aligned[t] describes true component t+2).
struct ScoredFit {
  Family family = Family::zipcwm;
  double loglik = 0.0;
  ConfusionReport confusion;
  double ari = 0.0;
  Eigen::VectorXd pi;  // aligned, degenerate first for zero-inflated families
  std::vector<ComponentParameters> aligned;
};

struct ReplicateResult {
  long n = 0;
  int replicate = 0;
  std::uint64_t data_seed = 0;
  Dataset data;
  SelectionReport selection;
  std::optional<ScoredFit> zipcwm;
  std::map<Family, ScoredFit> comparisons;
  std::vector<std::string> failures;

  /// Number of the eight criteria choosing `G`.
  int criteria_choosing(int G) const;
};

struct StudyResult {
  StudyOptions options;
  std::vector<ReplicateResult> replicates;

  std::vector<const ReplicateResult*> at(long n) const;
};

/// Score a fit against a dataset's true labels.
ScoredFit score_fit(const FitReport& fit, const Dataset& data);

StudyResult run_sim_study(const StudyOptions& options);

/// Writes the consolidated report directory (see README for the manifest).
std::vector<std::filesystem::path> write_study(const StudyResult& result,
                                               const std::filesystem::path& out_dir);

/// File names written by write_study, relative to the output directory.
std::vector<std::string> study_manifest(const StudyOptions& options);

}  // namespace zipcwm
