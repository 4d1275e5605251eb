#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace zipcwm {

/// Optimal relabeling of predicted labels (1..G). Returns `mapping` with
/// mapping[p - 1] = aligned label for predicted label p, maximizing the
/// diagonal count of the confusion matrix. With `pin_degenerate` label 1 maps
/// to itself and only the remaining labels permute.
std::vector<int> align_labels(std::span<const int> truth, std::span<const int> predicted, int G,
                              bool pin_degenerate = true);

std::vector<int> apply_mapping(std::span<const int> labels, std::span<const int> mapping);

struct ConfusionReport {
  Eigen::MatrixXi matrix;  // rows = true, columns = aligned prediction
  std::vector<double> per_class_misclassification;
  double overall_misclassification = 0.0;
  double accuracy = 1.0;
  std::vector<int> permutation_used;
};

ConfusionReport confusion(std::span<const int> truth, std::span<const int> predicted, int G,
                          bool pin_degenerate = true);

/// Confusion report for an already-aligned labeling and its matrix.
ConfusionReport confusion_from_matrix(const Eigen::MatrixXi& matrix);

/// Pair-counting adjusted Rand index. Labels may be arbitrary integers.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Pearson chi-square over residual degrees of freedom: values near 1 mean
/// equidispersion relative to the fitted Poisson means.
double dispersion_statistic(const Eigen::VectorXd& y, const Eigen::VectorXd& fitted_means,
                            int free_parameters);

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method).
/// Returns assignment[row] = column.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace zipcwm
