#include "zipcwm/evaluation.hpp"

#include "zipcwm/error.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <utility>

namespace zipcwm {

namespace {

void check_labels(std::span<const int> labels, int G, const char* which) {
  for (int v : labels)
    if (v < 1 || v > G)
      throw DataError(std::string(which) + " label " + std::to_string(v) + " outside 1.." +
                      std::to_string(G));
}

double choose2(double v) { return v * (v - 1.0) / 2.0; }

}  // namespace

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  // Potentials formulation, 1-based internally.
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw UsageError("assignment cost matrix must be square");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) assignment[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  return assignment;
}

std::vector<int> align_labels(std::span<const int> truth, std::span<const int> predicted, int G,
                              bool pin_degenerate) {
  if (truth.size() != predicted.size()) throw DataError("label vectors differ in length");
  if (G < 1) throw UsageError("G must be positive");
  check_labels(truth, G, "true");
  check_labels(predicted, G, "predicted");

  const int offset = pin_degenerate ? 1 : 0;
  const int m = G - offset;
  std::vector<int> mapping(static_cast<std::size_t>(G));
  if (pin_degenerate) mapping[0] = 1;
  if (m == 0) return mapping;

  // cost(p, t) = -count(pred = p, true = t) over the permutable labels.
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i] - 1 - offset;
    const int p = predicted[i] - 1 - offset;
    if (t >= 0 && p >= 0) cost(p, t) -= 1.0;
  }
  const std::vector<int> assignment = solve_assignment(cost);
  for (int p = 0; p < m; ++p)
    mapping[static_cast<std::size_t>(p + offset)] = assignment[static_cast<std::size_t>(p)] + 1 + offset;
  return mapping;
}

std::vector<int> apply_mapping(std::span<const int> labels, std::span<const int> mapping) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (int v : labels) {
    if (v < 1 || static_cast<std::size_t>(v) > mapping.size())
      throw DataError("label " + std::to_string(v) + " has no mapping");
    out.push_back(mapping[static_cast<std::size_t>(v - 1)]);
  }
  return out;
}

ConfusionReport confusion_from_matrix(const Eigen::MatrixXi& matrix) {
  ConfusionReport report;
  report.matrix = matrix;
  const double total = matrix.sum();
  const Eigen::Index G = matrix.rows();
  report.per_class_misclassification.resize(static_cast<std::size_t>(G), 0.0);
  for (Eigen::Index g = 0; g < G; ++g) {
    const double row = matrix.row(g).sum();
    if (row > 0)
      report.per_class_misclassification[static_cast<std::size_t>(g)] = 1.0 - matrix(g, g) / row;
  }
  report.overall_misclassification = total > 0 ? 1.0 - matrix.trace() / total : 0.0;
  report.accuracy = 1.0 - report.overall_misclassification;
  report.permutation_used.resize(static_cast<std::size_t>(G));
  for (Eigen::Index g = 0; g < G; ++g)
    report.permutation_used[static_cast<std::size_t>(g)] = static_cast<int>(g) + 1;
  return report;
}

ConfusionReport confusion(std::span<const int> truth, std::span<const int> predicted, int G,
                          bool pin_degenerate) {
  const std::vector<int> mapping = align_labels(truth, predicted, G, pin_degenerate);
  const std::vector<int> aligned = apply_mapping(predicted, mapping);
  Eigen::MatrixXi matrix = Eigen::MatrixXi::Zero(G, G);
  for (std::size_t i = 0; i < truth.size(); ++i) ++matrix(truth[i] - 1, aligned[i] - 1);
  ConfusionReport report = confusion_from_matrix(matrix);
  report.permutation_used = mapping;
  return report;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw DataError("partitions differ in length");
  if (a.size() < 2) throw DataError("adjusted Rand index needs at least two observations");
  std::map<int, std::size_t> ia, ib;
  for (int v : a) ia.emplace(v, ia.size());
  for (int v : b) ib.emplace(v, ib.size());
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ia.size()),
                                                static_cast<Eigen::Index>(ib.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    table(static_cast<Eigen::Index>(ia[a[i]]), static_cast<Eigen::Index>(ib[b[i]])) += 1.0;

  double index = 0.0;
  for (Eigen::Index r = 0; r < table.rows(); ++r)
    for (Eigen::Index c = 0; c < table.cols(); ++c) index += choose2(table(r, c));
  double sum_a = 0.0, sum_b = 0.0;
  for (Eigen::Index r = 0; r < table.rows(); ++r) sum_a += choose2(table.row(r).sum());
  for (Eigen::Index c = 0; c < table.cols(); ++c) sum_b += choose2(table.col(c).sum());
  const double pairs = choose2(static_cast<double>(a.size()));
  const double expected = sum_a * sum_b / pairs;
  const double maximum = 0.5 * (sum_a + sum_b);
  if (maximum == expected) {
    // Identical partitions have one nonzero cell per row and per column.
    const bool identical = table.rows() == table.cols() &&
                           ((table.array() > 0).rowwise().count() == 1).all() &&
                           ((table.array() > 0).colwise().count() == 1).all();
    return identical ? 1.0 : 0.0;
  }
  return (index - expected) / (maximum - expected);
}

double dispersion_statistic(const Eigen::VectorXd& y, const Eigen::VectorXd& fitted_means,
                            int free_parameters) {
  if (y.size() != fitted_means.size()) throw DataError("response and fitted means differ in length");
  if ((fitted_means.array() <= 0.0).any()) throw DomainError("fitted means must be positive");
  const double dof = static_cast<double>(y.size()) - free_parameters;
  if (!(dof > 0.0)) throw UsageError("no residual degrees of freedom for the dispersion statistic");
  const double chi2 = ((y - fitted_means).array().square() / fitted_means.array()).sum();
  return chi2 / dof;
}

}  // namespace zipcwm
