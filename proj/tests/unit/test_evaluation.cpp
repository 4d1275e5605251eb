#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "zipcwm/error.hpp"
#include "zipcwm/evaluation.hpp"

#include <algorithm>
#include <numeric>
#include <random>

using namespace zipcwm;

namespace {

std::vector<int> from_matrix(const std::vector<std::vector<int>>& counts,
                             std::vector<int>* truth) {
  std::vector<int> predicted;
  for (std::size_t t = 0; t < counts.size(); ++t)
    for (std::size_t p = 0; p < counts[t].size(); ++p)
      for (int k = 0; k < counts[t][p]; ++k) {
        truth->push_back(static_cast<int>(t) + 1);
        predicted.push_back(static_cast<int>(p) + 1);
      }
  return predicted;
}

int diagonal_after(const std::vector<int>& truth, const std::vector<int>& pred,
                   const std::vector<int>& mapping) {
  int hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    hits += mapping[static_cast<std::size_t>(pred[i] - 1)] == truth[i];
  return hits;
}

// Pair-counting ARI by direct enumeration of all pairs.
double ari_by_pairs(const std::vector<int>& a, const std::vector<int>& b) {
  long both = 0, only_a = 0, only_b = 0, neither = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      only_a += sa && !sb;
      only_b += !sa && sb;
      neither += !sa && !sb;
    }
  const double total = static_cast<double>(both + only_a + only_b + neither);
  const double pairs_a = static_cast<double>(both + only_a);
  const double pairs_b = static_cast<double>(both + only_b);
  const double expected = pairs_a * pairs_b / total;
  const double max_index = 0.5 * (pairs_a + pairs_b);
  return (static_cast<double>(both) - expected) / (max_index - expected);
}

}  // namespace

TEST_CASE("reported confusion blocks") {
  std::vector<int> truth;
  const auto pred = from_matrix({{485, 0, 0}, {45, 253, 0}, {0, 22, 195}}, &truth);
  const auto report = confusion(truth, pred, 3);
  CHECK(report.overall_misclassification == doctest::Approx(0.067).epsilon(1e-12));
  CHECK(report.accuracy == doctest::Approx(0.933).epsilon(1e-12));
  CHECK(report.per_class_misclassification[1] == doctest::Approx(45.0 / 298).epsilon(1e-12));
  CHECK(report.per_class_misclassification[1] == doctest::Approx(0.1510).epsilon(1e-3));
  CHECK(report.matrix.sum() == 1000);

  std::vector<int> truth2;
  const auto pred2 = from_matrix({{485, 0, 0}, {45, 167, 86}, {0, 0, 217}}, &truth2);
  CHECK(confusion(truth2, pred2, 3).overall_misclassification ==
        doctest::Approx(0.131).epsilon(1e-12));
}

TEST_CASE("alignment of identical and swapped labelings") {
  const std::vector<int> truth = {1, 2, 3, 3, 2, 1, 2};
  CHECK(align_labels(truth, truth, 3) == std::vector<int>{1, 2, 3});
  std::vector<int> swapped = truth;
  for (int& l : swapped) l = l == 2 ? 3 : (l == 3 ? 2 : l);
  CHECK(align_labels(truth, swapped, 3) == std::vector<int>{1, 3, 2});
  const auto report = confusion(truth, swapped, 3);
  CHECK(report.overall_misclassification == 0.0);
  CHECK(report.accuracy == 1.0);
}

TEST_CASE("alignment keeps the degenerate label pinned") {
  const std::vector<int> truth = {1, 1, 1, 2, 2, 3};
  const std::vector<int> pred = {2, 2, 2, 1, 1, 3};
  CHECK(align_labels(truth, pred, 3, true)[0] == 1);
  CHECK(align_labels(truth, pred, 3, false) == std::vector<int>{2, 1, 3});
}

TEST_CASE("alignment matches exhaustive search over permutations") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const int G = 3 + rep % 3;
    std::uniform_int_distribution<int> label(1, G);
    std::vector<int> truth(30), pred(30);
    for (int i = 0; i < 30; ++i) {
      truth[i] = label(rng);
      pred[i] = label(rng);
    }
    for (bool pin : {true, false}) {
      std::vector<int> perm(static_cast<std::size_t>(G));
      std::iota(perm.begin(), perm.end(), 1);
      int best = -1;
      do {
        if (pin && perm[0] != 1) continue;
        best = std::max(best, diagonal_after(truth, pred, perm));
      } while (std::next_permutation(perm.begin(), perm.end()));
      const auto mapping = align_labels(truth, pred, G, pin);
      CHECK(diagonal_after(truth, pred, mapping) == best);
      if (pin) CHECK(mapping[0] == 1);
    }
  }
}

TEST_CASE("labels outside 1..G are rejected") {
  const std::vector<int> truth = {1, 2, 4};
  const std::vector<int> pred = {1, 2, 3};
  CHECK_THROWS_AS(confusion(truth, pred, 3), DataError);
}

TEST_CASE("adjusted Rand index") {
  const std::vector<int> a = {1, 1, 2, 2, 3, 3};
  CHECK(adjusted_rand_index(a, a) == doctest::Approx(1.0));
  const std::vector<int> relabeled = {7, 7, 4, 4, 9, 9};
  CHECK(adjusted_rand_index(a, relabeled) == doctest::Approx(1.0));
  const std::vector<int> one(5, 1);
  CHECK(adjusted_rand_index(one, one) == 1.0);
  const std::vector<int> singletons = {1, 2, 3, 4, 5};
  CHECK(adjusted_rand_index(one, singletons) == 0.0);
  CHECK_THROWS_AS(adjusted_rand_index(std::vector<int>{1}, std::vector<int>{1}), DataError);

  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 30; ++rep) {
    std::uniform_int_distribution<int> la(1, 2 + rep % 3), lb(1, 2 + rep % 4);
    std::vector<int> x(20), y(20);
    for (int i = 0; i < 20; ++i) {
      x[i] = la(rng);
      y[i] = lb(rng);
    }
    const double ari = adjusted_rand_index(x, y);
    CHECK(ari == doctest::Approx(ari_by_pairs(x, y)).epsilon(1e-12));
    CHECK(ari == doctest::Approx(adjusted_rand_index(y, x)).epsilon(1e-14));
  }
  // One cluster against several: non-positive, as the pair count shows.
  const std::vector<int> three = {1, 1, 2, 2, 3, 3, 3};
  const std::vector<int> single(7, 1);
  CHECK(adjusted_rand_index(single, three) <= 0.0);
  CHECK(adjusted_rand_index(single, three) == doctest::Approx(ari_by_pairs(single, three)));
}

TEST_CASE("dispersion statistic") {
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  CHECK(dispersion_statistic(y, y, 1) == 0.0);
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(4, 2.5);
  CHECK(dispersion_statistic(y, mu, 1) == doctest::Approx((2.25 + 0.25 + 0.25 + 2.25) / 2.5 / 3));
  Eigen::VectorXd bad = mu;
  bad(1) = 0;
  CHECK_THROWS_AS(dispersion_statistic(y, bad, 1), DomainError);

  std::mt19937_64 rng(4);
  int inside = 0;
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd sample(5000);
    for (Eigen::Index i = 0; i < sample.size(); ++i)
      sample(i) = std::poisson_distribution<int>(4.0)(rng);
    const Eigen::VectorXd fitted = Eigen::VectorXd::Constant(sample.size(), sample.mean());
    const double phi = dispersion_statistic(sample, fitted, 1);
    inside += phi > 0.9 && phi < 1.1;
  }
  CHECK(inside >= 9);
}

TEST_CASE("assignment solver") {
  Eigen::MatrixXd cost(3, 3);
  cost << 4, 1, 3, 2, 0, 5, 3, 2, 2;
  const auto assignment = solve_assignment(cost);
  double total = 0;
  for (int r = 0; r < 3; ++r) total += cost(r, assignment[static_cast<std::size_t>(r)]);
  CHECK(total == 5.0);
}
