#pragma once

#include "zipcwm/em.hpp"

#include <array>
#include <optional>
#include <string_view>
#include <vector>

namespace zipcwm {

enum class Criterion { aic, bic, icl, awe, aic3, aicc, aicu, caic };
inline constexpr std::array<Criterion, 8> kAllCriteria = {
    Criterion::aic,  Criterion::bic,  Criterion::icl,  Criterion::awe,
    Criterion::aic3, Criterion::aicc, Criterion::aicu, Criterion::caic};

std::string_view to_string(Criterion criterion);

/// Information criteria for one fitted model; smaller is better throughout.
struct CriteriaRow {
  int G = 0;
  double loglik = 0.0;
  double complete_loglik = 0.0;
  double entropy = 0.0;
  int k = 0;
  long n = 0;
  double aic = 0.0;
  double bic = 0.0;
  double icl = 0.0;
  double awe = 0.0;
  double aic3 = 0.0;
  std::optional<double> aicc;  // unavailable when n <= k + 1
  std::optional<double> aicu;
  double caic = 0.0;

  std::optional<double> value(Criterion criterion) const;
};

CriteriaRow compute_criteria(double loglik, double complete_loglik, double entropy, int k,
                             long n);

/// -sum_i sum_g z_ig log z_ig, with 0 log 0 = 0.
double classification_entropy(const Responsibilities& resp);

CriteriaRow criteria_for(const FitReport& fit, long n);

struct SelectionFailure {
  int G = 0;
  std::string message;
};

struct SelectionReport {
  std::vector<CriteriaRow> rows;
  std::array<std::optional<int>, kAllCriteria.size()> chosen_G{};
  std::vector<FitReport> fits;  // parallel to rows
  std::vector<SelectionFailure> failures;

  std::optional<int> chosen(Criterion criterion) const {
    return chosen_G[static_cast<std::size_t>(criterion)];
  }
};

/// Per-criterion argmin over rows; ties go to the smaller G.
std::array<std::optional<int>, kAllCriteria.size()> choose_components(
    const std::vector<CriteriaRow>& rows);

SelectionReport sweep_components(const Dataset& data, const ModelSpec& spec_template,
                                 const std::vector<int>& G_range, const EmConfig& config);

}  // namespace zipcwm
