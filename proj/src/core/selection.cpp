#include "zipcwm/selection.hpp"

#include "zipcwm/error.hpp"

#include <cmath>

namespace zipcwm {

std::string_view to_string(Criterion criterion) {
  switch (criterion) {
    case Criterion::aic: return "AIC";
    case Criterion::bic: return "BIC";
    case Criterion::icl: return "ICL";
    case Criterion::awe: return "AWE";
    case Criterion::aic3: return "AIC3";
    case Criterion::aicc: return "AICc";
    case Criterion::aicu: return "AICu";
    case Criterion::caic: return "CAIC";
  }
  return "unknown";
}

std::optional<double> CriteriaRow::value(Criterion criterion) const {
  switch (criterion) {
    case Criterion::aic: return aic;
    case Criterion::bic: return bic;
    case Criterion::icl: return icl;
    case Criterion::awe: return awe;
    case Criterion::aic3: return aic3;
    case Criterion::aicc: return aicc;
    case Criterion::aicu: return aicu;
    case Criterion::caic: return caic;
  }
  return std::nullopt;
}

CriteriaRow compute_criteria(double loglik, double complete_loglik, double entropy, int k,
                             long n) {
  if (n < 1) throw UsageError("criteria need a positive sample size");
  if (k < 0) throw UsageError("free parameter count must be nonnegative");
  if (entropy < 0.0) throw UsageError("classification entropy must be nonnegative");
  CriteriaRow row;
  row.loglik = loglik;
  row.complete_loglik = complete_loglik;
  row.entropy = entropy;
  row.k = k;
  row.n = n;
  const double kd = k;
  const double nd = static_cast<double>(n);
  const double log_n = std::log(nd);
  const double deviance = -2.0 * loglik;
  row.aic = deviance + 2.0 * kd;
  row.aic3 = deviance + 3.0 * kd;
  row.bic = deviance + kd * log_n;
  row.caic = deviance + kd * (log_n + 1.0);
  row.icl = row.bic + 2.0 * entropy;
  row.awe = -2.0 * complete_loglik + 2.0 * kd * (1.5 + log_n);
  if (nd > kd + 1.0) {
    row.aicc = row.aic + 2.0 * kd * (kd + 1.0) / (nd - kd - 1.0);
    row.aicu = *row.aicc + nd * std::log(nd / (nd - kd - 1.0));
  }
  return row;
}

double classification_entropy(const Responsibilities& resp) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < resp.z.rows(); ++i)
    for (Eigen::Index g = 0; g < resp.z.cols(); ++g) {
      const double z = resp.z(i, g);
      if (z > 0.0) h -= z * std::log(z);
    }
  return std::max(h, 0.0);
}

CriteriaRow criteria_for(const FitReport& fit, long n) {
  CriteriaRow row = compute_criteria(fit.final_loglik, fit.complete_loglik,
                                     classification_entropy(fit.responsibilities),
                                     fit.free_parameters, n);
  row.G = fit.spec.components;
  return row;
}

std::array<std::optional<int>, kAllCriteria.size()> choose_components(
    const std::vector<CriteriaRow>& rows) {
  std::array<std::optional<int>, kAllCriteria.size()> chosen{};
  for (std::size_t c = 0; c < kAllCriteria.size(); ++c) {
    std::optional<double> best_value;
    for (const auto& row : rows) {
      const auto v = row.value(kAllCriteria[c]);
      if (!v) continue;
      if (!best_value || *v < *best_value || (*v == *best_value && row.G < *chosen[c])) {
        best_value = v;
        chosen[c] = row.G;
      }
    }
  }
  return chosen;
}

SelectionReport sweep_components(const Dataset& data, const ModelSpec& spec_template,
                                 const std::vector<int>& G_range, const EmConfig& config) {
  if (G_range.empty()) throw UsageError("component range is empty");
  SelectionReport report;
  for (int G : G_range) {
    ModelSpec spec = spec_template;
    spec.components = G;
    try {
      FitReport fit = fit_em(data, spec, config);
      report.rows.push_back(criteria_for(fit, static_cast<long>(data.size())));
      report.fits.push_back(std::move(fit));
    } catch (const NumericalError& e) {
      report.failures.push_back({G, e.what()});
    }
  }
  report.chosen_G = choose_components(report.rows);
  return report;
}

}  // namespace zipcwm
