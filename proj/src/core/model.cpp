#include "zipcwm/model.hpp"

#include "zipcwm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace zipcwm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kSimplexTolerance = 1e-10;

template <typename E>
struct NamedValue {
  std::string_view name;
  E value;
};

constexpr NamedValue<Family> kFamilies[] = {
    {"zipcwm", Family::zipcwm}, {"pcwm", Family::pcwm}, {"fzip", Family::fzip},
    {"zip", Family::zip},       {"poisson-mixture", Family::poisson_mixture}};

constexpr NamedValue<CovarianceStructure> kCovariances[] = {
    {"spherical", CovarianceStructure::spherical},
    {"diagonal", CovarianceStructure::diagonal},
    {"full", CovarianceStructure::full}};

constexpr NamedValue<CategoricalCoding> kCodings[] = {
    {"dummy", CategoricalCoding::dummy}, {"numeric", CategoricalCoding::numeric}};

template <typename E, std::size_t N>
std::string_view name_of(const NamedValue<E> (&table)[N], E value) {
  for (const auto& entry : table)
    if (entry.value == value) return entry.name;
  return "unknown";
}

template <typename E, std::size_t N>
E parse_named(const NamedValue<E> (&table)[N], std::string_view text, const char* what) {
  for (const auto& entry : table)
    if (entry.name == text) return entry.value;
  std::string allowed;
  for (const auto& entry : table) {
    if (!allowed.empty()) allowed += ", ";
    allowed += entry.name;
  }
  throw UsageError("unknown " + std::string(what) + " '" + std::string(text) +
                   "' (expected one of: " + allowed + ")");
}

bool is_integral(double v) { return std::isfinite(v) && std::floor(v) == v; }

}  // namespace

std::string_view to_string(Family family) { return name_of(kFamilies, family); }
std::string_view to_string(CovarianceStructure s) { return name_of(kCovariances, s); }
std::string_view to_string(CategoricalCoding c) { return name_of(kCodings, c); }
Family parse_family(std::string_view text) { return parse_named(kFamilies, text, "family"); }
CovarianceStructure parse_covariance(std::string_view text) {
  return parse_named(kCovariances, text, "covariance structure");
}
CategoricalCoding parse_coding(std::string_view text) {
  return parse_named(kCodings, text, "categorical coding");
}

void ModelSpec::validate() const {
  if (components < 1) throw UsageError("component count G must be at least 1");
  if (zero_inflated() && components < 2)
    throw UsageError("zero-inflated families need G >= 2 (degenerate + one Poisson component)");
  if (family == Family::zip && components != 2)
    throw UsageError("the ZIP family has exactly G = 2 components");
}

int Dataset::level(Eigen::Index i, std::size_t k) const {
  Eigen::Index s;
  W.at(k).onehot.row(i).maxCoeff(&s);
  return static_cast<int>(s) + 1;
}

Dataset make_dataset(Eigen::VectorXd y, Eigen::MatrixXd Q, const Eigen::MatrixXi& level_codes,
                     std::vector<int> level_counts, CategoricalCoding coding,
                     std::optional<std::vector<int>> true_labels,
                     std::vector<std::string> continuous_names,
                     std::vector<std::string> categorical_names) {
  const Eigen::Index n = y.size();
  if (n == 0) throw DataError("dataset has no observations");
  if (Q.rows() != n && !(Q.size() == 0 && Q.cols() == 0))
    throw DataError("continuous block row count does not match the response length");
  if (Q.size() == 0) Q.resize(n, 0);
  const auto p = static_cast<Eigen::Index>(level_counts.size());
  if (level_codes.cols() != p || (p > 0 && level_codes.rows() != n))
    throw DataError("categorical code matrix shape does not match the level counts");

  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(y[i] >= 0.0) || !is_integral(y[i]))
      throw DataError("response at row " + std::to_string(i + 1) +
                      " is not a nonnegative integer");
  }
  if (!Q.allFinite()) throw DataError("continuous covariates contain non-finite values");
  if (true_labels && static_cast<Eigen::Index>(true_labels->size()) != n)
    throw DataError("true label vector length does not match the response length");

  Dataset data;
  data.coding = coding;
  data.true_labels = std::move(true_labels);
  data.continuous_names = std::move(continuous_names);
  if (data.continuous_names.empty())
    for (Eigen::Index j = 0; j < Q.cols(); ++j)
      data.continuous_names.push_back("q" + std::to_string(j + 1));
  if (static_cast<Eigen::Index>(data.continuous_names.size()) != Q.cols())
    throw DataError("continuous name count does not match the continuous block");

  Eigen::Index regressors = Q.cols();
  for (Eigen::Index k = 0; k < p; ++k) {
    const int r = level_counts[static_cast<std::size_t>(k)];
    if (r < 2) throw DataError("categorical covariates need at least 2 levels");
    regressors += coding == CategoricalCoding::dummy ? r - 1 : 1;
  }

  data.X.resize(n, 1 + regressors);
  data.X.col(0).setOnes();
  data.X.middleCols(1, Q.cols()) = Q;
  Eigen::Index col = 1 + Q.cols();
  for (Eigen::Index k = 0; k < p; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    CategoricalBlock block;
    block.levels = level_counts[idx];
    block.name = idx < categorical_names.size() ? categorical_names[idx]
                                                : "w" + std::to_string(k + 1);
    block.onehot = Eigen::MatrixXd::Zero(n, block.levels);
    const Eigen::Index width = coding == CategoricalCoding::dummy ? block.levels - 1 : 1;
    data.X.middleCols(col, width).setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const int s = level_codes(i, k);
      if (s < 1 || s > block.levels)
        throw DataError("categorical '" + block.name + "' level " + std::to_string(s) +
                        " at row " + std::to_string(i + 1) + " outside 1.." +
                        std::to_string(block.levels));
      block.onehot(i, s - 1) = 1.0;
      if (coding == CategoricalCoding::numeric)
        data.X(i, col) = s;
      else if (s > 1)
        data.X(i, col + s - 2) = 1.0;
    }
    col += width;
    data.W.push_back(std::move(block));
  }
  data.y = std::move(y);
  data.Q = std::move(Q);
  return data;
}

Eigen::MatrixXd design_for(const Dataset& data, const ModelSpec& spec) {
  if (spec.constant_mean()) return data.X.leftCols(1);
  return data.X;
}

DataDims dims_of(const Dataset& data) {
  DataDims dims;
  dims.q = data.Q.cols();
  for (const auto& block : data.W) dims.levels.push_back(block.levels);
  dims.regressors = data.X.cols() - 1;
  return dims;
}

void validate_parameters(const MixtureParameters& params, const ModelSpec& spec,
                         const DataDims& dims) {
  spec.validate();
  if (params.pi.size() != spec.components)
    throw DegenerateParameterError("mixing weight vector has wrong length");
  if (std::abs(params.pi.sum() - 1.0) > kSimplexTolerance)
    throw DegenerateParameterError("mixing weights do not sum to 1");
  for (Eigen::Index g = 0; g < params.pi.size(); ++g)
    if (!(params.pi[g] > 0.0 && params.pi[g] < 1.0) && spec.components > 1)
      throw DegenerateParameterError("mixing weight outside (0, 1)");
  if (static_cast<int>(params.components.size()) != spec.poisson_components())
    throw DegenerateParameterError("wrong number of Poisson components");

  const Eigen::Index p_beta = spec.constant_mean() ? 1 : 1 + dims.regressors;
  for (const auto& c : params.components) {
    if (c.beta.size() != p_beta || !c.beta.allFinite())
      throw DegenerateParameterError("regression coefficients have wrong length or are not finite");
    if (!spec.uses_covariate_density()) continue;
    if (c.mu.size() != dims.q || c.sigma.rows() != dims.q || c.sigma.cols() != dims.q)
      throw DegenerateParameterError("Gaussian block has wrong dimensions");
    if (dims.q > 0) {
      if (!c.sigma.isApprox(c.sigma.transpose(), 1e-12))
        throw DegenerateParameterError("covariance is not symmetric");
      Eigen::LLT<Eigen::MatrixXd> llt(c.sigma);
      if (llt.info() != Eigen::Success)
        throw DegenerateParameterError("covariance is not positive definite");
    }
    if (c.alpha.size() != dims.levels.size())
      throw DegenerateParameterError("categorical parameter count does not match the data");
    for (std::size_t k = 0; k < c.alpha.size(); ++k) {
      if (c.alpha[k].size() != dims.levels[k])
        throw DegenerateParameterError("categorical probability vector has wrong length");
      if ((c.alpha[k].array() <= 0.0).any() ||
          std::abs(c.alpha[k].sum() - 1.0) > kSimplexTolerance)
        throw DegenerateParameterError("categorical probabilities are not a positive simplex");
    }
  }
}

std::vector<int> canonicalize(MixtureParameters& params, const ModelSpec& spec) {
  const int first = spec.first_poisson();
  std::vector<int> poisson(static_cast<std::size_t>(spec.poisson_components()));
  std::iota(poisson.begin(), poisson.end(), 0);
  std::stable_sort(poisson.begin(), poisson.end(), [&](int a, int b) {
    return params.pi[first + a] < params.pi[first + b];
  });

  std::vector<int> order;
  if (first == 1) order.push_back(0);
  Eigen::VectorXd pi(params.pi.size());
  if (first == 1) pi[0] = params.pi[0];
  std::vector<ComponentParameters> components;
  for (std::size_t j = 0; j < poisson.size(); ++j) {
    const int old = poisson[j];
    order.push_back(first + old);
    pi[first + static_cast<Eigen::Index>(j)] = params.pi[first + old];
    components.push_back(std::move(params.components[static_cast<std::size_t>(old)]));
  }
  params.pi = std::move(pi);
  params.components = std::move(components);
  return order;
}

// ---------------------------------------------------------------------------

double poisson_log_pmf(int y, double mean) {
  if (!(mean > 0.0) || !std::isfinite(mean))
    throw DomainError("Poisson mean must be positive and finite");
  if (y < 0) throw DomainError("Poisson count must be nonnegative");
  if (y == 0) return -mean;
  return y * std::log(mean) - mean - std::lgamma(static_cast<double>(y) + 1.0);
}

double poisson_mean(const Eigen::Ref<const Eigen::VectorXd>& x_row,
                    const Eigen::Ref<const Eigen::VectorXd>& beta) {
  if (x_row.size() != beta.size())
    throw UsageError("design row and coefficient vector lengths differ");
  return std::exp(x_row.dot(beta));
}

double gaussian_log_density(const Eigen::Ref<const Eigen::VectorXd>& q,
                            const Eigen::Ref<const Eigen::VectorXd>& mu,
                            const Eigen::Ref<const Eigen::MatrixXd>& sigma) {
  const Eigen::Index dim = q.size();
  if (mu.size() != dim || sigma.rows() != dim || sigma.cols() != dim)
    throw UsageError("Gaussian argument dimensions disagree");
  if (dim == 0) return 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw DegenerateParameterError("covariance matrix failed Cholesky factorization");
  const Eigen::MatrixXd L = llt.matrixL();
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  const Eigen::VectorXd u = L.triangularView<Eigen::Lower>().solve(q - mu);
  return -0.5 * (static_cast<double>(dim) * std::log(2.0 * std::numbers::pi) + log_det +
                 u.squaredNorm());
}

double categorical_log_pmf(std::span<const Eigen::VectorXd> onehots,
                           std::span<const Eigen::VectorXd> alpha) {
  if (onehots.size() != alpha.size())
    throw UsageError("categorical variable count differs between data and parameters");
  double total = 0.0;
  for (std::size_t k = 0; k < onehots.size(); ++k) {
    const auto& w = onehots[k];
    if (w.size() != alpha[k].size())
      throw UsageError("one-hot length differs from the level count");
    Eigen::Index selected = -1;
    for (Eigen::Index s = 0; s < w.size(); ++s) {
      if (w[s] == 1.0 && selected < 0)
        selected = s;
      else if (w[s] != 0.0)
        throw DataError("categorical covariate is not a valid one-hot vector");
    }
    if (selected < 0) throw DataError("categorical covariate is not a valid one-hot vector");
    if (!(alpha[k][selected] > 0.0))
      throw DegenerateParameterError("selected categorical level has zero probability");
    total += std::log(alpha[k][selected]);
  }
  return total;
}

double log_sum_exp(std::span<const double> values) {
  double peak = kNegInf;
  for (double v : values) peak = std::max(peak, v);
  if (peak == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

Observation observation(const Dataset& data, Eigen::Index i, const ModelSpec& spec) {
  Observation obs;
  obs.y = static_cast<int>(data.y[i]);
  obs.x = spec.constant_mean() ? Eigen::VectorXd::Ones(1) : Eigen::VectorXd(data.X.row(i).transpose());
  obs.q = data.Q.row(i).transpose();
  for (const auto& block : data.W) obs.onehots.emplace_back(block.onehot.row(i).transpose());
  return obs;
}

JointDensity joint_log_density(const Observation& obs, const MixtureParameters& params,
                               const ModelSpec& spec) {
  spec.validate();
  if (params.pi.size() != spec.components ||
      static_cast<int>(params.components.size()) != spec.poisson_components())
    throw DegenerateParameterError("parameters do not match the model specification");

  JointDensity out;
  auto& terms = out.per_component.terms;
  terms.reserve(static_cast<std::size_t>(spec.components));
  if (spec.zero_inflated()) terms.push_back(obs.y == 0 ? std::log(params.pi[0]) : kNegInf);
  const int first = spec.first_poisson();
  for (std::size_t j = 0; j < params.components.size(); ++j) {
    const auto& c = params.components[j];
    double term = std::log(params.pi[first + static_cast<Eigen::Index>(j)]) +
                  poisson_log_pmf(obs.y, poisson_mean(obs.x, c.beta));
    if (spec.uses_covariate_density()) {
      term += gaussian_log_density(obs.q, c.mu, c.sigma);
      term += categorical_log_pmf(obs.onehots, c.alpha);
    }
    terms.push_back(term);
  }
  out.total = out.per_component.total();
  return out;
}

MixtureDensity::MixtureDensity(const MixtureParameters& params, const ModelSpec& spec)
    : spec_(spec), log_pi_(params.pi.array().log()) {
  spec.validate();
  if (params.pi.size() != spec.components ||
      static_cast<int>(params.components.size()) != spec.poisson_components())
    throw DegenerateParameterError("parameters do not match the model specification");
  prepared_.reserve(params.components.size());
  for (const auto& c : params.components) {
    Prepared p;
    p.beta = c.beta;
    if (spec.uses_covariate_density()) {
      p.mu = c.mu;
      const Eigen::Index dim = c.mu.size();
      if (dim > 0) {
        Eigen::LLT<Eigen::MatrixXd> llt(c.sigma);
        if (llt.info() != Eigen::Success)
          throw DegenerateParameterError("covariance matrix failed Cholesky factorization");
        p.chol_lower = llt.matrixL();
        p.log_norm = -0.5 * (static_cast<double>(dim) * std::log(2.0 * std::numbers::pi) +
                             2.0 * p.chol_lower.diagonal().array().log().sum());
      }
      for (const auto& a : c.alpha) {
        if ((a.array() <= 0.0).any())
          throw DegenerateParameterError("categorical probability is not positive");
        p.log_alpha.emplace_back(a.array().log());
      }
    }
    prepared_.push_back(std::move(p));
  }
}

void MixtureDensity::row_terms(const Dataset& data, const Eigen::MatrixXd& design,
                               Eigen::Index i, std::span<double> out) const {
  const int y = static_cast<int>(data.y[i]);
  std::size_t g = 0;
  if (spec_.zero_inflated()) out[g++] = y == 0 ? log_pi_[0] : kNegInf;
  Eigen::VectorXd diff;
  for (std::size_t j = 0; j < prepared_.size(); ++j, ++g) {
    const auto& p = prepared_[j];
    const double eta = design.row(i).dot(p.beta);
    const double mean = std::exp(eta);
    double term = log_pi_[static_cast<Eigen::Index>(g)];
    if (!(mean > 0.0) || !std::isfinite(mean))
      throw DomainError("Poisson mean left the representable range");
    term += y == 0 ? -mean : y * eta - mean - std::lgamma(y + 1.0);
    if (spec_.uses_covariate_density()) {
      if (p.mu.size() > 0) {
        diff = data.Q.row(i).transpose() - p.mu;
        p.chol_lower.triangularView<Eigen::Lower>().solveInPlace(diff);
        term += p.log_norm - 0.5 * diff.squaredNorm();
      }
      for (std::size_t k = 0; k < p.log_alpha.size(); ++k)
        term += p.log_alpha[k][data.level(i, k) - 1];
    }
    out[g] = term;
  }
}

// ---------------------------------------------------------------------------

int count_free_parameters(const ModelSpec& spec, const DataDims& dims) {
  int per_component = spec.constant_mean() ? 1 : 1 + static_cast<int>(dims.regressors);
  if (spec.uses_covariate_density()) {
    const int q = static_cast<int>(dims.q);
    per_component += q;
    if (q > 0) {
      switch (spec.covariance) {
        case CovarianceStructure::spherical: per_component += 1; break;
        case CovarianceStructure::diagonal: per_component += q; break;
        case CovarianceStructure::full: per_component += q * (q + 1) / 2; break;
      }
    }
    for (int r : dims.levels) per_component += r - 1;
  }
  return (spec.components - 1) + spec.poisson_components() * per_component;
}

RankReport check_identifiability(const Eigen::MatrixXd& X) {
  RankReport report;
  report.columns = X.cols();
  if (X.size() == 0) return report;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X);
  const auto& sv = svd.singularValues();
  const double tol = sv.size() > 0 ? sv[0] * static_cast<double>(std::max(X.rows(), X.cols())) *
                                         std::numeric_limits<double>::epsilon()
                                   : 0.0;
  report.rank = (sv.array() > tol).count();
  report.full_rank = report.rank == X.cols();
  return report;
}

}  // namespace zipcwm
