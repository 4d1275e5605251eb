#pragma once

// Domain types and per-observation densities for the zero-inflated Poisson
// cluster-weighted model family and its reduced variants.
//
// Component indexing is 0-based in code. For zero-inflated families index 0
// is the degenerate point mass at y = 0 and carries no parameters besides its
// mixing weight; MixtureParameters::components then holds G - 1 entries.

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace zipcwm {

enum class Family { zipcwm, pcwm, fzip, zip, poisson_mixture };
enum class CovarianceStructure { spherical, diagonal, full };
enum class CategoricalCoding { dummy, numeric };

std::string_view to_string(Family family);
std::string_view to_string(CovarianceStructure structure);
std::string_view to_string(CategoricalCoding coding);
Family parse_family(std::string_view text);
CovarianceStructure parse_covariance(std::string_view text);
CategoricalCoding parse_coding(std::string_view text);

struct ModelSpec {
  Family family = Family::zipcwm;
  // Total component count G, including the degenerate zero component.
  int components = 3;
  CovarianceStructure covariance = CovarianceStructure::spherical;
  // When false the Poisson mean uses the intercept column only.
  bool regression_on_covariates = true;
  // Only meaningful for the CWM families; false drops p(q) and p(w) so that
  // ZIPCWM collapses onto FZIP and PCWM onto a plain Poisson regression mixture.
  bool covariate_densities = true;

  bool zero_inflated() const noexcept {
    return family == Family::zipcwm || family == Family::fzip || family == Family::zip;
  }
  bool uses_covariate_density() const noexcept {
    return covariate_densities && (family == Family::zipcwm || family == Family::pcwm);
  }
  bool constant_mean() const noexcept {
    return family == Family::poisson_mixture || !regression_on_covariates;
  }
  int poisson_components() const noexcept {
    return zero_inflated() ? components - 1 : components;
  }
  // Offset of the first Poisson component in a G-column responsibility matrix.
  int first_poisson() const noexcept { return zero_inflated() ? 1 : 0; }

  /// Throws UsageError on G < 2 for zero-inflated families, G != 2 for ZIP, G < 1.
  void validate() const;
};

struct CategoricalBlock {
  std::string name;
  int levels = 2;
  // n x levels, exactly one 1 per row.
  Eigen::MatrixXd onehot;
};

/// Counts, covariates and the coded regression design. Built through
/// make_dataset so the invariants (integral counts, valid one-hots, intercept
/// column) always hold.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd Q;
  std::vector<CategoricalBlock> W;
  Eigen::MatrixXd X;
  CategoricalCoding coding = CategoricalCoding::dummy;
  std::vector<std::string> continuous_names;
  std::string response_name = "y";
  std::optional<std::vector<int>> true_labels;  // 1-based

  Eigen::Index size() const noexcept { return y.size(); }
  Eigen::Index continuous_dim() const noexcept { return Q.cols(); }
  // 1-based level of categorical variable k for row i.
  int level(Eigen::Index i, std::size_t k) const;
};

/// Build a dataset from raw columns. `levels_codes` is n x p with 1-based level
/// codes; `level_counts[k]` is r_k. Throws DataError on any invariant breach.
Dataset make_dataset(Eigen::VectorXd y, Eigen::MatrixXd Q, const Eigen::MatrixXi& level_codes,
                     std::vector<int> level_counts, CategoricalCoding coding,
                     std::optional<std::vector<int>> true_labels = std::nullopt,
                     std::vector<std::string> continuous_names = {},
                     std::vector<std::string> categorical_names = {});

/// The regression design actually used by a model: all of X, or the intercept only.
Eigen::MatrixXd design_for(const Dataset& data, const ModelSpec& spec);

struct DataDims {
  Eigen::Index q = 0;               // continuous covariates
  std::vector<int> levels;          // r_k per categorical covariate
  Eigen::Index regressors = 0;      // d, columns of X besides the intercept
};
DataDims dims_of(const Dataset& data);

struct ComponentParameters {
  Eigen::VectorXd beta;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  std::vector<Eigen::VectorXd> alpha;
};

struct MixtureParameters {
  Eigen::VectorXd pi;
  std::vector<ComponentParameters> components;
};

/// Checks simplex, dimension and positive-definiteness constraints. Throws
/// DegenerateParameterError describing the first violation.
void validate_parameters(const MixtureParameters& params, const ModelSpec& spec,
                         const DataDims& dims);

/// Sort Poisson components by ascending mixing weight (degenerate stays first).
/// Returns the permutation applied: order[new_index] = old_index, over all G.
std::vector<int> canonicalize(MixtureParameters& params, const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Densities

double poisson_log_pmf(int y, double mean);
double poisson_mean(const Eigen::Ref<const Eigen::VectorXd>& x_row,
                    const Eigen::Ref<const Eigen::VectorXd>& beta);
double gaussian_log_density(const Eigen::Ref<const Eigen::VectorXd>& q,
                            const Eigen::Ref<const Eigen::VectorXd>& mu,
                            const Eigen::Ref<const Eigen::MatrixXd>& sigma);
double categorical_log_pmf(std::span<const Eigen::VectorXd> onehots,
                           std::span<const Eigen::VectorXd> alpha);

double log_sum_exp(std::span<const double> values);

/// One observation, copied out of a Dataset.
struct Observation {
  int y = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd q;
  std::vector<Eigen::VectorXd> onehots;
};
Observation observation(const Dataset& data, Eigen::Index i, const ModelSpec& spec);

/// Per-component log joint terms for one observation. The degenerate entry is
/// log pi_1 when y = 0 and -inf otherwise.
struct LogDensityRow {
  std::vector<double> terms;
  double total() const { return log_sum_exp(terms); }
};

struct JointDensity {
  double total;
  LogDensityRow per_component;
};

JointDensity joint_log_density(const Observation& obs, const MixtureParameters& params,
                               const ModelSpec& spec);

/// Caches Cholesky factors so a whole dataset can be scored without
/// refactorizing per row. Immutable after construction.
class MixtureDensity {
 public:
  MixtureDensity(const MixtureParameters& params, const ModelSpec& spec);

  /// Fills `out` (size G) with the per-component log terms of row i.
  void row_terms(const Dataset& data, const Eigen::MatrixXd& design, Eigen::Index i,
                 std::span<double> out) const;

  int components() const noexcept { return spec_.components; }

 private:
  struct Prepared {
    Eigen::VectorXd beta;
    Eigen::VectorXd mu;
    Eigen::MatrixXd chol_lower;
    double log_norm = 0.0;  // -0.5 (q log 2pi + log det Sigma)
    std::vector<Eigen::VectorXd> log_alpha;
  };

  ModelSpec spec_;
  Eigen::VectorXd log_pi_;
  std::vector<Prepared> prepared_;
};

// ---------------------------------------------------------------------------
// Bookkeeping

int count_free_parameters(const ModelSpec& spec, const DataDims& dims);

struct RankReport {
  Eigen::Index rank = 0;
  Eigen::Index columns = 0;
  bool full_rank = false;
};
RankReport check_identifiability(const Eigen::MatrixXd& X);

}  // namespace zipcwm
