// zipcwm command-line driver. Links only the C API.

#include "zipcwm/zipcwm.h"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitInternal = 1;

struct CliFailure {
  int code;
  std::string message;
};

int exit_code(zipcwm_status status) {
  switch (status) {
    case ZIPCWM_OK: return 0;
    case ZIPCWM_ERR_USAGE: return kExitUsage;
    case ZIPCWM_ERR_DATA:
    case ZIPCWM_ERR_IO: return kExitData;
    case ZIPCWM_ERR_NUMERICAL: return kExitNumerical;
    default: return kExitInternal;
  }
}

void check(zipcwm_status status) {
  if (status != ZIPCWM_OK) throw CliFailure{exit_code(status), zipcwm_last_error()};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using DatasetPtr = std::unique_ptr<zipcwm_dataset, Deleter<zipcwm_dataset, zipcwm_dataset_free>>;
using FitPtr = std::unique_ptr<zipcwm_fit, Deleter<zipcwm_fit, zipcwm_fit_free>>;
using SelectionPtr =
    std::unique_ptr<zipcwm_selection, Deleter<zipcwm_selection, zipcwm_selection_free>>;

std::string default_out_dir() {
  const char* env = std::getenv("ZIPCWM_OUT_DIR");
  return env && *env ? env : "zipcwm_out";
}

const std::map<std::string, int> kFamilies = {{"zipcwm", ZIPCWM_FAMILY_ZIPCWM},
                                              {"pcwm", ZIPCWM_FAMILY_PCWM},
                                              {"fzip", ZIPCWM_FAMILY_FZIP},
                                              {"zip", ZIPCWM_FAMILY_ZIP},
                                              {"poisson-mixture", ZIPCWM_FAMILY_POISSON_MIXTURE}};
const std::map<std::string, int> kCovariances = {{"spherical", ZIPCWM_COV_SPHERICAL},
                                                 {"diagonal", ZIPCWM_COV_DIAGONAL},
                                                 {"full", ZIPCWM_COV_FULL}};
const std::map<std::string, int> kCodings = {{"auto", ZIPCWM_CODING_AUTO},
                                             {"dummy", ZIPCWM_CODING_DUMMY},
                                             {"numeric", ZIPCWM_CODING_NUMERIC}};
const char* const kCriterionNames[] = {"AIC", "BIC", "ICL", "AWE", "AIC3", "AICc", "AICu", "CAIC"};

struct Settings {
  std::string family = "zipcwm", covariance = "spherical", coding_name = "auto";
  zipcwm_model_options model{};
  zipcwm_em_options em{};
  bool no_regression = false;
  bool no_covariate_densities = false;
  std::string data, schema, labels;
  int coding = ZIPCWM_CODING_AUTO;
  std::string out_dir = default_out_dir();
  std::string name;
  long n = 1000;
  std::uint64_t seed = 0;
  int replicates = 10;
  int g_min = 2, g_max = 5;
  bool no_pin = false;
  bool dispersion = false;
  std::string config;
};

void add_model_options(CLI::App* cmd, Settings& s) {
  cmd->add_option("--family", s.family, "Model family")
      ->check(CLI::IsMember(kFamilies))
      ->capture_default_str();
  cmd->add_option("--covariance", s.covariance, "Gaussian covariance structure")
      ->check(CLI::IsMember(kCovariances))
      ->capture_default_str();
  cmd->add_flag("--no-regression", s.no_regression,
                "Intercept-only Poisson means (covariates enter only through their densities)");
  cmd->add_flag("--no-covariate-densities", s.no_covariate_densities,
                "Drop the covariate densities from the likelihood");
}

void add_em_options(CLI::App* cmd, Settings& s) {
  cmd->add_option("--restarts", s.em.restarts, "EM restarts")->check(CLI::PositiveNumber);
  cmd->add_option("--em-seed", s.em.seed, "Seed for the restart initializations");
  cmd->add_option("--max-iterations", s.em.max_iterations, "EM iteration cap")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--tolerance", s.em.loglik_rel_tolerance,
                  "Relative log-likelihood change for convergence");
  cmd->add_option("--irls-max-steps", s.em.irls_max_steps, "IRLS steps per M-step");
  cmd->add_option("--irls-tolerance", s.em.irls_grad_tolerance, "IRLS score tolerance");
  cmd->add_option("--ridge", s.em.ridge, "Ridge added to the IRLS information matrix");
  cmd->add_option("--threads", s.em.threads, "Worker threads for restarts (0 = all cores)")
      ->check(CLI::NonNegativeNumber);
}

void add_data_options(CLI::App* cmd, Settings& s) {
  cmd->add_option("--data", s.data, "Input CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--schema", s.schema, "Schema JSON (a simulate sidecar also works)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--coding", s.coding_name,
                  "Categorical coding in the regression design (auto: from the schema file)")
      ->check(CLI::IsMember(kCodings))
      ->capture_default_str();
}

void add_common(CLI::App* cmd, Settings& s) {
  cmd->add_option("--out-dir", s.out_dir, "Output directory (default $ZIPCWM_OUT_DIR or ./zipcwm_out)");
  cmd->add_option("--name", s.name, "File stem for the written reports");
  cmd->add_option("--config", s.config,
                  "Flat key = value file; keys are long option names without dashes")
      ->check(CLI::ExistingFile);
}

std::string trim(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

// Reads `key = value` lines ('#' starts a comment) into command-line tokens.
// Every key must name a long option of the subcommand; the command line is
// parsed after these tokens and wins on conflicts.
std::vector<std::string> config_tokens(const fs::path& path, const CLI::App& cmd) {
  std::ifstream in(path);
  if (!in) throw CliFailure{kExitUsage, "cannot read config file " + path.string()};
  std::vector<std::string> tokens;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CliFailure{kExitUsage, path.string() + ":" + std::to_string(line_no) +
                                       ": expected key = value"};
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    const CLI::Option* option = cmd.get_option_no_throw("--" + key);
    if (key == "config" || key == "help" || option == nullptr)
      throw CliFailure{kExitUsage, path.string() + ":" + std::to_string(line_no) +
                                       ": unknown key '" + key + "'"};
    tokens.push_back("--" + key + "=" + value);
  }
  return tokens;
}

fs::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw CliFailure{kExitData, "cannot create output directory " + dir};
  return fs::path(dir);
}

void apply_model_flags(Settings& s) {
  s.model.family = kFamilies.at(s.family);
  s.model.covariance = kCovariances.at(s.covariance);
  s.coding = kCodings.at(s.coding_name);
  s.model.regression_on_covariates = s.no_regression ? 0 : 1;
  s.model.covariate_densities = s.no_covariate_densities ? 0 : 1;
}

DatasetPtr load(const Settings& s) {
  zipcwm_dataset* raw = nullptr;
  long dropped = 0;
  check(zipcwm_dataset_load_csv(s.data.c_str(), s.schema.c_str(), s.coding, &raw, &dropped));
  DatasetPtr data(raw);
  if (dropped > 0)
    std::cerr << "warning: dropped " << dropped << " row(s) with missing cells or invalid responses\n";
  return data;
}

void run_simulate(const Settings& s) {
  const fs::path dir = prepare_out_dir(s.out_dir);
  zipcwm_dataset* raw = nullptr;
  check(zipcwm_dataset_simulate(s.n, s.seed, &raw));
  DatasetPtr data(raw);
  const fs::path csv = dir / (s.name + ".csv");
  const fs::path sidecar = dir / (s.name + ".json");
  check(zipcwm_dataset_write_csv(data.get(), csv.c_str(), sidecar.c_str()));
  std::cout << "wrote " << csv.string() << " (" << zipcwm_dataset_rows(data.get())
            << " rows) and " << sidecar.string() << "\n";
}

void run_fit(Settings s) {
  apply_model_flags(s);
  const fs::path dir = prepare_out_dir(s.out_dir);
  DatasetPtr data = load(s);
  zipcwm_fit* raw = nullptr;
  check(zipcwm_fit_run(data.get(), &s.model, &s.em, &raw));
  FitPtr fit(raw);
  check(zipcwm_fit_write_reports(fit.get(), dir.c_str(), s.name.c_str()));
  std::cout << "loglik " << zipcwm_fit_loglik(fit.get()) << ", "
            << (zipcwm_fit_converged(fit.get()) ? "converged" : "not converged") << " after "
            << zipcwm_fit_iterations(fit.get()) << " iterations\n";
  if (s.dispersion) {
    double phi = 0.0;
    check(zipcwm_dataset_dispersion(data.get(), &phi));
    std::cout << "single-Poisson dispersion " << phi << "\n";
  }
}

void run_select(Settings s) {
  apply_model_flags(s);
  const fs::path dir = prepare_out_dir(s.out_dir);
  DatasetPtr data = load(s);
  zipcwm_selection* raw = nullptr;
  check(zipcwm_select_run(data.get(), &s.model, &s.em, s.g_min, s.g_max, &raw));
  SelectionPtr selection(raw);
  check(zipcwm_selection_write_reports(selection.get(), dir.c_str(), s.name.c_str()));
  for (int c = 0; c < 8; ++c) {
    int g = 0;
    check(zipcwm_selection_chosen(selection.get(), c, &g));
    std::cout << kCriterionNames[c] << ": " << (g > 0 ? std::to_string(g) : "NA") << "\n";
  }
}

void run_evaluate(const Settings& s) {
  const fs::path dir = prepare_out_dir(s.out_dir);
  char* table = nullptr;
  check(zipcwm_evaluate_labels_csv(s.labels.c_str(), s.model.components, s.no_pin ? 0 : 1,
                                   dir.c_str(), &table));
  std::cout << table;
  zipcwm_string_free(table);
}

void run_study(const Settings& s) {
  const fs::path dir = prepare_out_dir(s.out_dir);
  check(zipcwm_reproduce_sim_study(s.seed, s.replicates, &s.em, dir.c_str()));
  std::cout << "wrote study report to " << dir.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  zipcwm_model_options_default(&s.model);
  zipcwm_em_options_default(&s.em);

  CLI::App app{"Zero-inflated Poisson cluster-weighted models", "zipcwm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", zipcwm_version());
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto* simulate = app.add_subcommand("simulate", "Draw a dataset from the benchmark design");
  simulate->add_option("--n", s.n, "Sample size")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", s.seed, "Random seed");

  auto* fit = app.add_subcommand("fit", "Fit one model by EM");
  add_data_options(fit, s);
  add_model_options(fit, s);
  fit->add_option("--components", s.model.components, "Number of components G")
      ->check(CLI::PositiveNumber);
  add_em_options(fit, s);
  fit->add_flag("--dispersion", s.dispersion, "Also print a single-Poisson dispersion diagnostic");

  auto* select = app.add_subcommand("select", "Fit G = g-min..g-max and compare criteria");
  add_data_options(select, s);
  add_model_options(select, s);
  select->add_option("--g-min", s.g_min, "Smallest G")->check(CLI::PositiveNumber);
  select->add_option("--g-max", s.g_max, "Largest G")->check(CLI::PositiveNumber);
  add_em_options(select, s);

  auto* evaluate = app.add_subcommand("evaluate", "Score predicted labels against true labels");
  evaluate->add_option("--labels", s.labels, "CSV with columns true,predicted")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--components", s.model.components, "Number of classes G")
      ->required()
      ->check(CLI::PositiveNumber);
  evaluate->add_flag("--no-pin", s.no_pin, "Let label 1 permute like the others");

  auto* study = app.add_subcommand("reproduce-sim-study", "Run the full simulation benchmark");
  study->add_option("--seed", s.seed, "Master seed")->default_val(42);
  study->add_option("--replicates", s.replicates, "Replicates per sample size")
      ->check(CLI::PositiveNumber);
  add_em_options(study, s);

  for (auto* cmd : {simulate, fit, select, evaluate, study}) add_common(cmd, s);

  // Config-file tokens are spliced in right after the subcommand name so the
  // explicit command-line options, parsed later, take precedence.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string path;
      std::size_t width = 1;
      if (args[i] == "--config" && i + 1 < args.size()) {
        path = args[i + 1];
        width = 2;
      } else if (args[i].rfind("--config=", 0) == 0) {
        path = args[i].substr(9);
      } else {
        continue;
      }
      const auto name = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
        return app.get_subcommand_no_throw(a) != nullptr;
      });
      if (name == args.end()) throw CliFailure{kExitUsage, "--config needs a subcommand"};
      const auto tokens = config_tokens(path, *app.get_subcommand(*name));
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i + width));
      const auto at = std::find(args.begin(), args.end(), *name);
      args.insert(at + 1, tokens.begin(), tokens.end());
      break;
    }
  } catch (const CliFailure& failure) {
    std::cerr << "error: " << failure.message << "\n";
    return failure.code;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return kExitUsage;
  }

  try {
    auto stem = [&](const char* fallback) {
      if (s.name.empty()) s.name = fallback;
    };
    if (s.out_dir.empty())
      throw CliFailure{kExitUsage, "--out-dir must not be empty"};
    if (simulate->parsed()) {
      stem("simulated");
      run_simulate(s);
    } else if (fit->parsed()) {
      stem("fit");
      run_fit(s);
    } else if (select->parsed()) {
      stem("selection");
      if (s.g_max < s.g_min) throw CliFailure{kExitUsage, "--g-max must be >= --g-min"};
      run_select(s);
    } else if (evaluate->parsed()) {
      run_evaluate(s);
    } else if (study->parsed()) {
      run_study(s);
    }
  } catch (const CliFailure& failure) {
    std::cerr << "error: " << failure.message << "\n";
    return failure.code;
  }
  return 0;
}
