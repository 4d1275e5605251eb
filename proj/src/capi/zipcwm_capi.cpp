#include "zipcwm/zipcwm.h"

#include "zipcwm/error.hpp"
#include "zipcwm/study.hpp"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <optional>
#include <string>

struct zipcwm_dataset {
  zipcwm::Dataset data;
  std::optional<zipcwm::SimulationDesign> design;
};

struct zipcwm_fit {
  zipcwm::FitReport report;
  zipcwm::Dataset data;
};

struct zipcwm_selection {
  zipcwm::SelectionReport report;
};

namespace {

thread_local std::string g_last_error;

zipcwm_status fail(zipcwm_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs `body` and converts any exception into a status code.
template <class F>
zipcwm_status guarded(F&& body) {
  try {
    body();
    return ZIPCWM_OK;
  } catch (const zipcwm::Error& e) {
    switch (e.kind()) {
      case zipcwm::ErrorKind::usage: return fail(ZIPCWM_ERR_USAGE, e.what());
      case zipcwm::ErrorKind::data: return fail(ZIPCWM_ERR_DATA, e.what());
      case zipcwm::ErrorKind::numerical: return fail(ZIPCWM_ERR_NUMERICAL, e.what());
      case zipcwm::ErrorKind::io: return fail(ZIPCWM_ERR_IO, e.what());
    }
    return fail(ZIPCWM_ERR_INTERNAL, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(ZIPCWM_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(ZIPCWM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(ZIPCWM_ERR_INTERNAL, e.what());
  }
}

void require(bool condition, const char* message) {
  if (!condition) throw zipcwm::UsageError(message);
}

zipcwm::ModelSpec to_spec(const zipcwm_model_options* o) {
  require(o != nullptr, "model options must not be null");
  require(o->family >= ZIPCWM_FAMILY_ZIPCWM && o->family <= ZIPCWM_FAMILY_POISSON_MIXTURE,
          "unknown model family");
  require(o->covariance >= ZIPCWM_COV_SPHERICAL && o->covariance <= ZIPCWM_COV_FULL,
          "unknown covariance structure");
  zipcwm::ModelSpec spec;
  static constexpr zipcwm::Family families[] = {
      zipcwm::Family::zipcwm, zipcwm::Family::pcwm, zipcwm::Family::fzip, zipcwm::Family::zip,
      zipcwm::Family::poisson_mixture};
  static constexpr zipcwm::CovarianceStructure structures[] = {
      zipcwm::CovarianceStructure::spherical, zipcwm::CovarianceStructure::diagonal,
      zipcwm::CovarianceStructure::full};
  spec.family = families[o->family];
  spec.components = o->components;
  spec.covariance = structures[o->covariance];
  spec.regression_on_covariates = o->regression_on_covariates != 0;
  spec.covariate_densities = o->covariate_densities != 0;
  spec.validate();
  return spec;
}

zipcwm::EmConfig to_config(const zipcwm_em_options* o) {
  zipcwm::EmConfig config;
  if (o != nullptr) {
    config.max_iterations = o->max_iterations;
    config.loglik_rel_tolerance = o->loglik_rel_tolerance;
    config.irls_max_steps = o->irls_max_steps;
    config.irls_grad_tolerance = o->irls_grad_tolerance;
    config.restarts = o->restarts;
    config.seed = o->seed;
    config.ridge = o->ridge;
    config.threads = o->threads;
  }
  config.validate();
  return config;
}

zipcwm::CategoricalCoding to_coding(int coding) {
  require(coding == ZIPCWM_CODING_DUMMY || coding == ZIPCWM_CODING_NUMERIC,
          "unknown categorical coding");
  return coding == ZIPCWM_CODING_DUMMY ? zipcwm::CategoricalCoding::dummy
                                       : zipcwm::CategoricalCoding::numeric;
}

char* duplicate(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* zipcwm_version(void) { return "1.0.0"; }

const char* zipcwm_last_error(void) { return g_last_error.c_str(); }

void zipcwm_model_options_default(zipcwm_model_options* options) {
  if (options == nullptr) return;
  const zipcwm::ModelSpec spec;
  options->family = ZIPCWM_FAMILY_ZIPCWM;
  options->components = spec.components;
  options->covariance = static_cast<int>(spec.covariance);
  options->regression_on_covariates = spec.regression_on_covariates ? 1 : 0;
  options->covariate_densities = spec.covariate_densities ? 1 : 0;
}

void zipcwm_em_options_default(zipcwm_em_options* options) {
  if (options == nullptr) return;
  const zipcwm::EmConfig config;
  options->max_iterations = config.max_iterations;
  options->loglik_rel_tolerance = config.loglik_rel_tolerance;
  options->irls_max_steps = config.irls_max_steps;
  options->irls_grad_tolerance = config.irls_grad_tolerance;
  options->restarts = config.restarts;
  options->seed = config.seed;
  options->ridge = config.ridge;
  options->threads = config.threads;
}

zipcwm_status zipcwm_dataset_load_csv(const char* csv_path, const char* schema_path, int coding,
                                      zipcwm_dataset** out, long* rows_dropped) {
  return guarded([&] {
    require(csv_path && schema_path && out, "null argument");
    *out = nullptr;
    const auto schema = zipcwm::io::load_schema(schema_path);
    if (coding == ZIPCWM_CODING_AUTO) {
      coding = ZIPCWM_CODING_DUMMY;
      const auto doc = zipcwm::io::json::parse(zipcwm::io::read_text(schema_path), nullptr, false);
      if (doc.is_object() && doc.contains("coding") && doc["coding"].is_string())
        coding = doc["coding"] == "numeric" ? ZIPCWM_CODING_NUMERIC : ZIPCWM_CODING_DUMMY;
    }
    auto loaded = zipcwm::io::load_csv(csv_path, schema, to_coding(coding));
    if (rows_dropped) *rows_dropped = loaded.rows_dropped;
    *out = new zipcwm_dataset{std::move(loaded.data), std::nullopt};
  });
}

zipcwm_status zipcwm_dataset_simulate(long n, uint64_t seed, zipcwm_dataset** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = nullptr;
    zipcwm::SimulationDesign design;
    design.n = n;
    design.seed = seed;
    design.validate();
    auto data = zipcwm::generate(design);
    *out = new zipcwm_dataset{std::move(data), design};
  });
}

zipcwm_status zipcwm_dataset_write_csv(const zipcwm_dataset* data, const char* csv_path,
                                       const char* sidecar_path) {
  return guarded([&] {
    require(data && csv_path, "null argument");
    zipcwm::io::write_csv(data->data, csv_path);
    if (sidecar_path != nullptr) {
      zipcwm::io::json doc;
      if (data->design) doc["design"] = zipcwm::io::to_json(*data->design);
      doc["coding"] = zipcwm::to_string(data->data.coding);
      doc["schema"] = zipcwm::io::schema_to_json(zipcwm::io::schema_of(data->data));
      zipcwm::io::write_json(sidecar_path, doc);
    }
  });
}

size_t zipcwm_dataset_rows(const zipcwm_dataset* data) {
  return data ? static_cast<size_t>(data->data.size()) : 0;
}

int zipcwm_dataset_has_labels(const zipcwm_dataset* data) {
  return data && data->data.true_labels ? 1 : 0;
}

void zipcwm_dataset_free(zipcwm_dataset* data) { delete data; }

zipcwm_status zipcwm_fit_run(const zipcwm_dataset* data, const zipcwm_model_options* model,
                             const zipcwm_em_options* em, zipcwm_fit** out) {
  return guarded([&] {
    require(data && out, "null argument");
    *out = nullptr;
    auto report = zipcwm::fit_em(data->data, to_spec(model), to_config(em));
    *out = new zipcwm_fit{std::move(report), data->data};
  });
}

double zipcwm_fit_loglik(const zipcwm_fit* fit) { return fit ? fit->report.final_loglik : 0.0; }

int zipcwm_fit_converged(const zipcwm_fit* fit) { return fit && fit->report.converged ? 1 : 0; }

int zipcwm_fit_iterations(const zipcwm_fit* fit) { return fit ? fit->report.iterations_used : 0; }

size_t zipcwm_fit_labels(const zipcwm_fit* fit, int32_t* labels, size_t capacity) {
  if (fit == nullptr) return 0;
  const auto& map = fit->report.map_labels;
  if (labels != nullptr)
    for (size_t i = 0; i < map.size() && i < capacity; ++i) labels[i] = map[i];
  return map.size();
}

zipcwm_status zipcwm_fit_write_reports(const zipcwm_fit* fit, const char* out_dir,
                                       const char* stem) {
  return guarded([&] {
    require(fit && out_dir && stem, "null argument");
    zipcwm::io::ReportSet set;
    set.fits.emplace_back(stem, fit->report);
    if (fit->data.true_labels) {
      const auto& truth = *fit->data.true_labels;
      const auto& pred = fit->report.map_labels;
      const auto report = zipcwm::confusion(truth, pred, fit->report.spec.components,
                                            fit->report.spec.zero_inflated());
      auto doc = zipcwm::io::to_json(report);
      doc["ari"] = zipcwm::adjusted_rand_index(truth, pred);
      set.confusions.emplace_back(std::string(stem) + "_confusion", std::move(doc));
      set.confusion_tables.emplace_back(std::string(stem) + "_confusion", report);
    }
    zipcwm::io::emit_reports(set, out_dir);
  });
}

zipcwm_status zipcwm_dataset_dispersion(const zipcwm_dataset* data, double* out) {
  return guarded([&] {
    require(data && out, "null argument");
    const auto& d = data->data;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(d.size());
    Eigen::VectorXd start = Eigen::VectorXd::Zero(d.X.cols());
    start(0) = std::log(std::max(d.y.mean(), 1e-3));
    zipcwm::IrlsOptions options;
    options.max_steps = 100;
    const auto result = zipcwm::irls_update_beta(d.X, d.y, ones, start, options);
    const Eigen::VectorXd mu = (d.X * result.beta).array().exp().matrix();
    *out = zipcwm::dispersion_statistic(d.y, mu, static_cast<int>(d.X.cols()));
  });
}

void zipcwm_fit_free(zipcwm_fit* fit) { delete fit; }

zipcwm_status zipcwm_select_run(const zipcwm_dataset* data, const zipcwm_model_options* model,
                                const zipcwm_em_options* em, int g_min, int g_max,
                                zipcwm_selection** out) {
  return guarded([&] {
    require(data && out, "null argument");
    require(g_min >= 1 && g_max >= g_min, "invalid component range");
    *out = nullptr;
    std::vector<int> range;
    for (int g = g_min; g <= g_max; ++g) range.push_back(g);
    auto spec = to_spec(model);
    auto report = zipcwm::sweep_components(data->data, spec, range, to_config(em));
    *out = new zipcwm_selection{std::move(report)};
  });
}

zipcwm_status zipcwm_selection_chosen(const zipcwm_selection* selection, int criterion, int* g) {
  return guarded([&] {
    require(selection && g, "null argument");
    require(criterion >= 0 && criterion < static_cast<int>(zipcwm::kAllCriteria.size()),
            "unknown criterion");
    *g = selection->report.chosen(zipcwm::kAllCriteria[criterion]).value_or(0);
  });
}

zipcwm_status zipcwm_selection_write_reports(const zipcwm_selection* selection,
                                             const char* out_dir, const char* stem) {
  return guarded([&] {
    require(selection && out_dir && stem, "null argument");
    zipcwm::io::ReportSet set;
    set.selections.emplace_back(stem, selection->report);
    zipcwm::io::emit_reports(set, out_dir);
  });
}

void zipcwm_selection_free(zipcwm_selection* selection) { delete selection; }

zipcwm_status zipcwm_confusion(const int32_t* truth, const int32_t* predicted, size_t n, int G,
                               int pin_degenerate, zipcwm_confusion_summary* out) {
  return guarded([&] {
    require(truth && predicted && out, "null argument");
    const std::vector<int> t(truth, truth + n);
    const std::vector<int> p(predicted, predicted + n);
    const auto report = zipcwm::confusion(t, p, G, pin_degenerate != 0);
    out->overall_misclassification = report.overall_misclassification;
    out->accuracy = report.accuracy;
    out->ari = zipcwm::adjusted_rand_index(t, p);
  });
}

zipcwm_status zipcwm_evaluate_labels_csv(const char* labels_csv, int G, int pin_degenerate,
                                         const char* out_dir, char** table) {
  return guarded([&] {
    require(labels_csv != nullptr, "null argument");
    if (table) *table = nullptr;
    const auto [truth, pred] = zipcwm::io::load_labels_csv(labels_csv);
    const auto report = zipcwm::confusion(truth, pred, G, pin_degenerate != 0);
    const double ari = zipcwm::adjusted_rand_index(truth, pred);
    if (out_dir != nullptr) {
      zipcwm::io::ReportSet set;
      auto doc = zipcwm::io::to_json(report);
      doc["ari"] = ari;
      set.confusions.emplace_back("confusion", std::move(doc));
      set.confusion_tables.emplace_back("confusion", report);
      zipcwm::io::emit_reports(set, out_dir);
    }
    if (table) *table = duplicate(zipcwm::io::confusion_table(report, ari));
  });
}

void zipcwm_string_free(char* text) { std::free(text); }

zipcwm_status zipcwm_reproduce_sim_study(uint64_t seed, int replicates,
                                         const zipcwm_em_options* em, const char* out_dir) {
  return guarded([&] {
    require(out_dir != nullptr, "null argument");
    zipcwm::StudyOptions options;
    options.seed = seed;
    if (replicates > 0) options.replicates = replicates;
    if (em != nullptr) options.em = to_config(em);
    const auto result = zipcwm::run_sim_study(options);
    zipcwm::write_study(result, out_dir);
  });
}

}  // extern "C"
