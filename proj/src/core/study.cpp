#include "zipcwm/study.hpp"

#include "zipcwm/error.hpp"

#include <algorithm>
#include <sstream>

namespace zipcwm {

namespace {

using io::json;

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::string data_file(long n, int replicate) {
  return "data/sim_n" + std::to_string(n) + "_r" + std::to_string(replicate) + ".csv";
}

json scored_json(const ScoredFit& s) {
  json aligned = json::array();
  for (const auto& c : s.aligned) {
    json entry{{"beta", std::vector<double>(c.beta.data(), c.beta.data() + c.beta.size())}};
    if (c.mu.size() > 0) {
      entry["mu"] = std::vector<double>(c.mu.data(), c.mu.data() + c.mu.size());
      const Eigen::VectorXd diag = c.sigma.diagonal();
      entry["sigma_diagonal"] = std::vector<double>(diag.data(), diag.data() + diag.size());
    }
    aligned.push_back(std::move(entry));
  }
  return json{{"family", to_string(s.family)},
              {"loglik", s.loglik},
              {"confusion", io::to_json(s.confusion)},
              {"ari", s.ari},
              {"pi", std::vector<double>(s.pi.data(), s.pi.data() + s.pi.size())},
              {"aligned_components", std::move(aligned)}};
}

}  // namespace

int ReplicateResult::criteria_choosing(int G) const {
  int count = 0;
  for (Criterion c : kAllCriteria)
    if (selection.chosen(c) == G) ++count;
  return count;
}

std::vector<const ReplicateResult*> StudyResult::at(long n) const {
  std::vector<const ReplicateResult*> out;
  for (const auto& r : replicates)
    if (r.n == n) out.push_back(&r);
  return out;
}

ScoredFit score_fit(const FitReport& fit, const Dataset& data) {
  if (!data.true_labels) throw DataError("dataset has no true labels to score against");
  const ModelSpec& spec = fit.spec;
  const int G = spec.components;
  ScoredFit s;
  s.family = spec.family;
  s.loglik = fit.final_loglik;
  s.confusion = confusion(*data.true_labels, fit.map_labels, G, spec.zero_inflated());
  s.ari = adjusted_rand_index(*data.true_labels, fit.map_labels);

  const auto& mapping = s.confusion.permutation_used;
  s.pi = Eigen::VectorXd::Zero(G);
  for (int p = 0; p < G; ++p) s.pi[mapping[static_cast<std::size_t>(p)] - 1] = fit.params.pi[p];
  const int first = spec.first_poisson();
  s.aligned.resize(fit.params.components.size());
  for (std::size_t j = 0; j < fit.params.components.size(); ++j) {
    const int aligned_label = mapping[static_cast<std::size_t>(first) + j];
    s.aligned[static_cast<std::size_t>(aligned_label - 1 - first)] = fit.params.components[j];
  }
  return s;
}

StudyResult run_sim_study(const StudyOptions& options) {
  if (options.replicates < 1) throw UsageError("study needs at least one replicate");
  if (options.sample_sizes.empty()) throw UsageError("study needs at least one sample size");
  StudyResult result;
  result.options = options;

  for (std::size_t si = 0; si < options.sample_sizes.size(); ++si) {
    const long n = options.sample_sizes[si];
    for (int r = 0; r < options.replicates; ++r) {
      ReplicateResult rep;
      rep.n = n;
      rep.replicate = r;
      rep.data_seed = derive_seed(derive_seed(options.seed, static_cast<std::uint64_t>(n)),
                                  static_cast<std::uint64_t>(r));
      SimulationDesign design = options.design;
      design.n = n;
      design.seed = rep.data_seed;
      rep.data = generate(design);

      EmConfig em = options.em;
      em.seed = derive_seed(rep.data_seed, 0xE11);
      ModelSpec spec;
      spec.family = Family::zipcwm;
      rep.selection = sweep_components(rep.data, spec, options.G_range, em);
      for (const auto& f : rep.selection.failures)
        rep.failures.push_back("ZIPCWM G=" + std::to_string(f.G) + ": " + f.message);
      for (const auto& fit : rep.selection.fits)
        if (fit.spec.components == options.true_G) rep.zipcwm = score_fit(fit, rep.data);

      if (n == options.comparison_n) {
        for (Family family : {Family::fzip, Family::pcwm}) {
          ModelSpec cspec;
          cspec.family = family;
          cspec.components = options.true_G;
          try {
            rep.comparisons.emplace(family, score_fit(fit_em(rep.data, cspec, em), rep.data));
          } catch (const NumericalError& e) {
            rep.failures.push_back(std::string(to_string(family)) + ": " + e.what());
          }
        }
      }
      result.replicates.push_back(std::move(rep));
    }
  }
  return result;
}

std::vector<std::string> study_manifest(const StudyOptions& options) {
  std::vector<std::string> files = {"study_summary.json", "replicates.csv", "criteria.csv",
                                    "parameters.csv", "loglik_traces.csv"};
  for (long n : options.sample_sizes)
    for (int r = 0; r < options.replicates; ++r) files.push_back(data_file(n, r));
  return files;
}

std::vector<std::filesystem::path> write_study(const StudyResult& result,
                                               const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "data", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "data").string() + ": " + ec.message());
  const StudyOptions& options = result.options;
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    io::write_text(out_dir / name, text);
    written.push_back(out_dir / name);
  };

  // Summary JSON with per-n aggregates and per-replicate detail.
  json per_n = json::array();
  for (long n : options.sample_sizes) {
    const auto reps = result.at(n);
    json counts = json::object();
    for (Criterion c : kAllCriteria) {
      json by_g = json::object();
      for (int G : options.G_range) {
        int count = 0;
        for (const auto* r : reps)
          if (r->selection.chosen(c) == G) ++count;
        by_g[std::to_string(G)] = count;
      }
      counts[std::string(to_string(c))] = std::move(by_g);
    }
    std::vector<double> miss, ari;
    for (const auto* r : reps)
      if (r->zipcwm) {
        miss.push_back(r->zipcwm->confusion.overall_misclassification);
        ari.push_back(r->zipcwm->ari);
      }
    json entry{{"n", n},
               {"selection_counts", std::move(counts)},
               {"zipcwm_median_misclassification", median(miss)},
               {"zipcwm_median_ari", median(ari)}};
    for (Family family : {Family::fzip, Family::pcwm}) {
      std::vector<double> fm, fa;
      for (const auto* r : reps)
        if (auto it = r->comparisons.find(family); it != r->comparisons.end()) {
          fm.push_back(it->second.confusion.overall_misclassification);
          fa.push_back(it->second.ari);
        }
      if (!fm.empty()) {
        entry[std::string(to_string(family)) + "_median_misclassification"] = median(fm);
        entry[std::string(to_string(family)) + "_median_ari"] = median(fa);
      }
    }
    json replicate_list = json::array();
    for (const auto* r : reps) {
      json chosen = json::object();
      for (Criterion c : kAllCriteria) {
        const auto g = r->selection.chosen(c);
        chosen[std::string(to_string(c))] = g ? json(*g) : json(nullptr);
      }
      json rj{{"replicate", r->replicate},
              {"data_seed", r->data_seed},
              {"data_file", data_file(n, r->replicate)},
              {"chosen_G", std::move(chosen)},
              {"failures", r->failures}};
      if (r->zipcwm) rj["zipcwm"] = scored_json(*r->zipcwm);
      json comparisons = json::object();
      for (const auto& [family, scored] : r->comparisons)
        comparisons[std::string(to_string(family))] = scored_json(scored);
      rj["comparisons"] = std::move(comparisons);
      replicate_list.push_back(std::move(rj));
    }
    entry["replicates"] = std::move(replicate_list);
    per_n.push_back(std::move(entry));
  }
  json summary{{"seed", options.seed},
               {"replicates", options.replicates},
               {"sample_sizes", options.sample_sizes},
               {"G_range", options.G_range},
               {"true_G", options.true_G},
               {"comparison_n", options.comparison_n},
               {"em", io::to_json(options.em)},
               {"design", io::to_json(options.design)},
               {"results", std::move(per_n)}};
  emit("study_summary.json", summary.dump(2) + "\n");

  std::ostringstream reps_csv;
  reps_csv << "n,replicate,data_seed";
  for (Criterion c : kAllCriteria) reps_csv << ",chosen_" << to_string(c);
  reps_csv << ",zipcwm_misclassification,zipcwm_ari,fzip_misclassification,fzip_ari,"
              "pcwm_misclassification,pcwm_ari\n";
  auto scored_cells = [](const ScoredFit* s) {
    return s ? io::format_double(s->confusion.overall_misclassification) + "," +
                   io::format_double(s->ari)
             : std::string("NA,NA");
  };
  for (const auto& r : result.replicates) {
    reps_csv << r.n << ',' << r.replicate << ',' << r.data_seed;
    for (Criterion c : kAllCriteria) {
      const auto g = r.selection.chosen(c);
      reps_csv << ',' << (g ? std::to_string(*g) : "NA");
    }
    auto find = [&](Family f) -> const ScoredFit* {
      const auto it = r.comparisons.find(f);
      return it == r.comparisons.end() ? nullptr : &it->second;
    };
    reps_csv << ',' << scored_cells(r.zipcwm ? &*r.zipcwm : nullptr) << ','
             << scored_cells(find(Family::fzip)) << ',' << scored_cells(find(Family::pcwm))
             << '\n';
  }
  emit("replicates.csv", reps_csv.str());

  std::ostringstream criteria;
  criteria << "sample_size,replicate," << io::selection_csv(SelectionReport{});  // header only
  for (const auto& r : result.replicates) {
    const std::string table = io::selection_csv(r.selection);
    std::istringstream lines(table);
    std::string line;
    std::getline(lines, line);  // header
    while (std::getline(lines, line)) criteria << r.n << ',' << r.replicate << ',' << line << '\n';
  }
  emit("criteria.csv", criteria.str());

  std::ostringstream params;
  params << "n,replicate,family,true_component,pi,mu1,mu2,mu3,sigma11,sigma22,sigma33,beta0,"
            "beta1,beta2,beta3,beta4,beta5\n";
  auto param_rows = [&](const ReplicateResult& r, const ScoredFit& s) {
    const int first = s.pi.size() - static_cast<Eigen::Index>(s.aligned.size()) == 1 ? 1 : 0;
    if (first == 1) {
      params << r.n << ',' << r.replicate << ',' << to_string(s.family) << ",1,"
             << io::format_double(s.pi[0]);
      for (int k = 0; k < 12; ++k) params << ",NA";
      params << '\n';
    }
    for (std::size_t j = 0; j < s.aligned.size(); ++j) {
      const auto& c = s.aligned[j];
      params << r.n << ',' << r.replicate << ',' << to_string(s.family) << ','
             << first + static_cast<int>(j) + 1 << ','
             << io::format_double(s.pi[first + static_cast<Eigen::Index>(j)]);
      for (Eigen::Index k = 0; k < 3; ++k)
        params << ',' << (k < c.mu.size() ? io::format_double(c.mu[k]) : "NA");
      for (Eigen::Index k = 0; k < 3; ++k)
        params << ',' << (k < c.sigma.rows() ? io::format_double(c.sigma(k, k)) : "NA");
      for (Eigen::Index k = 0; k < 6; ++k)
        params << ',' << (k < c.beta.size() ? io::format_double(c.beta[k]) : "NA");
      params << '\n';
    }
  };
  for (const auto& r : result.replicates) {
    if (r.zipcwm) param_rows(r, *r.zipcwm);
    for (const auto& [family, scored] : r.comparisons) param_rows(r, scored);
  }
  emit("parameters.csv", params.str());

  std::ostringstream traces;
  traces << "n,replicate,G,iteration,loglik\n";
  for (const auto& r : result.replicates)
    for (const auto& fit : r.selection.fits)
      for (std::size_t t = 0; t < fit.loglik_trace.size(); ++t)
        traces << r.n << ',' << r.replicate << ',' << fit.spec.components << ',' << t << ','
               << io::format_double(fit.loglik_trace[t]) << '\n';
  emit("loglik_traces.csv", traces.str());

  for (const auto& r : result.replicates) {
    io::write_csv(r.data, out_dir / data_file(r.n, r.replicate));
    written.push_back(out_dir / data_file(r.n, r.replicate));
  }
  return written;
}

}  // namespace zipcwm
