#include "zipcwm/io.hpp"

#include "zipcwm/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace zipcwm::io {

namespace {

std::string_view role_name(ColumnRole role) {
  switch (role) {
    case ColumnRole::response: return "response";
    case ColumnRole::continuous: return "continuous";
    case ColumnRole::categorical: return "categorical";
    case ColumnRole::ignore: return "ignore";
    case ColumnRole::true_label: return "true_label";
  }
  return "ignore";
}

ColumnRole parse_role(const std::string& text) {
  for (ColumnRole role : {ColumnRole::response, ColumnRole::continuous, ColumnRole::categorical,
                          ColumnRole::ignore, ColumnRole::true_label})
    if (role_name(role) == text) return role;
  throw DataError("unknown column role '" + text + "'");
}

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "?";
}

bool parse_number(const std::string& text, double& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string optional_csv(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

}  // namespace

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

// ---------------------------------------------------------------------------
// Schema

void DatasetSchema::validate() const {
  int responses = 0;
  int labels = 0;
  std::set<std::string> names;
  for (const auto& column : columns) {
    if (column.name.empty()) throw DataError("schema column with an empty name");
    if (!names.insert(column.name).second)
      throw DataError("schema lists column '" + column.name + "' twice");
    if (column.role == ColumnRole::response) ++responses;
    if (column.role == ColumnRole::true_label) ++labels;
    if (column.role == ColumnRole::categorical && column.levels < 2)
      throw DataError("categorical column '" + column.name + "' needs at least 2 levels");
  }
  if (responses != 1) throw DataError("schema must have exactly one response column");
  if (labels > 1) throw DataError("schema may have at most one true_label column");
}

DatasetSchema parse_schema(const json& doc) {
  const json& root = doc.contains("schema") ? doc.at("schema") : doc;
  if (!root.contains("columns") || !root.at("columns").is_array())
    throw DataError("schema needs a 'columns' array");
  DatasetSchema schema;
  for (const auto& entry : root.at("columns")) {
    ColumnSpec column;
    try {
      column.name = entry.at("name").get<std::string>();
      column.role = parse_role(entry.at("role").get<std::string>());
      if (column.role == ColumnRole::categorical) {
        column.levels = entry.at("levels").get<int>();
        column.first_level = entry.value("first_level", 1);
      }
    } catch (const json::exception& e) {
      throw DataError(std::string("malformed schema column: ") + e.what());
    }
    schema.columns.push_back(std::move(column));
  }
  schema.validate();
  return schema;
}

DatasetSchema load_schema(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw DataError("cannot parse schema " + path.string() + ": " + e.what());
  }
  return parse_schema(doc);
}

json schema_to_json(const DatasetSchema& schema) {
  json columns = json::array();
  for (const auto& column : schema.columns) {
    json entry = {{"name", column.name}, {"role", role_name(column.role)}};
    if (column.role == ColumnRole::categorical) {
      entry["levels"] = column.levels;
      entry["first_level"] = column.first_level;
    }
    columns.push_back(std::move(entry));
  }
  return json{{"columns", std::move(columns)}};
}

DatasetSchema schema_of(const Dataset& data) {
  DatasetSchema schema;
  schema.columns.push_back({data.response_name, ColumnRole::response});
  for (const auto& name : data.continuous_names)
    schema.columns.push_back({name, ColumnRole::continuous});
  for (const auto& block : data.W)
    schema.columns.push_back({block.name, ColumnRole::categorical, block.levels, 1});
  if (data.true_labels) schema.columns.push_back({"true_label", ColumnRole::true_label});
  return schema;
}

// ---------------------------------------------------------------------------
// CSV

LoadResult load_csv(const fs::path& path, const DatasetSchema& schema, CategoricalCoding coding) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
  const std::vector<std::string> header = split_csv_line(line);

  std::vector<const ColumnSpec*> by_position(header.size(), nullptr);
  for (std::size_t c = 0; c < header.size(); ++c) {
    for (const auto& column : schema.columns)
      if (column.name == header[c]) by_position[c] = &column;
    if (!by_position[c])
      throw DataError("header column '" + header[c] + "' is not in the schema");
  }
  for (const auto& column : schema.columns) {
    bool found = false;
    for (const auto& h : header) found = found || h == column.name;
    if (!found) throw DataError("schema column '" + column.name + "' is missing from the header");
  }

  LoadResult result;
  std::vector<double> y;
  std::vector<std::vector<double>> continuous;
  std::vector<std::vector<int>> categorical;
  std::vector<int> labels;
  std::vector<std::string> continuous_names, categorical_names;
  std::vector<int> level_counts;
  std::string response_name;
  bool has_labels = false;
  for (const auto* column : by_position) {
    if (column->role == ColumnRole::continuous) continuous_names.push_back(column->name);
    if (column->role == ColumnRole::categorical) {
      categorical_names.push_back(column->name);
      level_counts.push_back(column->levels);
    }
    if (column->role == ColumnRole::response) response_name = column->name;
    if (column->role == ColumnRole::true_label) has_labels = true;
  }

  long line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    ++result.rows_read;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError(path.string() + ":" + std::to_string(line_number) + ": expected " +
                      std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));

    std::string drop_reason;
    double response = 0.0;
    std::vector<double> q_row;
    std::vector<int> w_row;
    int label = 0;
    for (std::size_t c = 0; c < cells.size() && drop_reason.empty(); ++c) {
      const ColumnSpec& column = *by_position[c];
      if (column.role == ColumnRole::ignore) continue;
      if (is_missing(cells[c])) {
        drop_reason = "missing value in column '" + column.name + "'";
        break;
      }
      double value = 0.0;
      if (!parse_number(cells[c], value)) {
        if (column.role == ColumnRole::response) {
          drop_reason = "non-numeric response";
          break;
        }
        throw DataError(path.string() + ":" + std::to_string(line_number) + ": column '" +
                        column.name + "' value '" + cells[c] + "' is not numeric");
      }
      switch (column.role) {
        case ColumnRole::response:
          if (value < 0.0 || std::floor(value) != value)
            drop_reason = "response is not a nonnegative integer";
          response = value;
          break;
        case ColumnRole::continuous:
          q_row.push_back(value);
          break;
        case ColumnRole::categorical: {
          const double code = value - column.first_level + 1;
          if (std::floor(code) != code || code < 1 || code > column.levels)
            throw DataError(path.string() + ":" + std::to_string(line_number) + ": column '" +
                            column.name + "' level '" + cells[c] + "' outside the declared " +
                            std::to_string(column.levels) + " levels");
          w_row.push_back(static_cast<int>(code));
          break;
        }
        case ColumnRole::true_label:
          if (std::floor(value) != value || value < 1)
            throw DataError(path.string() + ":" + std::to_string(line_number) +
                            ": true label must be a positive integer");
          label = static_cast<int>(value);
          break;
        case ColumnRole::ignore:
          break;
      }
    }
    if (!drop_reason.empty()) {
      ++result.rows_dropped;
      result.warnings.push_back(path.string() + ":" + std::to_string(line_number) +
                                ": dropped row (" + drop_reason + ")");
      continue;
    }
    y.push_back(response);
    continuous.push_back(std::move(q_row));
    categorical.push_back(std::move(w_row));
    labels.push_back(label);
  }
  if (y.empty()) throw DataError(path.string() + " has no usable rows");

  const auto n = static_cast<Eigen::Index>(y.size());
  Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  Eigen::MatrixXd Q(n, static_cast<Eigen::Index>(continuous_names.size()));
  Eigen::MatrixXi W(n, static_cast<Eigen::Index>(level_counts.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    for (Eigen::Index j = 0; j < Q.cols(); ++j) Q(i, j) = continuous[row][static_cast<std::size_t>(j)];
    for (Eigen::Index k = 0; k < W.cols(); ++k) W(i, k) = categorical[row][static_cast<std::size_t>(k)];
  }
  std::optional<std::vector<int>> true_labels;
  if (has_labels) true_labels = std::move(labels);
  result.data = make_dataset(std::move(yv), std::move(Q), W, std::move(level_counts), coding,
                             std::move(true_labels), std::move(continuous_names),
                             std::move(categorical_names));
  result.data.response_name = response_name;
  return result;
}

void write_csv(const Dataset& data, const fs::path& path) {
  std::ostringstream out;
  out << data.response_name;
  for (const auto& name : data.continuous_names) out << ',' << name;
  for (const auto& block : data.W) out << ',' << block.name;
  if (data.true_labels) out << ",true_label";
  out << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    out << static_cast<long long>(data.y[i]);
    for (Eigen::Index j = 0; j < data.Q.cols(); ++j) out << ',' << format_double(data.Q(i, j));
    for (std::size_t k = 0; k < data.W.size(); ++k) out << ',' << data.level(i, k);
    if (data.true_labels) out << ',' << (*data.true_labels)[static_cast<std::size_t>(i)];
    out << '\n';
  }
  write_text(path, out.str());
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const ModelSpec& spec) {
  return json{{"family", to_string(spec.family)},
              {"G", spec.components},
              {"covariance_structure", to_string(spec.covariance)},
              {"regression_on_covariates", spec.regression_on_covariates},
              {"covariate_densities", spec.covariate_densities}};
}

json to_json(const EmConfig& config) {
  return json{{"max_iterations", config.max_iterations},
              {"loglik_rel_tolerance", config.loglik_rel_tolerance},
              {"irls_max_steps", config.irls_max_steps},
              {"irls_grad_tolerance", config.irls_grad_tolerance},
              {"restarts", config.restarts},
              {"seed", config.seed},
              {"ridge", config.ridge}};
}

json to_json(const MixtureParameters& params, const ModelSpec& spec) {
  json components = json::array();
  if (spec.zero_inflated())
    components.push_back(json{{"component", 1}, {"kind", "degenerate"}, {"pi", params.pi[0]}});
  const int first = spec.first_poisson();
  for (std::size_t j = 0; j < params.components.size(); ++j) {
    const auto& c = params.components[j];
    json entry{{"component", first + static_cast<int>(j) + 1},
               {"kind", "poisson"},
               {"pi", params.pi[first + static_cast<Eigen::Index>(j)]},
               {"beta", vector_json(c.beta)}};
    if (spec.uses_covariate_density()) {
      entry["mu"] = vector_json(c.mu);
      entry["sigma"] = matrix_json(c.sigma);
      json alpha = json::array();
      for (const auto& a : c.alpha) alpha.push_back(vector_json(a));
      entry["alpha"] = std::move(alpha);
    }
    components.push_back(std::move(entry));
  }
  return json{{"pi", vector_json(params.pi)}, {"components", std::move(components)}};
}

json to_json(const FitReport& fit) {
  json restarts = json::array();
  for (const auto& r : fit.restarts) {
    json entry{{"index", r.index}, {"seed", r.seed}, {"ok", r.ok}};
    if (r.ok) {
      entry["final_loglik"] = r.final_loglik;
      entry["iterations"] = r.iterations;
      entry["converged"] = r.converged;
    } else {
      entry["failure"] = r.failure;
    }
    restarts.push_back(std::move(entry));
  }
  return json{{"spec", to_json(fit.spec)},
              {"params", to_json(fit.params, fit.spec)},
              {"final_loglik", fit.final_loglik},
              {"complete_loglik", fit.complete_loglik},
              {"free_parameters", fit.free_parameters},
              {"converged", fit.converged},
              {"iterations_used", fit.iterations_used},
              {"restart_index_of_best", fit.restart_index_of_best},
              {"design_rank", fit.rank.rank},
              {"design_columns", fit.rank.columns},
              {"design_full_rank", fit.rank.full_rank},
              {"ridge_changed_solution", fit.ridge_changed_solution},
              {"loglik_trace", fit.loglik_trace},
              {"restarts", std::move(restarts)},
              {"warnings", fit.warnings}};
}

json to_json(const CriteriaRow& row) {
  return json{{"G", row.G},       {"loglik", row.loglik}, {"complete_loglik", row.complete_loglik},
              {"entropy", row.entropy}, {"k", row.k},   {"n", row.n},
              {"AIC", row.aic},   {"BIC", row.bic},       {"ICL", row.icl},
              {"AWE", row.awe},   {"AIC3", row.aic3},     {"AICc", optional_json(row.aicc)},
              {"AICu", optional_json(row.aicu)},          {"CAIC", row.caic}};
}

json to_json(const SelectionReport& report) {
  json rows = json::array();
  for (const auto& row : report.rows) rows.push_back(to_json(row));
  json chosen = json::object();
  for (Criterion c : kAllCriteria) {
    const auto g = report.chosen(c);
    chosen[std::string(to_string(c))] = g ? json(*g) : json(nullptr);
  }
  json fits = json::array();
  for (const auto& fit : report.fits) fits.push_back(to_json(fit));
  json failures = json::array();
  for (const auto& f : report.failures) failures.push_back(json{{"G", f.G}, {"message", f.message}});
  return json{{"rows", std::move(rows)},
              {"chosen_G", std::move(chosen)},
              {"fits", std::move(fits)},
              {"failures", std::move(failures)}};
}

json to_json(const ConfusionReport& report) {
  json matrix = json::array();
  for (Eigen::Index r = 0; r < report.matrix.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < report.matrix.cols(); ++c) row.push_back(report.matrix(r, c));
    matrix.push_back(std::move(row));
  }
  return json{{"matrix", std::move(matrix)},
              {"per_class_misclassification", report.per_class_misclassification},
              {"overall_misclassification", report.overall_misclassification},
              {"accuracy", report.accuracy},
              {"permutation_used", report.permutation_used}};
}

json to_json(const SimulationDesign& design) {
  json means = json::array(), covariances = json::array(), betas = json::array();
  for (const auto& m : design.means) means.push_back(vector_json(m));
  for (const auto& c : design.covariances) covariances.push_back(matrix_json(c));
  for (const auto& b : design.betas) betas.push_back(vector_json(b));
  return json{{"n", design.n},
              {"pi", design.pi},
              {"gaussian_means", std::move(means)},
              {"gaussian_covariances", std::move(covariances)},
              {"beta", std::move(betas)},
              {"level_probabilities", design.level_probabilities},
              {"coding", to_string(design.coding)},
              {"seed", design.seed},
              {"rng", "std::mt19937_64 + boost::random distributions"}};
}

std::string selection_csv(const SelectionReport& report) {
  std::ostringstream out;
  out << "G,loglik,complete_loglik,entropy,k,n,AIC,BIC,ICL,AWE,AIC3,AICc,AICu,CAIC\n";
  for (const auto& row : report.rows) {
    out << row.G << ',' << format_double(row.loglik) << ',' << format_double(row.complete_loglik)
        << ',' << format_double(row.entropy) << ',' << row.k << ',' << row.n << ','
        << format_double(row.aic) << ',' << format_double(row.bic) << ','
        << format_double(row.icl) << ',' << format_double(row.awe) << ','
        << format_double(row.aic3) << ',' << optional_csv(row.aicc) << ','
        << optional_csv(row.aicu) << ',' << format_double(row.caic) << '\n';
  }
  return out.str();
}

std::string trace_csv(const FitReport& fit) {
  std::ostringstream out;
  out << "iteration,loglik\n";
  for (std::size_t t = 0; t < fit.loglik_trace.size(); ++t)
    out << t << ',' << format_double(fit.loglik_trace[t]) << '\n';
  return out.str();
}

std::string assignments_csv(const FitReport& fit, const Dataset* data) {
  std::ostringstream out;
  const bool with_truth = data && data->true_labels;
  out << "row,map_label";
  if (with_truth) out << ",true_label";
  for (Eigen::Index g = 0; g < fit.responsibilities.z.cols(); ++g) out << ",z" << g + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < fit.responsibilities.z.rows(); ++i) {
    out << i + 1 << ',' << fit.map_labels[static_cast<std::size_t>(i)];
    if (with_truth) out << ',' << (*data->true_labels)[static_cast<std::size_t>(i)];
    for (Eigen::Index g = 0; g < fit.responsibilities.z.cols(); ++g)
      out << ',' << format_double(fit.responsibilities.z(i, g));
    out << '\n';
  }
  return out.str();
}

std::string confusion_csv(const ConfusionReport& report) {
  std::ostringstream out;
  out << "true";
  for (Eigen::Index c = 0; c < report.matrix.cols(); ++c) out << ",pred_" << c + 1;
  out << ",misclassification\n";
  for (Eigen::Index r = 0; r < report.matrix.rows(); ++r) {
    out << r + 1;
    for (Eigen::Index c = 0; c < report.matrix.cols(); ++c) out << ',' << report.matrix(r, c);
    out << ',' << format_double(report.per_class_misclassification[static_cast<std::size_t>(r)])
        << '\n';
  }
  return out.str();
}

std::string confusion_table(const ConfusionReport& report, double ari) {
  std::ostringstream out;
  char buffer[64];
  out << "true\\pred";
  for (Eigen::Index c = 0; c < report.matrix.cols(); ++c) {
    std::snprintf(buffer, sizeof buffer, "%8ld", static_cast<long>(c + 1));
    out << buffer;
  }
  out << "   misclass.%\n";
  for (Eigen::Index r = 0; r < report.matrix.rows(); ++r) {
    std::snprintf(buffer, sizeof buffer, "%9ld", static_cast<long>(r + 1));
    out << buffer;
    for (Eigen::Index c = 0; c < report.matrix.cols(); ++c) {
      std::snprintf(buffer, sizeof buffer, "%8d", report.matrix(r, c));
      out << buffer;
    }
    std::snprintf(buffer, sizeof buffer, "%14.2f\n",
                  100.0 * report.per_class_misclassification[static_cast<std::size_t>(r)]);
    out << buffer;
  }
  std::snprintf(buffer, sizeof buffer, "misclassification %.2f%%\n",
                100.0 * report.overall_misclassification);
  out << buffer;
  std::snprintf(buffer, sizeof buffer, "accuracy          %.2f%%\n", 100.0 * report.accuracy);
  out << buffer;
  std::snprintf(buffer, sizeof buffer, "ARI               %.3f\n", ari);
  out << buffer;
  return out.str();
}

// ---------------------------------------------------------------------------
// Files

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<fs::path> emit_reports(const ReportSet& reports, const fs::path& out_dir) {
  std::vector<fs::path> written;
  if (reports.empty()) return written;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  auto emit_text = [&](const std::string& name, const std::string& text) {
    const fs::path path = out_dir / name;
    write_text(path, text);
    written.push_back(path);
  };
  for (const auto& [stem, fit] : reports.fits) {
    emit_text(stem + ".json", to_json(fit).dump(2) + "\n");
    emit_text(stem + "_trace.csv", trace_csv(fit));
    emit_text(stem + "_assignments.csv", assignments_csv(fit));
  }
  for (const auto& [stem, selection] : reports.selections) {
    emit_text(stem + ".json", to_json(selection).dump(2) + "\n");
    emit_text(stem + ".csv", selection_csv(selection));
  }
  for (const auto& [stem, doc] : reports.confusions) emit_text(stem + ".json", doc.dump(2) + "\n");
  for (const auto& [stem, report] : reports.confusion_tables) emit_text(stem + ".csv", confusion_csv(report));
  return written;
}

std::pair<std::vector<int>, std::vector<int>> load_labels_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
  const auto header = split_csv_line(line);
  if (header.size() != 2) throw DataError("labels file needs exactly two columns (true, predicted)");
  std::vector<int> truth, predicted;
  long line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    double t = 0.0, p = 0.0;
    if (cells.size() != 2 || !parse_number(cells[0], t) || !parse_number(cells[1], p) ||
        std::floor(t) != t || std::floor(p) != p)
      throw DataError(path.string() + ":" + std::to_string(line_number) +
                      ": expected two integer labels");
    truth.push_back(static_cast<int>(t));
    predicted.push_back(static_cast<int>(p));
  }
  if (truth.empty()) throw DataError(path.string() + " has no label rows");
  return {std::move(truth), std::move(predicted)};
}

}  // namespace zipcwm::io
