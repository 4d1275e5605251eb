#pragma once

// Dataset ingestion/emission and report serialization. CSV is the data
// interchange format; structured reports are JSON.

#include "zipcwm/evaluation.hpp"
#include "zipcwm/selection.hpp"
#include "zipcwm/simulation.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace zipcwm::io {

using nlohmann::json;
namespace fs = std::filesystem;

enum class ColumnRole { response, continuous, categorical, ignore, true_label };

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::ignore;
  int levels = 0;       // categorical only
  int first_level = 1;  // raw code of the first categorical level
};

/// Column name -> role. Every CSV header column must be listed.
struct DatasetSchema {
  std::vector<ColumnSpec> columns;

  /// Exactly one response column, categorical levels >= 2, unique names.
  void validate() const;
};

DatasetSchema parse_schema(const json& doc);
/// Reads a schema file. A file with a top-level "schema" key (the simulate
/// sidecar) is accepted as well.
DatasetSchema load_schema(const fs::path& path);
json schema_to_json(const DatasetSchema& schema);
DatasetSchema schema_of(const Dataset& data);

struct LoadResult {
  Dataset data;
  long rows_read = 0;
  long rows_dropped = 0;
  std::vector<std::string> warnings;
};

/// Rows with a missing cell (empty or NA) or a non-integer response are
/// dropped with a warning; anything else malformed is a DataError.
LoadResult load_csv(const fs::path& path, const DatasetSchema& schema, CategoricalCoding coding);

void write_csv(const Dataset& data, const fs::path& path);

/// Fixed 17-significant-digit rendering used for every CSV number.
std::string format_double(double value);

// ---------------------------------------------------------------------------
// JSON

json to_json(const ModelSpec& spec);
json to_json(const EmConfig& config);
json to_json(const MixtureParameters& params, const ModelSpec& spec);
/// Fit report without per-row output (responsibilities and labels go to CSV).
json to_json(const FitReport& fit);
json to_json(const CriteriaRow& row);
json to_json(const SelectionReport& report);
json to_json(const ConfusionReport& report);
json to_json(const SimulationDesign& design);

std::string selection_csv(const SelectionReport& report);
std::string trace_csv(const FitReport& fit);
std::string assignments_csv(const FitReport& fit, const Dataset* data = nullptr);
std::string confusion_csv(const ConfusionReport& report);
std::string confusion_table(const ConfusionReport& report, double ari);

struct ReportSet {
  std::vector<std::pair<std::string, FitReport>> fits;
  std::vector<std::pair<std::string, SelectionReport>> selections;
  std::vector<std::pair<std::string, json>> confusions;  // serialized ConfusionReport (+ extras)
  std::vector<std::pair<std::string, ConfusionReport>> confusion_tables;
  bool empty() const {
    return fits.empty() && selections.empty() && confusions.empty() && confusion_tables.empty();
  }
};

/// Writes, per entry stem:
///   fit:        <stem>.json, <stem>_trace.csv, <stem>_assignments.csv
///   selection:  <stem>.json, <stem>.csv (one row per fitted G)
///   confusion:  <stem>.json and, for confusion_tables, <stem>.csv
/// Returns the written paths in write order. An empty set writes nothing.
std::vector<fs::path> emit_reports(const ReportSet& reports, const fs::path& out_dir);

void write_text(const fs::path& path, const std::string& text);
void write_json(const fs::path& path, const json& doc);
std::string read_text(const fs::path& path);

/// Reads a two-column labels CSV (true, predicted) with a header row.
std::pair<std::vector<int>, std::vector<int>> load_labels_csv(const fs::path& path);

}  // namespace zipcwm::io
