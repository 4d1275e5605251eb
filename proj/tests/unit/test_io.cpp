#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "zipcwm/error.hpp"
#include "zipcwm/io.hpp"

#include <cstdlib>
#include <fstream>
#include <unistd.h>

using namespace zipcwm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("zipcwm_io_" + std::to_string(std::rand()) + "_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

io::DatasetSchema toy_schema() {
  return io::parse_schema(io::json::parse(R"({"columns": [
      {"name": "count", "role": "response"},
      {"name": "age", "role": "continuous"},
      {"name": "smoker", "role": "categorical", "levels": 2},
      {"name": "id", "role": "ignore"}]})"));
}

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(dir)) n += entry.is_regular_file();
  return n;
}

}  // namespace

TEST_CASE("toy CSV loads with the documented dimensions") {
  TempDir tmp;
  write_file(tmp.path / "toy.csv", "id,count,age,smoker\na,0,31.5,1\nb,3,40,2\nc,1,22.25,1\n");
  const auto loaded = io::load_csv(tmp.path / "toy.csv", toy_schema(), CategoricalCoding::dummy);
  CHECK(loaded.rows_read == 3);
  CHECK(loaded.rows_dropped == 0);
  const Dataset& d = loaded.data;
  CHECK(d.size() == 3);
  CHECK(d.continuous_dim() == 1);
  REQUIRE(d.W.size() == 1);
  CHECK(d.W[0].levels == 2);
  CHECK(d.X.cols() == 3);
  CHECK(d.y(1) == 3.0);
  CHECK(d.Q(2, 0) == 22.25);
  CHECK(d.level(1, 0) == 2);
}

TEST_CASE("rows with a missing cell or a non-integer response are dropped with a warning") {
  TempDir tmp;
  write_file(tmp.path / "toy.csv",
             "id,count,age,smoker\na,0,31.5,1\nb,3,,2\nc,1,22.25,NA\nd,2.5,30,1\ne,4,19,2\n");
  const auto loaded = io::load_csv(tmp.path / "toy.csv", toy_schema(), CategoricalCoding::dummy);
  CHECK(loaded.data.size() == 2);
  CHECK(loaded.rows_dropped == 3);
  CHECK(loaded.warnings.size() == 3);
}

TEST_CASE("malformed inputs are data errors") {
  TempDir tmp;
  const auto schema = toy_schema();
  write_file(tmp.path / "extra.csv", "id,count,age,smoker,other\na,0,1,1,5\n");
  CHECK_THROWS_AS(io::load_csv(tmp.path / "extra.csv", schema, CategoricalCoding::dummy),
                  DataError);
  write_file(tmp.path / "missing.csv", "id,count,age\na,0,1\n");
  CHECK_THROWS_AS(io::load_csv(tmp.path / "missing.csv", schema, CategoricalCoding::dummy),
                  DataError);
  write_file(tmp.path / "level.csv", "id,count,age,smoker\na,0,1,3\n");
  CHECK_THROWS_AS(io::load_csv(tmp.path / "level.csv", schema, CategoricalCoding::dummy),
                  DataError);
  write_file(tmp.path / "empty.csv", "id,count,age,smoker\na,,1,1\n");
  CHECK_THROWS_AS(io::load_csv(tmp.path / "empty.csv", schema, CategoricalCoding::dummy),
                  DataError);
  write_file(tmp.path / "ragged.csv", "id,count,age,smoker\na,0,1\n");
  CHECK_THROWS_AS(io::load_csv(tmp.path / "ragged.csv", schema, CategoricalCoding::dummy),
                  DataError);
  CHECK_THROWS_AS(io::load_csv(tmp.path / "absent.csv", schema, CategoricalCoding::dummy),
                  IoError);
}

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(io::parse_schema(io::json::parse(R"({"columns": []})")), DataError);
  CHECK_THROWS_AS(io::parse_schema(io::json::parse(
                      R"({"columns": [{"name": "y", "role": "response"},
                                      {"name": "w", "role": "categorical", "levels": 1}]})")),
                  DataError);
  CHECK_THROWS_AS(io::parse_schema(io::json::parse(
                      R"({"columns": [{"name": "y", "role": "response"},
                                      {"name": "y2", "role": "response"}]})")),
                  DataError);
  CHECK_THROWS_AS(io::parse_schema(io::json::parse(
                      R"({"columns": [{"name": "y", "role": "outcome"}]})")),
                  DataError);
  const auto schema = toy_schema();
  CHECK(io::parse_schema(io::schema_to_json(schema)).columns.size() == 4);
  CHECK(io::parse_schema(io::json{{"schema", io::schema_to_json(schema)}}).columns.size() == 4);
}

TEST_CASE("simulated data survives a CSV round trip exactly") {
  TempDir tmp;
  SimulationDesign design;
  design.n = 150;
  design.seed = 44;
  const Dataset original = generate(design);
  io::write_csv(original, tmp.path / "sim.csv");
  const auto loaded =
      io::load_csv(tmp.path / "sim.csv", io::schema_of(original), CategoricalCoding::numeric);
  const Dataset& copy = loaded.data;
  CHECK(copy.y == original.y);
  CHECK(copy.Q == original.Q);
  CHECK(copy.X == original.X);
  REQUIRE(copy.W.size() == original.W.size());
  for (std::size_t k = 0; k < copy.W.size(); ++k) CHECK(copy.W[k].onehot == original.W[k].onehot);
  CHECK(*copy.true_labels == *original.true_labels);
}

TEST_CASE("numbers are written with 17 significant digits") {
  CHECK(io::format_double(0.1) == "0.10000000000000001");
  CHECK(io::format_double(2.0) == "2");
  CHECK(std::stod(io::format_double(1.0 / 3)) == 1.0 / 3);
}

TEST_CASE("emitting reports") {
  TempDir tmp;
  SUBCASE("an empty set writes nothing") {
    CHECK(io::emit_reports({}, tmp.path / "none").empty());
    CHECK_FALSE(fs::exists(tmp.path / "none"));
  }
  SUBCASE("one selection report gives one JSON and a four-row CSV") {
    SimulationDesign design;
    design.n = 300;
    design.seed = 2;
    EmConfig config;
    config.restarts = 2;
    const auto report = sweep_components(generate(design), ModelSpec{}, {2, 3, 4, 5}, config);
    io::ReportSet set;
    set.selections.emplace_back("selection", report);
    const auto written = io::emit_reports(set, tmp.path);
    CHECK(written.size() == 2);
    CHECK(count_files(tmp.path) == 2);
    std::ifstream csv(tmp.path / "selection.csv");
    std::string line;
    int rows = -1;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 4);
    const auto doc = io::json::parse(io::read_text(tmp.path / "selection.json"));
    CHECK(doc.at("rows").size() == 4);
    CHECK(doc.at("chosen_G").contains("AICc"));
  }
  SUBCASE("fit reports carry trace and assignments") {
    SimulationDesign design;
    design.n = 200;
    design.seed = 3;
    EmConfig config;
    config.restarts = 2;
    const Dataset data = generate(design);
    io::ReportSet set;
    set.fits.emplace_back("fit", fit_em(data, ModelSpec{}, config));
    io::emit_reports(set, tmp.path);
    CHECK(fs::exists(tmp.path / "fit.json"));
    CHECK(fs::exists(tmp.path / "fit_trace.csv"));
    CHECK(fs::exists(tmp.path / "fit_assignments.csv"));
    const auto doc = io::json::parse(io::read_text(tmp.path / "fit.json"));
    CHECK(doc.at("free_parameters") == 28);
    CHECK(doc.at("params").at("pi").size() == 3);
  }
}

TEST_CASE("confusion table text") {
  Eigen::MatrixXi m(2, 2);
  m << 8, 2, 1, 9;
  const auto report = confusion_from_matrix(m);
  const std::string table = io::confusion_table(report, 0.5);
  CHECK(table.find("15.00%") != std::string::npos);
  const std::string csv = io::confusion_csv(report);
  CHECK(csv.rfind("true,pred_1,pred_2,misclassification\n", 0) == 0);
}

TEST_CASE("labels CSV") {
  TempDir tmp;
  write_file(tmp.path / "labels.csv", "true,predicted\n1,1\n2,3\n3,2\n");
  const auto [truth, pred] = io::load_labels_csv(tmp.path / "labels.csv");
  CHECK(truth == std::vector<int>{1, 2, 3});
  CHECK(pred == std::vector<int>{1, 3, 2});
  write_file(tmp.path / "bad.csv", "true,predicted\n1,x\n");
  CHECK_THROWS_AS(io::load_labels_csv(tmp.path / "bad.csv"), DataError);
}
