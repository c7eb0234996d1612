#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "doctest.h"
#include "latnr/errors.hpp"
#include "latnr/survey_data.hpp"

using namespace latnr;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = std::string("/tmp/latnr_test_") + name;
  std::ofstream file(path);
  file << content;
  return path;
}

CsvSchema basic_schema() {
  CsvSchema schema;
  schema.item_columns = {"a", "b", "c", "d"};
  return schema;
}

}  // namespace

TEST_CASE("full-response file loads with all respondents") {
  const std::string path = write_temp("full.csv",
                                      "unit_id,a,b,c,d\n"
                                      "1,1,0,1,1\n"
                                      "2,0,0,0,1\n"
                                      "3,1,1,1,1\n"
                                      "4,0,1,0,0\n");
  const SurveySample sample = load_survey_csv(path, basic_schema());
  CHECK(sample.n == 4);
  CHECK(sample.m == 4);
  CHECK(sample.population_size == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(sample.unit_respondent[k] == 1);
    for (std::size_t l = 0; l < 4; ++l) CHECK(sample.present(k, l));
  }
  // No pi column: defaults to n/N = 1.
  CHECK(sample.pi[0] == doctest::Approx(1.0));
}

TEST_CASE("row of NA cells is a unit nonrespondent") {
  const std::string path = write_temp("na.csv",
                                      "unit_id,a,b,c,d\n"
                                      "1,1,0,1,1\n"
                                      "2,NA,NA,NA,NA\n"
                                      "3,1,,0,1\n");
  const SurveySample sample = load_survey_csv(path, basic_schema());
  CHECK(sample.unit_respondent[0] == 1);
  CHECK(sample.unit_respondent[1] == 0);
  CHECK(sample.unit_respondent[2] == 1);
  CHECK_FALSE(sample.present(2, 1));

  const ItemResponseMatrix matrix = derive_indicators(sample);
  CHECK(matrix(0, 0) == 1);
  CHECK(matrix(1, 0) == 0);
  CHECK(matrix(1, 3) == 0);
  CHECK(matrix(2, 0) == 1);
  CHECK(matrix(2, 1) == 0);
}

TEST_CASE("indicator derivation and raw scores") {
  SurveySample sample;
  sample.n = 3;
  sample.m = 4;
  sample.population_size = 10;
  sample.unit_id = {10, 11, 12};
  sample.pi.assign(3, 0.3);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  sample.y = {1, 2, 3, 4,
              1, nan, 3, nan,
              nan, nan, nan, nan};
  sample.unit_respondent = {1, 1, 0};
  sample.validate();

  const ItemResponseMatrix matrix = derive_indicators(sample);
  const std::vector<int> scores = raw_scores(matrix);
  CHECK(scores[0] == 4);
  CHECK(scores[1] == 2);
  CHECK(scores[2] == 0);
  CHECK(matrix(1, 0) == 1);
  CHECK(matrix(1, 1) == 0);
  CHECK(matrix(1, 2) == 1);
  CHECK(matrix(1, 3) == 0);

  // S_k = 0 exactly for unit nonrespondents.
  for (std::size_t k = 0; k < sample.n; ++k) {
    CHECK((scores[k] == 0) == (sample.unit_respondent[k] == 0));
  }

  const RespondentPartition part = partition_respondents(sample, matrix);
  CHECK(part.respondents.size() + part.nonrespondents.size() == sample.n);
  CHECK(part.item_respondents[1] == std::vector<std::size_t>{0});
  CHECK(part.item_respondents[0] == std::vector<std::size_t>{0, 1});
}

TEST_CASE("validation errors") {
  SUBCASE("pi outside (0,1]") {
    const std::string path = write_temp("badpi.csv",
                                        "unit_id,pi,a,b,c,d\n"
                                        "1,1.5,1,0,1,1\n");
    CsvSchema schema = basic_schema();
    schema.pi_column = "pi";
    CHECK_THROWS_AS(load_survey_csv(path, schema), ValidationError);
  }
  SUBCASE("fewer than 3 item columns") {
    CsvSchema schema;
    schema.item_columns = {"a", "b"};
    CHECK_THROWS_AS(load_survey_csv("/tmp/irrelevant.csv", schema), SchemaError);
  }
  SUBCASE("malformed row reports its number") {
    const std::string path = write_temp("short.csv",
                                        "unit_id,a,b,c,d\n"
                                        "1,1,0,1,1\n"
                                        "2,1,0\n");
    try {
      load_survey_csv(path, basic_schema());
      FAIL("expected ParseError");
    } catch (const ParseError& err) {
      CHECK(err.row == 3);
    }
  }
  SUBCASE("missing column") {
    const std::string path = write_temp("nocol.csv", "unit_id,a,b,c\n1,1,0,1\n");
    CHECK_THROWS_AS(load_survey_csv(path, basic_schema()), SchemaError);
  }
  SUBCASE("garbage cell") {
    const std::string path = write_temp("garbage.csv",
                                        "unit_id,a,b,c,d\n"
                                        "1,1,zap,1,1\n");
    CHECK_THROWS_AS(load_survey_csv(path, basic_schema()), ParseError);
  }
}

TEST_CASE("loading is deterministic") {
  const std::string path = write_temp("det.csv",
                                      "unit_id,a,b,c,d\n"
                                      "1,1,NA,1,0\n"
                                      "2,0,1,NA,1\n");
  const SurveySample first = load_survey_csv(path, basic_schema());
  const SurveySample second = load_survey_csv(path, basic_schema());
  const ItemResponseMatrix ma = derive_indicators(first);
  const ItemResponseMatrix mb = derive_indicators(second);
  CHECK(ma.x == mb.x);
  CHECK(first.unit_id == second.unit_id);
}

TEST_CASE("explicit respondent column overrides the derived flag") {
  const std::string path = write_temp("flag.csv",
                                      "unit_id,resp,a,b,c,d\n"
                                      "1,1,1,0,1,1\n"
                                      "2,0,NA,NA,NA,NA\n"
                                      "3,1,NA,NA,NA,1\n");
  CsvSchema schema = basic_schema();
  schema.respondent_column = "resp";
  const SurveySample sample = load_survey_csv(path, schema);
  CHECK(sample.unit_respondent[0] == 1);
  CHECK(sample.unit_respondent[1] == 0);
  CHECK(sample.unit_respondent[2] == 1);

  // A flagged nonrespondent with observed values violates the data model.
  const std::string bad = write_temp("flagbad.csv",
                                     "unit_id,resp,a,b,c,d\n"
                                     "1,0,1,0,1,1\n");
  CHECK_THROWS_AS(load_survey_csv(bad, schema), ValidationError);
}

TEST_CASE("explicit population size sets default pi") {
  const std::string path = write_temp("pop.csv",
                                      "unit_id,a,b,c,d\n"
                                      "1,1,0,1,1\n"
                                      "2,0,1,0,1\n");
  CsvSchema schema = basic_schema();
  schema.population_size = 20;
  const SurveySample sample = load_survey_csv(path, schema);
  CHECK(sample.population_size == 20);
  CHECK(sample.pi[0] == doctest::Approx(0.1));
}

TEST_CASE("indicator matrix rejects fewer than three items") {
  CHECK_THROWS_AS(ItemResponseMatrix(4, 2), ValidationError);
}

TEST_CASE("bundled poll file loads as a full-response population") {
  CsvSchema schema;
  schema.item_columns = {"item1", "item2", "item3", "item4"};
  const SurveySample sample =
      load_survey_csv(std::string(LATNR_DATA_DIR) + "/abortion_poll.csv", schema);
  CHECK(sample.n == 379);
  CHECK(sample.population_size == 379);
  CHECK(sample.m == 4);
  double item2_total = 0.0;
  for (std::size_t k = 0; k < sample.n; ++k) {
    CHECK(sample.unit_respondent[k] == 1);
    item2_total += sample.value(k, 1);
  }
  CHECK(item2_total == 225.0);
}
