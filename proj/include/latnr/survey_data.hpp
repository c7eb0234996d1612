#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace latnr {

// One survey sample: unit labels, inclusion probabilities, item values with
// missingness (NaN cells), and unit-response flags. Immutable after
// construction and safe to share across parallel workers.
struct SurveySample {
  std::vector<std::int64_t> unit_id;
  std::vector<double> pi;             // inclusion probability, (0, 1]
  std::vector<double> y;              // row-major n x m, NaN = missing
  std::vector<std::uint8_t> unit_respondent;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t population_size = 0;
  std::vector<std::string> item_names;

  double value(std::size_t unit, std::size_t item) const { return y[unit * m + item]; }
  bool present(std::size_t unit, std::size_t item) const;

  // Checks every invariant; throws ValidationError with the offending unit.
  void validate() const;
};

// Binary item-response indicators x_kl aligned with a SurveySample.
// Requires at least three items; rows of unit nonrespondents are all zero.
struct ItemResponseMatrix {
  std::vector<std::uint8_t> x;  // row-major n x m
  std::vector<std::int64_t> unit_id;
  std::size_t n = 0;
  std::size_t m = 0;

  ItemResponseMatrix() = default;
  ItemResponseMatrix(std::size_t rows, std::size_t items);

  std::uint8_t operator()(std::size_t unit, std::size_t item) const {
    return x[unit * m + item];
  }
  void set(std::size_t unit, std::size_t item, bool value) {
    x[unit * m + item] = value ? 1 : 0;
  }
};

// Index sets of unit respondents, unit nonrespondents, and per-item
// respondents (indices into the owning sample).
struct RespondentPartition {
  std::vector<std::size_t> respondents;       // r
  std::vector<std::size_t> nonrespondents;    // r-bar
  std::vector<std::vector<std::size_t>> item_respondents;  // r_j per item
};

// Column mapping for survey CSV files. Cells matching any missing sentinel
// are treated as item nonresponse.
struct CsvSchema {
  std::string unit_id_column = "unit_id";
  std::optional<std::string> pi_column;
  std::vector<std::string> item_columns;
  std::optional<std::string> respondent_column;
  std::vector<std::string> missing_sentinels = {"", "NA"};
  std::optional<std::size_t> population_size;  // defaults to n when absent
};

// Reads a header-row CSV into a validated SurveySample. When no respondent
// column is mapped, a unit counts as a respondent iff at least one item
// value is present. With no pi column, pi defaults to n/N.
SurveySample load_survey_csv(const std::string& path, const CsvSchema& schema);

// x_kl = 1 iff y_kl is present; nonrespondent rows come out all zero.
ItemResponseMatrix derive_indicators(const SurveySample& sample);

// Raw scores S_k = sum_l x_kl.
std::vector<int> raw_scores(const ItemResponseMatrix& matrix);

// Splits the sample into r, r-bar, and r_j; r_j = {k in r : x_kj = 1}.
RespondentPartition partition_respondents(const SurveySample& sample,
                                          const ItemResponseMatrix& matrix);

}  // namespace latnr
