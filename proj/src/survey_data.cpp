#include "latnr/survey_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "latnr/errors.hpp"

namespace latnr {

bool SurveySample::present(std::size_t unit, std::size_t item) const {
  return !std::isnan(y[unit * m + item]);
}

void SurveySample::validate() const {
  if (unit_id.size() != n || pi.size() != n || unit_respondent.size() != n ||
      y.size() != n * m) {
    throw ValidationError("sample field sizes are inconsistent");
  }
  if (population_size < n) {
    throw ValidationError("population size smaller than sample size");
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!(pi[k] > 0.0 && pi[k] <= 1.0)) {
      throw ValidationError("inclusion probability outside (0,1] for unit " +
                            std::to_string(unit_id[k]));
    }
    if (!unit_respondent[k]) {
      for (std::size_t l = 0; l < m; ++l) {
        if (present(k, l)) {
          throw ValidationError("unit nonrespondent " + std::to_string(unit_id[k]) +
                                " has an observed item value");
        }
      }
    }
  }
}

ItemResponseMatrix::ItemResponseMatrix(std::size_t rows, std::size_t items)
    : x(rows * items, 0), unit_id(rows, 0), n(rows), m(items) {
  if (items < 3) throw ValidationError("indicator matrix needs at least 3 items");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream stream(line);
  while (std::getline(stream, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ' || cell.back() == '\t'))
      cell.pop_back();
    std::size_t start = 0;
    while (start < cell.size() && (cell[start] == ' ' || cell[start] == '\t')) ++start;
    cells.push_back(cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, std::size_t row) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError("cannot parse numeric cell '" + cell + "'", row);
  }
  return value;
}

bool is_missing(const std::string& cell, const std::vector<std::string>& sentinels) {
  return std::find(sentinels.begin(), sentinels.end(), cell) != sentinels.end();
}

}  // namespace

SurveySample load_survey_csv(const std::string& path, const CsvSchema& schema) {
  if (schema.item_columns.size() < 3) {
    throw SchemaError("schema declares fewer than 3 item columns");
  }
  std::ifstream file(path);
  if (!file) throw Error("cannot open file: " + path);

  std::string line;
  if (!std::getline(file, line)) throw ParseError("empty file", 1);
  const std::vector<std::string> header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> column_of;
  for (std::size_t i = 0; i < header.size(); ++i) column_of[header[i]] = i;

  auto require_column = [&](const std::string& name) -> std::size_t {
    auto it = column_of.find(name);
    if (it == column_of.end()) throw SchemaError("column '" + name + "' not found in " + path);
    return it->second;
  };

  const std::size_t id_col = require_column(schema.unit_id_column);
  std::optional<std::size_t> pi_col;
  if (schema.pi_column) pi_col = require_column(*schema.pi_column);
  std::optional<std::size_t> resp_col;
  if (schema.respondent_column) resp_col = require_column(*schema.respondent_column);
  std::vector<std::size_t> item_cols;
  item_cols.reserve(schema.item_columns.size());
  for (const auto& name : schema.item_columns) item_cols.push_back(require_column(name));

  SurveySample sample;
  sample.m = item_cols.size();
  sample.item_names = schema.item_columns;

  std::size_t row_number = 1;
  std::vector<double> pi_values;
  while (std::getline(file, line)) {
    ++row_number;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() < header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " cells, got " +
                           std::to_string(cells.size()),
                       row_number);
    }
    sample.unit_id.push_back(static_cast<std::int64_t>(parse_number(cells[id_col], row_number)));
    pi_values.push_back(pi_col ? parse_number(cells[*pi_col], row_number) : -1.0);

    bool any_present = false;
    for (std::size_t l = 0; l < item_cols.size(); ++l) {
      const std::string& cell = cells[item_cols[l]];
      if (is_missing(cell, schema.missing_sentinels)) {
        sample.y.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        sample.y.push_back(parse_number(cell, row_number));
        any_present = true;
      }
    }
    bool respondent = any_present;
    if (resp_col) respondent = parse_number(cells[*resp_col], row_number) != 0.0;
    sample.unit_respondent.push_back(respondent ? 1 : 0);
  }

  sample.n = sample.unit_id.size();
  sample.population_size = schema.population_size.value_or(sample.n);
  if (pi_col) {
    sample.pi = std::move(pi_values);
  } else {
    const double default_pi =
        static_cast<double>(sample.n) / static_cast<double>(sample.population_size);
    sample.pi.assign(sample.n, default_pi);
  }
  sample.validate();
  return sample;
}

ItemResponseMatrix derive_indicators(const SurveySample& sample) {
  ItemResponseMatrix matrix(sample.n, sample.m);
  matrix.unit_id = sample.unit_id;
  for (std::size_t k = 0; k < sample.n; ++k) {
    for (std::size_t l = 0; l < sample.m; ++l) {
      matrix.set(k, l, sample.present(k, l));
    }
  }
  return matrix;
}

std::vector<int> raw_scores(const ItemResponseMatrix& matrix) {
  std::vector<int> scores(matrix.n, 0);
  for (std::size_t k = 0; k < matrix.n; ++k) {
    int sum = 0;
    for (std::size_t l = 0; l < matrix.m; ++l) sum += matrix(k, l);
    scores[k] = sum;
  }
  return scores;
}

RespondentPartition partition_respondents(const SurveySample& sample,
                                          const ItemResponseMatrix& matrix) {
  RespondentPartition part;
  part.item_respondents.resize(sample.m);
  for (std::size_t k = 0; k < sample.n; ++k) {
    if (sample.unit_respondent[k]) {
      part.respondents.push_back(k);
      for (std::size_t l = 0; l < sample.m; ++l) {
        if (matrix(k, l)) part.item_respondents[l].push_back(k);
      }
    } else {
      part.nonrespondents.push_back(k);
    }
  }
  return part;
}

}  // namespace latnr
