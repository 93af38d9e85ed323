#pragma once

// Observational data model shared by every module: one row per unit with
// covariates, a binary treatment (1 = bail set) and a binary outcome
// (1 = failure to appear). Storage is column-oriented so that per-feature
// loops see contiguous memory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace polsens {

using UnitId = std::int64_t;
using IdSet = std::vector<UnitId>;
using RowSet = std::vector<std::size_t>;

struct CaseRecord {
  UnitId id = 0;
  std::vector<double> covariates;
  int treatment = 0;
  int outcome = 0;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> schema, std::span<const CaseRecord> records,
          std::string provenance = {});

  // Column-oriented construction; `covariates[j]` holds feature j for all
  // units. Throws ValidationError/SchemaError on invariant violations.
  static Dataset from_columns(std::vector<std::string> schema,
                              std::vector<UnitId> ids,
                              std::vector<std::vector<double>> covariates,
                              std::vector<double> treatment,
                              std::vector<double> outcome,
                              std::string provenance = {});

  std::size_t size() const { return ids_.size(); }
  std::size_t width() const { return schema_.size(); }
  bool empty() const { return ids_.empty(); }

  const std::vector<std::string>& schema() const { return schema_; }
  const std::string& provenance() const { return provenance_; }
  void set_provenance(std::string p) { provenance_ = std::move(p); }

  std::span<const UnitId> ids() const { return ids_; }
  UnitId id(std::size_t row) const { return ids_[row]; }

  // 0.0 / 1.0 columns.
  std::span<const double> treatment() const { return treatment_; }
  std::span<const double> outcome() const { return outcome_; }
  int treatment_at(std::size_t row) const { return treatment_[row] != 0.0; }
  int outcome_at(std::size_t row) const { return outcome_[row] != 0.0; }

  std::span<const double> column(std::size_t j) const { return covariates_[j]; }
  std::span<const double> column(const std::string& name) const;
  double covariate(std::size_t row, std::size_t j) const {
    return covariates_[j][row];
  }
  std::optional<std::size_t> column_index(const std::string& name) const;

  std::optional<std::size_t> row_of(UnitId id) const;
  CaseRecord record(std::size_t row) const;

  // Rows in the given order.
  Dataset subset(std::span<const std::size_t> rows) const;
  // Keep only the named covariates, in the order given.
  Dataset select(std::span<const std::string> keep) const;

 private:
  void validate_and_index();

  std::vector<std::string> schema_;
  std::vector<UnitId> ids_;
  std::vector<std::vector<double>> covariates_;
  std::vector<double> treatment_;
  std::vector<double> outcome_;
  std::string provenance_;
  std::unordered_map<UnitId, std::size_t> row_index_;
};

// Maps ids to row positions, preserving the order of `ids`.
RowSet rows_of(const Dataset& d, std::span<const UnitId> ids);
RowSet all_rows(const Dataset& d);

struct FoldFractions {
  double policy = 0.45;
  double nuisance = 0.45;
  double eval = 0.10;
};

// Three disjoint id sets covering the dataset. Each set lists ids in dataset
// row order.
struct FoldSplit {
  IdSet policy_fold;
  IdSet nuisance_fold;
  IdSet eval_fold;
};

// |policy| = floor(n f_policy), |nuisance| = floor(n f_nuisance), the rest
// goes to eval. Membership comes from a seeded shuffle of the rows.
FoldSplit split_folds(const Dataset& d, std::uint64_t seed,
                      const FoldFractions& fractions);

// Fixed-size evaluation fold; the remainder is halved between the two
// training folds (policy gets the floor).
FoldSplit split_folds_with_eval_count(const Dataset& d, std::uint64_t seed,
                                      std::size_t eval_count);

// CSV with header `id,treatment,outcome,<covariates...>`. When `schema` is
// given the covariate columns must match it exactly.
Dataset load_dataset(const std::filesystem::path& path,
                     const std::optional<std::vector<std::string>>& schema = {});
void write_dataset(const Dataset& d, const std::filesystem::path& path);

// Tidy results table, one estimate per row.
using Cell = std::variant<double, std::int64_t, std::string>;

struct ResultsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  ResultsTable() = default;
  explicit ResultsTable(std::vector<std::string> cols) : columns(std::move(cols)) {}
  void add_row(std::vector<Cell> row);
};

void write_results(const ResultsTable& table, const std::filesystem::path& path);

// Raw CSV contents (header + string cells), used to read artifacts back.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

// 17 significant digits, which round-trips every double.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace polsens
