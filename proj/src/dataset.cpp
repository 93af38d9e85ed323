#include "polsens/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "polsens/errors.hpp"

namespace polsens {
namespace {

constexpr const char* kReserved[] = {"id", "treatment", "outcome"};

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string io_context(const std::filesystem::path& path, const char* what) {
  return std::string(what) + " '" + path.string() + "': " + std::strerror(errno);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(io_context(path, "cannot open"));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (in.bad()) throw IoError(io_context(path, "read failed on"));
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(io_context(path, "cannot write"));
  return out;
}

void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError(io_context(path, "write failed on"));
}

std::string cell_text(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  return std::get<std::string>(c);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || text.empty()) {
    throw ParseError("cannot parse '" + std::string(text) + "' as a number");
  }
  return v;
}

Dataset::Dataset(std::vector<std::string> schema,
                 std::span<const CaseRecord> records, std::string provenance)
    : schema_(std::move(schema)), provenance_(std::move(provenance)) {
  const std::size_t n = records.size();
  covariates_.assign(schema_.size(), std::vector<double>(n));
  ids_.reserve(n);
  treatment_.reserve(n);
  outcome_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const CaseRecord& r = records[i];
    if (r.covariates.size() != schema_.size()) {
      throw SchemaError("record " + std::to_string(r.id) + " has " +
                        std::to_string(r.covariates.size()) +
                        " covariates, schema declares " +
                        std::to_string(schema_.size()));
    }
    ids_.push_back(r.id);
    treatment_.push_back(static_cast<double>(r.treatment));
    outcome_.push_back(static_cast<double>(r.outcome));
    for (std::size_t j = 0; j < schema_.size(); ++j) covariates_[j][i] = r.covariates[j];
  }
  validate_and_index();
}

Dataset Dataset::from_columns(std::vector<std::string> schema,
                              std::vector<UnitId> ids,
                              std::vector<std::vector<double>> covariates,
                              std::vector<double> treatment,
                              std::vector<double> outcome,
                              std::string provenance) {
  Dataset d;
  d.schema_ = std::move(schema);
  d.ids_ = std::move(ids);
  d.covariates_ = std::move(covariates);
  d.treatment_ = std::move(treatment);
  d.outcome_ = std::move(outcome);
  d.provenance_ = std::move(provenance);
  if (d.covariates_.size() != d.schema_.size()) {
    throw SchemaError("covariate column count does not match schema width");
  }
  for (const auto& col : d.covariates_) {
    if (col.size() != d.ids_.size()) {
      throw SchemaError("covariate column length does not match id count");
    }
  }
  if (d.treatment_.size() != d.ids_.size() || d.outcome_.size() != d.ids_.size()) {
    throw SchemaError("treatment/outcome length does not match id count");
  }
  d.validate_and_index();
  return d;
}

void Dataset::validate_and_index() {
  std::unordered_set<std::string> names;
  for (const auto& name : schema_) {
    if (!names.insert(name).second) throw SchemaError("duplicate covariate name '" + name + "'");
    for (const char* r : kReserved) {
      if (name == r) throw SchemaError("covariate name '" + name + "' is reserved");
    }
  }
  row_index_.clear();
  row_index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (treatment_[i] != 0.0 && treatment_[i] != 1.0) {
      throw ValidationError("row " + std::to_string(i + 1) + ": treatment must be 0 or 1");
    }
    if (outcome_[i] != 0.0 && outcome_[i] != 1.0) {
      throw ValidationError("row " + std::to_string(i + 1) + ": outcome must be 0 or 1");
    }
    if (!row_index_.emplace(ids_[i], i).second) {
      throw ValidationError("row " + std::to_string(i + 1) + ": duplicate id " +
                            std::to_string(ids_[i]));
    }
  }
}

std::span<const double> Dataset::column(const std::string& name) const {
  const auto j = column_index(name);
  if (!j) throw SchemaError("unknown covariate '" + name + "'");
  return covariates_[*j];
}

std::optional<std::size_t> Dataset::column_index(const std::string& name) const {
  const auto it = std::find(schema_.begin(), schema_.end(), name);
  if (it == schema_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - schema_.begin());
}

std::optional<std::size_t> Dataset::row_of(UnitId id) const {
  const auto it = row_index_.find(id);
  if (it == row_index_.end()) return std::nullopt;
  return it->second;
}

CaseRecord Dataset::record(std::size_t row) const {
  CaseRecord r;
  r.id = ids_[row];
  r.treatment = treatment_at(row);
  r.outcome = outcome_at(row);
  r.covariates.reserve(width());
  for (const auto& col : covariates_) r.covariates.push_back(col[row]);
  return r;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<UnitId> ids;
  std::vector<double> t, y;
  std::vector<std::vector<double>> cov(width());
  ids.reserve(rows.size());
  t.reserve(rows.size());
  y.reserve(rows.size());
  for (auto& c : cov) c.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= size()) throw DomainError("subset row out of range");
    ids.push_back(ids_[r]);
    t.push_back(treatment_[r]);
    y.push_back(outcome_[r]);
    for (std::size_t j = 0; j < width(); ++j) cov[j].push_back(covariates_[j][r]);
  }
  return from_columns(schema_, std::move(ids), std::move(cov), std::move(t),
                      std::move(y), provenance_);
}

Dataset Dataset::select(std::span<const std::string> keep) const {
  std::vector<std::vector<double>> cov;
  cov.reserve(keep.size());
  for (const auto& name : keep) {
    const auto j = column_index(name);
    if (!j) throw SchemaError("unknown covariate '" + name + "'");
    cov.push_back(covariates_[*j]);
  }
  return from_columns(std::vector<std::string>(keep.begin(), keep.end()), ids_,
                      std::move(cov), treatment_, outcome_, provenance_);
}

RowSet rows_of(const Dataset& d, std::span<const UnitId> ids) {
  RowSet rows;
  rows.reserve(ids.size());
  for (UnitId id : ids) {
    const auto r = d.row_of(id);
    if (!r) throw ValidationError("id " + std::to_string(id) + " not in dataset");
    rows.push_back(*r);
  }
  return rows;
}

RowSet all_rows(const Dataset& d) {
  RowSet rows(d.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

namespace {

FoldSplit partition(const Dataset& d, std::uint64_t seed, std::size_t n_policy,
                    std::size_t n_nuisance) {
  RowSet order = all_rows(d);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto take = [&](std::size_t begin, std::size_t end) {
    RowSet part(order.begin() + static_cast<std::ptrdiff_t>(begin),
                order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(part.begin(), part.end());
    IdSet ids;
    ids.reserve(part.size());
    for (std::size_t r : part) ids.push_back(d.id(r));
    return ids;
  };
  FoldSplit split;
  split.policy_fold = take(0, n_policy);
  split.nuisance_fold = take(n_policy, n_policy + n_nuisance);
  split.eval_fold = take(n_policy + n_nuisance, order.size());
  return split;
}

}  // namespace

FoldSplit split_folds(const Dataset& d, std::uint64_t seed,
                      const FoldFractions& f) {
  if (!(f.policy > 0.0 && f.nuisance > 0.0 && f.eval > 0.0)) {
    throw DomainError("fold fractions must be positive");
  }
  if (std::abs(f.policy + f.nuisance + f.eval - 1.0) > 1e-9) {
    throw DomainError("fold fractions must sum to 1");
  }
  const std::size_t n = d.size();
  if (n < 3) throw InsufficientDataError("need at least 3 units to split into folds");
  // The epsilon keeps products such as 100 * 0.29 from flooring one short.
  const auto n_policy = static_cast<std::size_t>(std::floor(n * f.policy + 1e-9));
  const auto n_nuisance = static_cast<std::size_t>(std::floor(n * f.nuisance + 1e-9));
  return partition(d, seed, n_policy, n_nuisance);
}

FoldSplit split_folds_with_eval_count(const Dataset& d, std::uint64_t seed,
                                      std::size_t eval_count) {
  const std::size_t n = d.size();
  if (n < 3) throw InsufficientDataError("need at least 3 units to split into folds");
  if (eval_count == 0 || eval_count + 2 > n) {
    throw DomainError("evaluation fold size must leave at least one unit per training fold");
  }
  const std::size_t rest = n - eval_count;
  return partition(d, seed, rest / 2, rest - rest / 2);
}

Dataset load_dataset(const std::filesystem::path& path,
                     const std::optional<std::vector<std::string>>& schema) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw SchemaError("'" + path.string() + "' has no header row");
  const auto header = split_fields(lines.front());
  if (header.size() < 3 || header[0] != "id" || header[1] != "treatment" ||
      header[2] != "outcome") {
    throw SchemaError("header must start with id,treatment,outcome in '" +
                      path.string() + "'");
  }
  std::vector<std::string> names(header.begin() + 3, header.end());
  if (schema) {
    std::vector<std::string> missing, extra;
    for (const auto& s : *schema) {
      if (std::find(names.begin(), names.end(), s) == names.end()) missing.push_back(s);
    }
    for (const auto& s : names) {
      if (std::find(schema->begin(), schema->end(), s) == schema->end()) extra.push_back(s);
    }
    if (!missing.empty() || !extra.empty()) {
      std::ostringstream msg;
      msg << "schema mismatch in '" << path.string() << "'";
      if (!missing.empty()) {
        msg << "; missing:";
        for (const auto& m : missing) msg << ' ' << m;
      }
      if (!extra.empty()) {
        msg << "; extra:";
        for (const auto& e : extra) msg << ' ' << e;
      }
      throw SchemaError(msg.str());
    }
    if (names != *schema) throw SchemaError("covariate columns out of schema order in '" + path.string() + "'");
  }

  const std::size_t n = lines.size() - 1;
  std::vector<UnitId> ids(n);
  std::vector<double> t(n), y(n);
  std::vector<std::vector<double>> cov(names.size(), std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto fields = split_fields(lines[i + 1]);
    const std::string row = std::to_string(i + 1);
    if (fields.size() != header.size()) {
      throw SchemaError("row " + row + ": expected " + std::to_string(header.size()) +
                        " fields, found " + std::to_string(fields.size()));
    }
    auto number = [&](std::size_t col) {
      try {
        return parse_double(fields[col]);
      } catch (const ParseError&) {
        throw ParseError("row " + row + ", column '" + header[col] +
                         "': cannot parse '" + fields[col] + "' as a number");
      }
    };
    {
      const std::string& f = fields[0];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), ids[i]);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size() || f.empty()) {
        throw ParseError("row " + row + ", column 'id': cannot parse '" + f + "' as an integer");
      }
    }
    t[i] = number(1);
    y[i] = number(2);
    if (t[i] != 0.0 && t[i] != 1.0) {
      throw ValidationError("row " + row + ": treatment value '" + fields[1] + "' is not 0 or 1");
    }
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw ValidationError("row " + row + ": outcome value '" + fields[2] + "' is not 0 or 1");
    }
    for (std::size_t j = 0; j < names.size(); ++j) {
      const double v = number(j + 3);
      if (!std::isfinite(v)) {
        throw ValidationError("row " + row + ", column '" + names[j] + "': value is not finite");
      }
      cov[j][i] = v;
    }
  }
  return Dataset::from_columns(std::move(names), std::move(ids), std::move(cov),
                               std::move(t), std::move(y), "file:" + path.string());
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "id,treatment,outcome";
  for (const auto& name : d.schema()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << d.id(i) << ',' << d.treatment_at(i) << ',' << d.outcome_at(i);
    for (std::size_t j = 0; j < d.width(); ++j) out << ',' << format_double(d.covariate(i, j));
    out << '\n';
  }
  finish_write(out, path);
}

void ResultsTable::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) {
    throw SchemaError("results row has " + std::to_string(row.size()) +
                      " cells, table has " + std::to_string(columns.size()) + " columns");
  }
  rows.push_back(std::move(row));
}

void write_results(const ResultsTable& table, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  for (std::size_t j = 0; j < table.columns.size(); ++j) {
    if (j) out << ',';
    out << table.columns[j];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << cell_text(row[j]);
    }
    out << '\n';
  }
  finish_write(out, path);
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw SchemaError("CSV has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw SchemaError("'" + path.string() + "' has no header row");
  CsvTable t;
  t.header = split_fields(lines.front());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto fields = split_fields(lines[i]);
    if (fields.size() != t.header.size()) {
      throw SchemaError("'" + path.string() + "' row " + std::to_string(i) +
                        " has the wrong number of fields");
    }
    t.rows.push_back(std::move(fields));
  }
  return t;
}

}  // namespace polsens
