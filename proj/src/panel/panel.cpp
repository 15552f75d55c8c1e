#include "flip/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "flip/util/error.hpp"
#include "flip/util/rng.hpp"
#include "flip/util/text.hpp"

namespace flip {

PanelDataset PanelDataset::from_trajectories(std::vector<Trajectory> trajectories,
                                             std::vector<std::string> ids) {
  if (trajectories.size() < 2)
    throw ValidationError("a panel needs at least 2 subjects, got " +
                          std::to_string(trajectories.size()));
  PanelDataset d;
  d.horizon_ = static_cast<int>(trajectories.front().covariates.size());
  if (d.horizon_ < 1) throw ValidationError("horizon must be at least 1");
  d.covariate_dims_.reserve(static_cast<std::size_t>(d.horizon_));
  for (const auto& x : trajectories.front().covariates)
    d.covariate_dims_.push_back(static_cast<int>(x.size()));

  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& tr = trajectories[i];
    if (static_cast<int>(tr.covariates.size()) != d.horizon_ ||
        static_cast<int>(tr.treatments.size()) != d.horizon_)
      throw ValidationError("subject " + std::to_string(i) +
                            " has a different horizon than subject 0");
    for (int t = 0; t < d.horizon_; ++t) {
      if (static_cast<int>(tr.covariates[static_cast<std::size_t>(t)].size()) !=
          d.covariate_dims_[static_cast<std::size_t>(t)])
        throw ValidationError("subject " + std::to_string(i) +
                              " has a different covariate dimension at t=" +
                              std::to_string(t + 1));
      for (double v : tr.covariates[static_cast<std::size_t>(t)])
        if (!std::isfinite(v))
          throw ValidationError("non-finite covariate for subject " +
                                std::to_string(i));
      const int a = tr.treatments[static_cast<std::size_t>(t)];
      if (a != 0 && a != 1)
        throw ValidationError("treatment must be 0 or 1 for subject " +
                              std::to_string(i));
    }
    if (!std::isfinite(tr.outcome))
      throw ValidationError("non-finite outcome for subject " + std::to_string(i));
  }
  if (ids.empty()) {
    ids.reserve(trajectories.size());
    for (std::size_t i = 0; i < trajectories.size(); ++i)
      ids.push_back(std::to_string(i));
  } else if (ids.size() != trajectories.size()) {
    throw ValidationError("id count does not match subject count");
  }
  d.trajectories_ = std::move(trajectories);
  d.ids_ = std::move(ids);
  return d;
}

PanelDataset PanelDataset::with_outcome_shift(double c) const {
  PanelDataset d = *this;
  for (auto& tr : d.trajectories_) tr.outcome += c;
  return d;
}

std::size_t history_length(const PanelDataset& data, int t) {
  if (t < 1 || t > data.horizon())
    throw ValidationError("timepoint " + std::to_string(t) +
                          " out of range 1.." + std::to_string(data.horizon()));
  std::size_t len = 0;
  for (int s = 1; s <= t; ++s)
    len += static_cast<std::size_t>(data.covariate_dims()[static_cast<std::size_t>(s - 1)]);
  return len + static_cast<std::size_t>(t - 1);
}

HistoryView history(const PanelDataset& data, std::size_t i, int t) {
  if (t < 1 || t > data.horizon())
    throw ValidationError("timepoint " + std::to_string(t) +
                          " out of range 1.." + std::to_string(data.horizon()));
  const Trajectory& tr = data.subject(i);
  HistoryView h;
  h.subject = i;
  h.t = t;
  h.features.reserve(history_length(data, t));
  for (int s = 1; s <= t; ++s) {
    const auto& x = tr.covariates[static_cast<std::size_t>(s - 1)];
    h.features.insert(h.features.end(), x.begin(), x.end());
  }
  for (int s = 1; s < t; ++s)
    h.features.push_back(static_cast<double>(tr.treatments[static_cast<std::size_t>(s - 1)]));
  return h;
}

std::vector<std::size_t> FoldAssignment::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == fold) out.push_back(i);
  return out;
}

FoldAssignment assign_folds(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("fold count must be at least 2");
  if (static_cast<std::size_t>(k) > n)
    throw ValidationError("fold count " + std::to_string(k) +
                          " exceeds sample size " + std::to_string(n));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng::Stream stream(rng::derive_seed(seed, {0x666f6c64ull}));  // "fold"
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = stream.below(i);
    std::swap(perm[i - 1], perm[j]);
  }
  FoldAssignment f;
  f.k = k;
  f.seed = seed;
  f.labels.assign(n, 0);
  for (std::size_t pos = 0; pos < n; ++pos)
    f.labels[perm[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
  return f;
}

// ------------------------------- CSV ---------------------------------------

CsvSchema CsvSchema::from_columns(std::vector<std::string> columns) {
  CsvSchema s;
  s.default_columns_ = std::move(columns);
  return s;
}

CsvSchema CsvSchema::load(const std::string& path) {
  const auto kv = text::KeyValueFile::load(path);
  CsvSchema s;
  bool have_default = false;
  for (const auto& key : kv.keys_in_order()) {
    if (key == "covariates") {
      s.default_columns_.clear();
      for (auto& c : text::split(kv.get(key), ','))
        if (!text::strip(c).empty()) s.default_columns_.emplace_back(text::strip(c));
      have_default = true;
    } else if (key.rfind("covariates[", 0) == 0 && key.back() == ']') {
      long long t = 0;
      if (!text::parse_long(key.substr(11, key.size() - 12), t) || t < 1)
        throw ValidationError(path + ": bad per-timepoint key '" + key + "'");
      std::vector<std::string> cols;
      for (auto& c : text::split(kv.get(key), ','))
        if (!text::strip(c).empty()) cols.emplace_back(text::strip(c));
      s.overrides_[static_cast<int>(t)] = std::move(cols);
    } else {
      throw ValidationError(path + ": unknown schema key '" + key + "'");
    }
  }
  if (!have_default && s.overrides_.empty())
    throw ValidationError(path + ": schema lists no covariate columns");
  return s;
}

const std::vector<std::string>& CsvSchema::columns_for(int t) const {
  auto it = overrides_.find(t);
  return it != overrides_.end() ? it->second : default_columns_;
}

namespace {

std::vector<std::string> parse_csv_row(const std::string& line) {
  auto fields = text::split(line, ',');
  for (auto& f : fields) f = std::string(text::strip(f));
  return fields;
}

struct RawRow {
  std::string id;
  int t = 0;
  int a = 0;
  bool has_y = false;
  double y = 0.0;
  std::vector<double> all_covariates;  // every schema column, widest set
  int lineno = 0;
};

[[noreturn]] void row_error(const std::string& path, int lineno,
                            const std::string& msg) {
  throw ValidationError(path + ": row " + std::to_string(lineno) + ": " + msg);
}

}  // namespace

PanelDataset load_long_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open panel file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
  const auto header = parse_csv_row(line);
  std::map<std::string, std::size_t> col_index;
  for (std::size_t c = 0; c < header.size(); ++c) col_index[header[c]] = c;
  for (const char* required : {"id", "t", "a", "y"})
    if (!col_index.count(required))
      throw ValidationError(path + ": missing required column '" +
                            std::string(required) + "'");

  // Group rows by subject, preserving first-appearance order.
  std::vector<std::string> id_order;
  std::map<std::string, std::vector<std::vector<std::string>>> rows_by_id;
  std::map<std::string, int> last_lineno;
  int lineno = 1;
  std::string last_id;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::strip(line).empty()) continue;
    auto fields = parse_csv_row(line);
    if (fields.size() != header.size())
      row_error(path, lineno, "expected " + std::to_string(header.size()) +
                                  " fields, got " + std::to_string(fields.size()));
    const std::string id = fields[col_index["id"]];
    if (id.empty()) row_error(path, lineno, "empty subject id");
    if (!rows_by_id.count(id)) {
      id_order.push_back(id);
    } else if (id != last_id) {
      row_error(path, lineno, "rows for subject '" + id +
                                  "' are not contiguous (file must be grouped "
                                  "by subject)");
    }
    fields.push_back(std::to_string(lineno));  // keep provenance with the row
    rows_by_id[id].push_back(std::move(fields));
    last_id = id;
  }
  if (id_order.size() < 2)
    throw ValidationError(path + ": a panel needs at least 2 subjects");

  // Determine the horizon from the first subject.
  const int horizon = static_cast<int>(rows_by_id[id_order.front()].size());

  std::vector<Trajectory> trajectories;
  trajectories.reserve(id_order.size());
  for (const auto& id : id_order) {
    auto& rows = rows_by_id[id];
    // Sort by t within subject.
    std::vector<std::pair<int, std::size_t>> order;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      long long tv = 0;
      const int row_line = std::stoi(rows[r].back());
      if (!text::parse_long(rows[r][col_index["t"]], tv) || tv < 1)
        row_error(path, row_line, "column 't' must be a 1-based integer");
      order.emplace_back(static_cast<int>(tv), r);
    }
    std::sort(order.begin(), order.end());
    if (static_cast<int>(rows.size()) != horizon)
      row_error(path, std::stoi(rows.front().back()),
                "subject '" + id + "' has " + std::to_string(rows.size()) +
                    " rows but subject '" + id_order.front() + "' has " +
                    std::to_string(horizon));
    Trajectory tr;
    tr.covariates.resize(static_cast<std::size_t>(horizon));
    tr.treatments.resize(static_cast<std::size_t>(horizon));
    bool outcome_seen = false;
    for (int t = 1; t <= horizon; ++t) {
      const auto& [tv, r] = order[static_cast<std::size_t>(t - 1)];
      const auto& row = rows[r];
      const int row_line = std::stoi(row.back());
      if (tv != t)
        row_error(path, row_line, "subject '" + id + "' is missing a row for t=" +
                                      std::to_string(t));
      long long av = 0;
      if (!text::parse_long(row[col_index["a"]], av) || (av != 0 && av != 1))
        row_error(path, row_line, "treatment column 'a' must be 0 or 1, got '" +
                                      row[col_index["a"]] + "'");
      tr.treatments[static_cast<std::size_t>(t - 1)] = static_cast<int>(av);

      const std::string& ystr = row[col_index["y"]];
      if (t == horizon) {
        double yv = 0.0;
        if (!text::parse_double(ystr, yv) || !std::isfinite(yv))
          row_error(path, row_line,
                    "missing or non-numeric outcome 'y' on the final-time row");
        tr.outcome = yv;
        outcome_seen = true;
      } else if (!ystr.empty()) {
        // The outcome is a single end-of-study value; intermediate outcome
        // entries are rejected rather than silently dropped.
        row_error(path, row_line,
                  "outcome value on a non-final row (t=" + std::to_string(t) +
                      " of " + std::to_string(horizon) + "); leave 'y' empty");
      }

      const auto& cols = schema.columns_for(t);
      auto& x = tr.covariates[static_cast<std::size_t>(t - 1)];
      x.reserve(cols.size());
      for (const auto& c : cols) {
        auto it = col_index.find(c);
        if (it == col_index.end())
          throw ValidationError(path + ": schema covariate column '" + c +
                                "' not present in the file header");
        double v = 0.0;
        if (!text::parse_double(row[it->second], v) || !std::isfinite(v))
          row_error(path, row_line, "non-numeric covariate '" + c + "'");
        x.push_back(v);
      }
    }
    if (!outcome_seen)
      row_error(path, std::stoi(rows.front().back()),
                "subject '" + id + "' has no outcome row");
    trajectories.push_back(std::move(tr));
  }
  return PanelDataset::from_trajectories(std::move(trajectories), id_order);
}

void write_long_csv(const PanelDataset& data, const CsvSchema& schema,
                    const std::string& path) {
  // The union of per-timepoint columns forms the header; columns a timepoint
  // does not use are left empty.
  std::vector<std::string> all_cols;
  for (int t = 1; t <= data.horizon(); ++t)
    for (const auto& c : schema.columns_for(t))
      if (std::find(all_cols.begin(), all_cols.end(), c) == all_cols.end())
        all_cols.push_back(c);

  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write panel file: " + path);
  out << "id,t,a,y";
  for (const auto& c : all_cols) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Trajectory& tr = data.subject(i);
    for (int t = 1; t <= data.horizon(); ++t) {
      out << data.id(i) << ',' << t << ','
          << tr.treatments[static_cast<std::size_t>(t - 1)] << ',';
      if (t == data.horizon()) out << text::format_double(tr.outcome);
      const auto& cols = schema.columns_for(t);
      const auto& x = tr.covariates[static_cast<std::size_t>(t - 1)];
      if (cols.size() != x.size())
        throw ValidationError("schema lists " + std::to_string(cols.size()) +
                              " covariates at t=" + std::to_string(t) +
                              " but the dataset has " + std::to_string(x.size()));
      for (const auto& c : all_cols) {
        out << ',';
        auto it = std::find(cols.begin(), cols.end(), c);
        if (it != cols.end())
          out << text::format_double(x[static_cast<std::size_t>(it - cols.begin())]);
      }
      out << '\n';
    }
  }
}

void write_wide_csv(const PanelDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write panel file: " + path);
  out << "id";
  for (int t = 1; t <= data.horizon(); ++t) {
    for (int j = 0; j < data.covariate_dims()[static_cast<std::size_t>(t - 1)]; ++j)
      out << ",x" << t << "_" << (j + 1);
    out << ",a" << t;
  }
  out << ",y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Trajectory& tr = data.subject(i);
    out << data.id(i);
    for (int t = 1; t <= data.horizon(); ++t) {
      for (double v : tr.covariates[static_cast<std::size_t>(t - 1)])
        out << ',' << text::format_double(v);
      out << ',' << tr.treatments[static_cast<std::size_t>(t - 1)];
    }
    out << ',' << text::format_double(tr.outcome) << '\n';
  }
}

}  // namespace flip
