#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace flip {

// One subject's record: covariates X_1..X_T (dimension may vary by t),
// binary treatments A_1..A_T, and a single end-of-study outcome Y.
struct Trajectory {
  std::vector<std::vector<double>> covariates;
  std::vector<int> treatments;
  double outcome = 0.0;
};

class PanelDataset {
 public:
  // Validates the shared horizon / per-timepoint dimensions / binary
  // treatments and finite values. Subject ids default to their index.
  static PanelDataset from_trajectories(std::vector<Trajectory> trajectories,
                                        std::vector<std::string> ids = {});

  int horizon() const { return horizon_; }
  std::size_t size() const { return trajectories_.size(); }
  const std::vector<int>& covariate_dims() const { return covariate_dims_; }
  const Trajectory& subject(std::size_t i) const { return trajectories_.at(i); }
  const std::string& id(std::size_t i) const { return ids_.at(i); }

  int treatment(std::size_t i, int t) const {
    return trajectories_[i].treatments[static_cast<std::size_t>(t - 1)];
  }
  double outcome(std::size_t i) const { return trajectories_[i].outcome; }

  // Returns a copy with c added to every outcome (test/diagnostic helper).
  PanelDataset with_outcome_shift(double c) const;

 private:
  std::vector<Trajectory> trajectories_;
  std::vector<std::string> ids_;
  std::vector<int> covariate_dims_;
  int horizon_ = 0;
};

// Flattened feature vector for H_t = (X_1, ..., X_t, A_1, ..., A_{t-1}),
// covariates first in time order, then prior treatments in time order.
struct HistoryView {
  std::size_t subject = 0;
  int t = 0;
  std::vector<double> features;
};

HistoryView history(const PanelDataset& data, std::size_t i, int t);
std::size_t history_length(const PanelDataset& data, int t);

struct FoldAssignment {
  std::vector<int> labels;  // n entries in {0..k-1}
  int k = 2;
  std::uint64_t seed = 0;

  std::vector<std::size_t> members(int fold) const;
};

// Deterministic permutation-based assignment; fold sizes differ by at most 1.
FoldAssignment assign_folds(std::size_t n, int k, std::uint64_t seed);

// Column mapping for the long CSV format. Fixed columns are `id`, `t`
// (1-based), `a` (0/1) and `y` (required on the final-time row only);
// covariate columns are listed in the schema:
//   covariates     = x1,x2         (applies to every timepoint)
//   covariates[3]  = x1            (optional per-timepoint override)
class CsvSchema {
 public:
  static CsvSchema load(const std::string& path);
  static CsvSchema from_columns(std::vector<std::string> columns);

  const std::vector<std::string>& columns_for(int t) const;
  bool has_override(int t) const { return overrides_.count(t) > 0; }

 private:
  std::vector<std::string> default_columns_;
  std::map<int, std::vector<std::string>> overrides_;
};

PanelDataset load_long_csv(const std::string& path, const CsvSchema& schema);
void write_long_csv(const PanelDataset& data, const CsvSchema& schema,
                    const std::string& path);
// One row per subject; debugging aid.
void write_wide_csv(const PanelDataset& data, const std::string& path);

}  // namespace flip
