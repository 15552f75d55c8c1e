#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flip/estimators.hpp"
#include "flip/nuisance.hpp"
#include "flip/panel.hpp"
#include "flip/weights.hpp"

namespace flip::sim {

// Two-timepoint benchmark process:
//   X1 ~ Unif(0,1)
//   P(A1=1|X1) = 1(0.1 <= X1 <= 0.9) (X1-0.1)/0.8
//   X2 = (X1+A1)/2
//   P(A2=1|H2) = same ramp in X2
//   Y  = X1+X2+A1+A2 + N(0,1)
// The ramp is exactly zero outside [0.1, 0.9]: positivity violations are
// built in. `floor` > 0 clamps the ramp into [floor, 1-floor] (a repaired
// variant used by identification checks).
struct DgpConfig {
  double floor = 0.0;
};

double dgp_propensity(double x, double floor = 0.0);
double dgp_outcome_mean(double x1, int a1, int a2);

struct DgpData {
  PanelDataset panel;
  // True propensities at the observed histories, for the corruption backend.
  std::vector<double> pi1;
  std::vector<double> pi2;
};
DgpData generate_dgp(std::size_t n, std::uint64_t seed, const DgpConfig& cfg = {});

// Truth by one-dimensional adaptive quadrature over X1 (absolute tolerance
// 1e-8); X2 is deterministic and the outcome mean is closed-form.
double true_psi_dgp(const TargetRegime& regime, const SmoothWeight& weight,
                    double floor = 0.0, double abs_tol = 1e-8);
double true_treatment_mean_dgp(const TargetRegime& regime,
                               const SmoothWeight& weight, int t_star,
                               double floor = 0.0, double abs_tol = 1e-8);

struct ExperimentConfig {
  std::vector<std::size_t> sample_sizes{1000, 5000, 20000};
  std::vector<double> alpha_pi{0.1, 0.25, 0.5};
  std::vector<double> alpha_m{0.1, 0.25, 0.5};
  int reps = 250;
  SmoothWeight weight{WeightKind::smooth_trim, 10.0};
  TargetRegime regime_a = TargetRegime::parse("11");
  TargetRegime regime_b = TargetRegime::parse("00");
  bool difference = true;  // difference of the two regimes vs regime_a alone
  EstimatorKind estimator = EstimatorKind::sdr;
  std::uint64_t seed = 1;
  double level = 0.95;
  double prob_lo = 0.001;  // clip bounds for corrupted propensities
  double prob_hi = 0.999;
  unsigned threads = 0;  // 0 = hardware concurrency

  static ExperimentConfig load(const std::string& path);
  std::string describe() const;
};

struct CoverageCell {
  double alpha_pi = 0.0;
  double alpha_m = 0.0;
  std::size_t n = 0;
  int reps = 0;
  double coverage = 0.0;
  double coverage_se = 0.0;
  double mean_bias = 0.0;
  double mean_abs_bias = 0.0;
  double mean_ci_width = 0.0;
  int failures = 0;
};

struct Replication {
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool covered = false;
  bool failed = false;
  std::string failure;
};

// One synthetic-nuisance replication: draw a dataset, corrupt the true
// nuisances at the prescribed rates, run the estimator, check the interval
// against `truth`.
Replication run_replication(const ExperimentConfig& cfg, std::size_t n,
                            double alpha_pi, double alpha_m, double truth,
                            std::uint64_t rep_seed);

// The coverage target implied by the config (difference or single regime).
double config_truth(const ExperimentConfig& cfg);

// Full grid; cells and replications are scheduled on a worker pool but the
// output is deterministic given the seed, regardless of worker count.
std::vector<CoverageCell> run_coverage_grid(const ExperimentConfig& cfg);

void write_coverage_csv(const std::vector<CoverageCell>& cells,
                        const std::string& path);
// Plot-ready long format: one row per (rate-row, rate-column, n) facet point.
void write_coverage_long_csv(const std::vector<CoverageCell>& cells,
                             const std::string& path);

}  // namespace flip::sim
