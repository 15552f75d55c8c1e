#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flip/nuisance.hpp"
#include "flip/panel.hpp"
#include "flip/weights.hpp"

namespace flip {

enum class EstimatorKind { mr, sdr, ipw };
EstimatorKind parse_estimator(std::string_view text);
std::string estimator_name(EstimatorKind kind);

struct EstimatorOptions {
  BackendConfig backend{};
  int folds = 2;
  double clip = 0.01;
  double level = 0.95;
  std::uint64_t seed = 1;
  // Weights failing the s(0)=0 identification condition are rejected unless
  // the caller asserts target-arm positivity.
  bool assume_positivity = false;
  // Guard for the nondifferentiable |.| in the flip-effect denominator.
  double tau_den = 1e-3;
};

struct EstimateReport {
  double psi_hat = 0.0;
  double sigma2_hat = 0.0;
  std::size_t n_eval = 0;
  double level = 0.95;
  double ci_low = 0.0;
  double ci_high = 0.0;
  // Uncentered per-observation values whose average recovers psi_hat
  // (rotation by rotation); feeds the delta-method combiner and audit CSVs.
  std::vector<double> influence;
  std::vector<std::string> notes;
};

// phi_t(b; A, H): the influence adjustment from estimating the intervention
// propensity, evaluated at the estimated target-arm propensity.
double phi_t(int b, int a_t, int a_obs, double pi_hat_target,
             const SmoothWeight& weight);

// Uncentered EIF of the mean potential outcome, for one observation, from a
// complete NuisanceSet (uses ns.m0_plugin for the t=0 term).
double eif_value(std::size_t i, const PanelDataset& data, const NuisanceSet& ns,
                 const TargetRegime& regime, const SmoothWeight& weight);

// Debiased pseudo-outcomes P*_t for every observation, from nuisances at
// timepoints >= t.
std::vector<double> debiased_pseudo_outcome(int t, const PanelDataset& data,
                                            const NuisanceSet& ns,
                                            const TargetRegime& regime,
                                            const SmoothWeight& weight);

// Combiners on a fixed NuisanceSet (exact oracle values or synthetic
// corruptions): no fitting, every observation is evaluation data. `probs`
// switches the empirical mean to an enumeration-weighted mean.
EstimateReport mr_combine(const PanelDataset& data, NuisanceSet& ns,
                          const TargetRegime& regime, const SmoothWeight& weight,
                          double level, const std::vector<double>* probs = nullptr);
EstimateReport sdr_combine(const PanelDataset& data, NuisanceSet& ns,
                           const TargetRegime& regime, const SmoothWeight& weight,
                           double level, const std::vector<double>* probs = nullptr);
// Treatment-mean combiners; ns must carry the pinned terminal regressions
// m_{t*}(b, .) = b and horizon t_star.
EstimateReport treatment_mean_mr_combine(const PanelDataset& data, NuisanceSet& ns,
                                         const TargetRegime& regime,
                                         const SmoothWeight& weight, int t_star,
                                         double level,
                                         const std::vector<double>* probs = nullptr);
EstimateReport treatment_mean_sdr_combine(const PanelDataset& data, NuisanceSet& ns,
                                          const TargetRegime& regime,
                                          const SmoothWeight& weight, int t_star,
                                          double level,
                                          const std::vector<double>* probs = nullptr);

// Full cross-fitted pipelines (fold-rotation averaged).
EstimateReport mr_estimate(const PanelDataset& data, const TargetRegime& regime,
                           const SmoothWeight& weight, const EstimatorOptions& opts);
EstimateReport sdr_estimate(const PanelDataset& data, const TargetRegime& regime,
                            const SmoothWeight& weight, const EstimatorOptions& opts);
EstimateReport ipw_estimate(const PanelDataset& data, const TargetRegime& regime,
                            const SmoothWeight& weight, const EstimatorOptions& opts);
EstimateReport treatment_mean_mr(const PanelDataset& data, const TargetRegime& regime,
                                 const SmoothWeight& weight, int t_star,
                                 const EstimatorOptions& opts);
EstimateReport treatment_mean_sdr(const PanelDataset& data, const TargetRegime& regime,
                                  const SmoothWeight& weight, int t_star,
                                  const EstimatorOptions& opts);

struct FlipEffectReport {
  EstimateReport psi_a;        // mean outcome under the first regime
  EstimateReport psi_a_prime;  // under the second
  double numerator = 0.0;
  double numerator_se = 0.0;
  double numerator_ci_low = 0.0;
  double numerator_ci_high = 0.0;
  std::vector<double> delta_t;     // per-timepoint treatment-mean differences
  std::vector<double> delta_t_se;
  double denominator = 0.0;  // (1/T) sum |delta_t|
  double ratio = 0.0;
  double ratio_se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
  std::size_t n = 0;
  std::vector<double> ratio_influence;
  std::vector<std::string> warnings;
};

// The standardized contrast of two flip interventions, with a delta-method
// interval for the ratio. `kind` selects the estimator for numerator and
// treatment means alike (ipw is a diagnostic with no EIF correction).
FlipEffectReport flip_effect(const PanelDataset& data, const TargetRegime& regime_a,
                             const TargetRegime& regime_a_prime,
                             const SmoothWeight& weight,
                             const EstimatorOptions& opts, EstimatorKind kind);

}  // namespace flip
