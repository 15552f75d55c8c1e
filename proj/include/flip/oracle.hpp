#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "flip/nuisance.hpp"
#include "flip/panel.hpp"
#include "flip/weights.hpp"

namespace flip::oracle {

// Tabular finite-support structural model over scalar time-varying
// covariates. Row indices are chronological mixed-radix codes:
//   after x_t:  r_a(t) = r_b(t-1) * |X_t| + index(x_t)
//   after a_t:  r_b(t) = r_a(t) * 2 + a_t
// with r_b(0) = 0. Probability zeros are allowed everywhere; positivity
// violations are the point.
class DiscreteWorld {
 public:
  int horizon = 0;
  double noise_sd = 0.0;
  std::vector<std::vector<double>> supports;  // [t-1] -> support values of X_t
  std::vector<double> x1_dist;
  // transitions[t-2], t = 2..T: row r_b(t-1), entries over supports[t-1].
  std::vector<std::vector<std::vector<double>>> transitions;
  // propensities[t-1], t = 1..T: P(A_t = 1 | h) per row r_a(t).
  std::vector<std::vector<double>> propensities;
  // outcome_mean: E[Y | h] per row r_b(T).
  std::vector<double> outcome_mean;

  static DiscreteWorld load(const std::string& path);
  static DiscreteWorld parse_text(const std::string& content,
                                  const std::string& origin);
  void validate() const;

  std::size_t support_size(int t) const {
    return supports[static_cast<std::size_t>(t - 1)].size();
  }
  // Number of terms in the full g-formula enumeration.
  double term_count() const;
  int support_index(int t, double value) const;
};

// Weight catalog for exact computations. Extends the smooth catalog with the
// non-smooth hard-trimming indicator and matching-style min weight, which the
// estimation path excludes.
struct OracleWeight {
  enum class Kind { smooth, hard_trim, matching };
  Kind kind = Kind::smooth;
  SmoothWeight smooth{};
  double trim_eps = 0.1;

  double value(double p) const;
  bool condition1() const;  // f(p=0) == 0 analytically
  std::string name() const;

  static OracleWeight wrap(const SmoothWeight& w) { return {Kind::smooth, w, 0.0}; }
  static OracleWeight hard_trim(double eps);
  static OracleWeight matching() { return {Kind::matching, {}, 0.0}; }
  // Smooth names plus trim:eps and matching.
  static OracleWeight parse(std::string_view text);
};

inline constexpr std::size_t kDefaultTermBudget = 1'000'000;

// Full g-formula enumeration of E[Y{D(regime)}], interleaving intervention
// propensities with covariate transitions. Throws IdentificationError when a
// positive-probability branch conditions on a zero-probability arm.
double exact_psi(const DiscreteWorld& world, const TargetRegime& regime,
                 const OracleWeight& weight,
                 std::size_t term_budget = kDefaultTermBudget);

// Same value through the backward sequential-regression recursion; kept as an
// independent algebraic route for cross-checks.
double exact_psi_sequential(const DiscreteWorld& world,
                            const TargetRegime& regime,
                            const OracleWeight& weight,
                            std::size_t term_budget = kDefaultTermBudget);

// E{D_{f_t}(a_t)} at t = t_star.
double exact_treatment_mean(const DiscreteWorld& world,
                            const TargetRegime& regime,
                            const OracleWeight& weight, int t_star,
                            std::size_t term_budget = kDefaultTermBudget);

// Exact sequential regressions m_t(b, h) for every history row, plus the
// implied psi = m_0. Backs the exact-nuisance path.
struct ExactNuisanceTables {
  // m[t-1][ r_a(t)*2 + b ]
  std::vector<std::vector<double>> m;
  double psi = 0.0;
};
ExactNuisanceTables exact_sequential_regressions(
    const DiscreteWorld& world, const TargetRegime& regime,
    const OracleWeight& weight, std::size_t term_budget = kDefaultTermBudget);

// Same backward recursion for the treatment-mean functional: the terminal
// layer is pinned to m_{t*}(b, .) = b and psi = E{D_{f_{t*}}(a_{t*})}.
ExactNuisanceTables exact_sequential_regressions_tm(
    const DiscreteWorld& world, const TargetRegime& regime,
    const OracleWeight& weight, int t_star,
    std::size_t term_budget = kDefaultTermBudget);

struct FlipDraw {
  double y = 0.0;
  std::vector<int> d;
};

enum class FlipMode {
  natural,     // case split on the natural value of treatment
  stochastic,  // amendment that only uses the natural propensity score
};

// Direct mechanism simulation of the flip intervention.
std::vector<FlipDraw> simulate_flip(const DiscreteWorld& world,
                                    const TargetRegime& regime,
                                    const OracleWeight& weight, std::size_t n,
                                    std::uint64_t seed,
                                    FlipMode mode = FlipMode::natural);

// Draws from the observational law of the world.
PanelDataset sample_observational(const DiscreteWorld& world, std::size_t n,
                                  std::uint64_t seed);

// Exact joint law of the intervened treatment path.
std::map<std::vector<int>, double> exact_intervention_distribution(
    const DiscreteWorld& world, const TargetRegime& regime,
    const OracleWeight& weight);

// Single-timepoint check: interventional flip effect computed through the
// intervention mechanism vs the weighted average treatment effect formula.
struct WatePair {
  double interventional = 0.0;
  double wate = 0.0;
};
WatePair exact_wate_single(const DiscreteWorld& world, const OracleWeight& weight);

// The exact flip-effect ratio between two regimes (difference of means over
// the mean absolute per-timepoint treatment change).
struct FlipRatio {
  double numerator = 0.0;
  std::vector<double> delta_t;
  double denominator = 0.0;
  double ratio = 0.0;
};
FlipRatio exact_flip_ratio(const DiscreteWorld& world, const TargetRegime& a,
                           const TargetRegime& a_prime,
                           const OracleWeight& weight,
                           std::size_t term_budget = kDefaultTermBudget);

// True when outcome means and covariate transitions are treatment-inert, so
// all potential outcomes coincide.
bool treatment_inert(const DiscreteWorld& world);

struct SharpNullResult {
  FlipRatio value;
  bool inert = false;
  bool certified = false;  // inert and |ratio| <= tol
};
// Computes the exact ratio; when the world is treatment-inert, asserts it is
// zero within tol. Throws if the denominator vanishes.
SharpNullResult sharp_null_certify(const DiscreteWorld& world,
                                   const TargetRegime& a,
                                   const TargetRegime& a_prime,
                                   const OracleWeight& weight,
                                   double tol = 1e-12,
                                   std::size_t term_budget = kDefaultTermBudget);

// Exact NuisanceSet (true propensities, intervention propensities, ratios and
// sequential regressions) for sampled-from-world data.
NuisanceSet exact_nuisances(const DiscreteWorld& world, const PanelDataset& data,
                            const TargetRegime& regime, const SmoothWeight& weight);
// Treatment-mean flavor: horizon t_star, pinned terminal regressions.
NuisanceSet exact_nuisances_tm(const DiscreteWorld& world, const PanelDataset& data,
                               const TargetRegime& regime,
                               const SmoothWeight& weight, int t_star);

// Every positive-probability observational path as one trajectory with its
// probability; outcomes carry the conditional mean. Feeding these with their
// probabilities into the estimator combiners replaces sampling by full
// enumeration.
struct ObservationalEnumeration {
  PanelDataset panel;
  std::vector<double> probability;
};
ObservationalEnumeration enumerate_observational(const DiscreteWorld& world);

}  // namespace flip::oracle
