#include <cmath>

#include "flip/simharness.hpp"
#include "flip/util/quadrature.hpp"
#include "flip/util/rng.hpp"

namespace flip::sim {

double dgp_propensity(double x, double floor) {
  double p = (x >= 0.1 && x <= 0.9) ? (x - 0.1) / 0.8 : 0.0;
  if (floor > 0.0) p = std::min(1.0 - floor, std::max(floor, p));
  return p;
}

double dgp_outcome_mean(double x1, int a1, int a2) {
  const double x2 = 0.5 * (x1 + a1);
  return x1 + x2 + a1 + a2;
}

DgpData generate_dgp(std::size_t n, std::uint64_t seed, const DgpConfig& cfg) {
  if (n < 1) throw ValidationError("need at least one observation");
  DgpData out;
  out.pi1.resize(n);
  out.pi2.resize(n);
  std::vector<Trajectory> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rng::Stream stream(rng::derive_seed(seed, {0x64677064ull, i}));
    Trajectory& tr = rows[i];
    const double x1 = stream.uniform();
    const double p1 = dgp_propensity(x1, cfg.floor);
    const int a1 = stream.bernoulli(p1) ? 1 : 0;
    const double x2 = 0.5 * (x1 + a1);
    const double p2 = dgp_propensity(x2, cfg.floor);
    const int a2 = stream.bernoulli(p2) ? 1 : 0;
    tr.covariates = {{x1}, {x2}};
    tr.treatments = {a1, a2};
    tr.outcome = x1 + x2 + a1 + a2 + stream.gaussian();
    out.pi1[i] = p1;
    out.pi2[i] = p2;
  }
  out.panel = PanelDataset::from_trajectories(std::move(rows));
  return out;
}

namespace {

std::vector<double> dgp_splits(double floor) {
  std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  if (floor > 0.0) {
    const double lo = 0.1 + 0.8 * floor;
    const double hi = 0.9 - 0.8 * floor;
    for (double v : {lo, hi, 2.0 * lo, 2.0 * lo - 1.0, 2.0 * hi, 2.0 * hi - 1.0})
      if (v > 0.0 && v < 1.0) s.push_back(v);
  }
  return s;
}

// Q(b | target a, natural target-arm probability from p1).
double q_of(int b, int a_t, double p1, const SmoothWeight& w) {
  const double pa = (a_t == 1) ? p1 : 1.0 - p1;
  const double q_target = pa + weight_value(w, pa) * (1.0 - pa);
  return (b == a_t) ? q_target : 1.0 - q_target;
}

}  // namespace

double true_psi_dgp(const TargetRegime& regime, const SmoothWeight& weight,
                    double floor, double abs_tol) {
  if (regime.horizon() != 2)
    throw ValidationError("the benchmark process has horizon 2");
  const auto integrand = [&](double x1) {
    double acc = 0.0;
    const double p1 = dgp_propensity(x1, floor);
    for (int b1 = 0; b1 <= 1; ++b1) {
      const double q1 = q_of(b1, regime.arm(1), p1, weight);
      if (q1 == 0.0) continue;
      const double x2 = 0.5 * (x1 + b1);
      const double p2 = dgp_propensity(x2, floor);
      // Inner sum over b2 of Q2(b2) (x1+x2+b1+b2) collapses to the mean with
      // the arm-1 intervention propensity added once.
      const double q2_arm1 = q_of(1, regime.arm(2), p2, weight);
      acc += q1 * (x1 + x2 + b1 + q2_arm1);
    }
    return acc;
  };
  return quadrature::integrate(integrand, 0.0, 1.0, abs_tol, dgp_splits(floor));
}

double true_treatment_mean_dgp(const TargetRegime& regime,
                               const SmoothWeight& weight, int t_star,
                               double floor, double abs_tol) {
  if (regime.horizon() != 2)
    throw ValidationError("the benchmark process has horizon 2");
  if (t_star == 1) {
    const auto integrand = [&](double x1) {
      return q_of(1, regime.arm(1), dgp_propensity(x1, floor), weight);
    };
    return quadrature::integrate(integrand, 0.0, 1.0, abs_tol, dgp_splits(floor));
  }
  if (t_star != 2) throw ValidationError("t_star out of range");
  const auto integrand = [&](double x1) {
    double acc = 0.0;
    const double p1 = dgp_propensity(x1, floor);
    for (int b1 = 0; b1 <= 1; ++b1) {
      const double q1 = q_of(b1, regime.arm(1), p1, weight);
      if (q1 == 0.0) continue;
      const double p2 = dgp_propensity(0.5 * (x1 + b1), floor);
      acc += q1 * q_of(1, regime.arm(2), p2, weight);
    }
    return acc;
  };
  return quadrature::integrate(integrand, 0.0, 1.0, abs_tol, dgp_splits(floor));
}

}  // namespace flip::sim
