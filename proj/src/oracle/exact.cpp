#include <algorithm>
#include <cmath>
#include <functional>

#include "flip/oracle.hpp"
#include "flip/util/error.hpp"
#include "flip/util/rng.hpp"
#include "flip/util/text.hpp"

namespace flip::oracle {

namespace {

struct QPair {
  double q0 = 0.0;
  double q1 = 0.0;
};

// Intervention propensities at a history with P(A=1|h) = p1, targeting a_t.
QPair intervention_q(double p1, int a_t, const OracleWeight& weight) {
  const double pa = (a_t == 1) ? p1 : 1.0 - p1;
  const double f = weight.value(pa);
  const double q_target = pa + f * (1.0 - pa);
  QPair q;
  if (a_t == 1) {
    q.q1 = q_target;
    q.q0 = 1.0 - q_target;
  } else {
    q.q0 = q_target;
    q.q1 = 1.0 - q_target;
  }
  return q;
}

void check_budget(const DiscreteWorld& world, std::size_t budget) {
  if (world.term_count() > static_cast<double>(budget))
    throw Error("world enumeration needs " +
                text::format_double(world.term_count()) +
                " terms, above the budget of " + std::to_string(budget) +
                " (raise --state-budget if this is intentional)");
}

std::string describe_history(const DiscreteWorld& world,
                             const std::vector<int>& x_idx,
                             const std::vector<int>& b_path) {
  std::string s = "(";
  for (std::size_t t = 0; t < x_idx.size(); ++t) {
    if (t > 0) s += ", ";
    s += "x" + std::to_string(t + 1) + "=" +
         text::format_double(
             world.supports[t][static_cast<std::size_t>(x_idx[t])]);
    if (t < b_path.size())
      s += ", a" + std::to_string(t + 1) + "=" + std::to_string(b_path[t]);
  }
  return s + ")";
}

// Shared forward enumerator over the intervention measure
//   prod_t Q_t(b_t | h_t) dP(x_t | h_{t-1}).
// Visits every positive-probability path and calls leaf(w, r_b(T)) at the
// end; `stop_after` truncates the walk (used for treatment means).
class Enumerator {
 public:
  Enumerator(const DiscreteWorld& world, const TargetRegime& regime,
             const OracleWeight& weight)
      : world_(world), regime_(regime), weight_(weight) {}

  // leaf(weight, outcome_row)
  void run(const std::function<void(double, std::size_t)>& leaf) {
    leaf_ = &leaf;
    x_idx_.clear();
    b_path_.clear();
    walk_x(1, 0, 1.0);
  }

  // at_t(weight, p1_at_t_star) invoked at depth t_star, after x_{t*} is drawn
  // but before A_{t*}.
  void run_until(int t_star,
                 const std::function<void(double, double)>& at_t) {
    t_star_ = t_star;
    at_t_ = &at_t;
    x_idx_.clear();
    b_path_.clear();
    walk_x(1, 0, 1.0);
    t_star_ = 0;
    at_t_ = nullptr;
  }

 private:
  void walk_x(int t, std::size_t r_b_prev, double w) {
    const auto& sup = world_.supports[static_cast<std::size_t>(t - 1)];
    for (std::size_t xi = 0; xi < sup.size(); ++xi) {
      const double px =
          (t == 1) ? world_.x1_dist[xi]
                   : world_.transitions[static_cast<std::size_t>(t - 2)][r_b_prev][xi];
      if (px == 0.0) continue;
      const std::size_t r_a = r_b_prev * sup.size() + xi;
      x_idx_.push_back(static_cast<int>(xi));
      const double p1 = world_.propensities[static_cast<std::size_t>(t - 1)][r_a];
      if (t_star_ == t) {
        (*at_t_)(w * px, p1);
      } else {
        walk_a(t, r_a, p1, w * px);
      }
      x_idx_.pop_back();
    }
  }

  void walk_a(int t, std::size_t r_a, double p1, double w) {
    const QPair q = intervention_q(p1, regime_.arm(t), weight_);
    for (int b = 0; b <= 1; ++b) {
      const double qb = (b == 1) ? q.q1 : q.q0;
      if (qb == 0.0) continue;
      const double pb = (b == 1) ? p1 : 1.0 - p1;
      if (pb == 0.0) {
        // Positive intervention mass on an arm the observed law never takes:
        // the g-formula conditions on a null event and identification fails.
        throw IdentificationError(
            "identification violated at t=" + std::to_string(t) + ", history " +
            describe_history(world_, x_idx_, b_path_) + ": P(A=" +
            std::to_string(b) + "|h)=0 but Q=" + text::format_double(qb) +
            "; use a weight with s(0)=0 or repair positivity");
      }
      const std::size_t r_b = r_a * 2 + static_cast<std::size_t>(b);
      b_path_.push_back(b);
      if (t == world_.horizon) {
        (*leaf_)(w * qb, r_b);
      } else {
        walk_x(t + 1, r_b, w * qb);
      }
      b_path_.pop_back();
    }
  }

  const DiscreteWorld& world_;
  const TargetRegime& regime_;
  const OracleWeight& weight_;
  const std::function<void(double, std::size_t)>* leaf_ = nullptr;
  const std::function<void(double, double)>* at_t_ = nullptr;
  int t_star_ = 0;
  std::vector<int> x_idx_;
  std::vector<int> b_path_;
};

void require_regime(const DiscreteWorld& world, const TargetRegime& regime) {
  if (regime.horizon() != world.horizon)
    throw ValidationError("regime length " + std::to_string(regime.horizon()) +
                          " does not match world horizon " +
                          std::to_string(world.horizon));
}

}  // namespace

double exact_psi(const DiscreteWorld& world, const TargetRegime& regime,
                 const OracleWeight& weight, std::size_t term_budget) {
  require_regime(world, regime);
  check_budget(world, term_budget);
  double psi = 0.0;
  Enumerator en(world, regime, weight);
  en.run([&](double w, std::size_t row) { psi += w * world.outcome_mean[row]; });
  return psi;
}

namespace {

// Backward sequential-regression tables for either functional: R = T with the
// outcome table as the terminal layer, or R = t_star with m(b, .) = b pinned.
ExactNuisanceTables backward_tables(const DiscreteWorld& world,
                                    const TargetRegime& regime,
                                    const OracleWeight& weight, int R,
                                    bool outcome_terminal) {
  const int T = R;
  ExactNuisanceTables out;
  out.m.resize(static_cast<std::size_t>(T));

  if (outcome_terminal) {
    // m_T(b, h) = E[Y | A_T=b, h].
    out.m[static_cast<std::size_t>(T - 1)] = world.outcome_mean;
  } else {
    const std::size_t rows =
        world.propensities[static_cast<std::size_t>(T - 1)].size();
    auto& terminal = out.m[static_cast<std::size_t>(T - 1)];
    terminal.resize(rows * 2);
    for (std::size_t r = 0; r < rows; ++r) {
      terminal[r * 2] = 0.0;
      terminal[r * 2 + 1] = 1.0;
    }
  }

  // P_{t+1}(h_{t+1}) = sum_b m_{t+1}(b, h) Q_{t+1}(b | h), folded backward
  // through the transition kernels.
  for (int t = T - 1; t >= 0; --t) {
    const auto& m_next = out.m[static_cast<std::size_t>(t)];
    const auto& pi_next = world.propensities[static_cast<std::size_t>(t)];
    std::vector<double> p_next(pi_next.size());  // per r_a(t+1)
    for (std::size_t r = 0; r < pi_next.size(); ++r) {
      const QPair q = intervention_q(pi_next[r], regime.arm(t + 1), weight);
      p_next[r] = m_next[r * 2] * q.q0 + m_next[r * 2 + 1] * q.q1;
    }
    if (t == 0) {
      double psi = 0.0;
      for (std::size_t xi = 0; xi < world.x1_dist.size(); ++xi)
        psi += world.x1_dist[xi] * p_next[xi];
      out.psi = psi;
    } else {
      const auto& trans = world.transitions[static_cast<std::size_t>(t - 1)];
      auto& m_here = out.m[static_cast<std::size_t>(t - 1)];
      m_here.assign(trans.size(), 0.0);  // one entry per r_b(t) = r_a(t)*2+b
      const std::size_t width = world.support_size(t + 1);
      for (std::size_t rb = 0; rb < trans.size(); ++rb) {
        double acc = 0.0;
        for (std::size_t xi = 0; xi < width; ++xi)
          acc += trans[rb][xi] * p_next[rb * width + xi];
        m_here[rb] = acc;
      }
    }
  }
  return out;
}

}  // namespace

ExactNuisanceTables exact_sequential_regressions(const DiscreteWorld& world,
                                                 const TargetRegime& regime,
                                                 const OracleWeight& weight,
                                                 std::size_t term_budget) {
  require_regime(world, regime);
  check_budget(world, term_budget);
  return backward_tables(world, regime, weight, world.horizon, true);
}

ExactNuisanceTables exact_sequential_regressions_tm(const DiscreteWorld& world,
                                                    const TargetRegime& regime,
                                                    const OracleWeight& weight,
                                                    int t_star,
                                                    std::size_t term_budget) {
  require_regime(world, regime);
  if (t_star < 1 || t_star > world.horizon)
    throw ValidationError("t_star out of range");
  check_budget(world, term_budget);
  return backward_tables(world, regime, weight, t_star, false);
}

double exact_psi_sequential(const DiscreteWorld& world,
                            const TargetRegime& regime,
                            const OracleWeight& weight,
                            std::size_t term_budget) {
  return exact_sequential_regressions(world, regime, weight, term_budget).psi;
}

double exact_treatment_mean(const DiscreteWorld& world,
                            const TargetRegime& regime,
                            const OracleWeight& weight, int t_star,
                            std::size_t term_budget) {
  require_regime(world, regime);
  if (t_star < 1 || t_star > world.horizon)
    throw ValidationError("t_star out of range");
  check_budget(world, term_budget);
  double mean = 0.0;
  Enumerator en(world, regime, weight);
  en.run_until(t_star, [&](double w, double p1) {
    const QPair q = intervention_q(p1, regime.arm(t_star), weight);
    mean += w * q.q1;
  });
  return mean;
}

std::vector<FlipDraw> simulate_flip(const DiscreteWorld& world,
                                    const TargetRegime& regime,
                                    const OracleWeight& weight, std::size_t n,
                                    std::uint64_t seed, FlipMode mode) {
  require_regime(world, regime);
  if (n < 1) throw ValidationError("need at least one draw");
  std::vector<FlipDraw> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Per-draw streams keep the output independent of any chunking.
    rng::Stream stream(rng::derive_seed(seed, {0x73696d66ull, i}));
    std::size_t r_b = 0;
    FlipDraw& draw = out[i];
    draw.d.resize(static_cast<std::size_t>(world.horizon));
    for (int t = 1; t <= world.horizon; ++t) {
      const auto& sup = world.supports[static_cast<std::size_t>(t - 1)];
      // Sample X_t at the post-intervention history.
      const double ux = stream.uniform();
      double cum = 0.0;
      std::size_t xi = sup.size() - 1;
      for (std::size_t j = 0; j < sup.size(); ++j) {
        cum += (t == 1)
                   ? world.x1_dist[j]
                   : world.transitions[static_cast<std::size_t>(t - 2)][r_b][j];
        if (ux < cum) {
          xi = j;
          break;
        }
      }
      const std::size_t r_a = r_b * sup.size() + xi;
      const double p1 = world.propensities[static_cast<std::size_t>(t - 1)][r_a];
      const int a_t = regime.arm(t);
      const double pa = (a_t == 1) ? p1 : 1.0 - p1;
      int d = 0;
      if (mode == FlipMode::natural) {
        const int natural = stream.bernoulli(p1) ? 1 : 0;
        if (natural == a_t) {
          d = natural;
        } else {
          const double f = weight.value(pa);
          d = (stream.uniform() <= f) ? a_t : natural;
        }
      } else {
        // Stochastic amendment: draw directly from the intervention
        // propensity, no dependence on the natural value of treatment.
        const double f = weight.value(pa);
        const double q1 = (a_t == 1) ? f + (1.0 - f) * p1 : (1.0 - f) * p1;
        d = stream.bernoulli(q1) ? 1 : 0;
      }
      draw.d[static_cast<std::size_t>(t - 1)] = d;
      r_b = r_a * 2 + static_cast<std::size_t>(d);
    }
    draw.y = world.outcome_mean[r_b] +
             (world.noise_sd > 0.0 ? world.noise_sd * stream.gaussian() : 0.0);
  }
  return out;
}

PanelDataset sample_observational(const DiscreteWorld& world, std::size_t n,
                                  std::uint64_t seed) {
  std::vector<Trajectory> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rng::Stream stream(rng::derive_seed(seed, {0x6f627376ull, i}));
    std::size_t r_b = 0;
    Trajectory& tr = rows[i];
    tr.covariates.resize(static_cast<std::size_t>(world.horizon));
    tr.treatments.resize(static_cast<std::size_t>(world.horizon));
    for (int t = 1; t <= world.horizon; ++t) {
      const auto& sup = world.supports[static_cast<std::size_t>(t - 1)];
      const double ux = stream.uniform();
      double cum = 0.0;
      std::size_t xi = sup.size() - 1;
      for (std::size_t j = 0; j < sup.size(); ++j) {
        cum += (t == 1)
                   ? world.x1_dist[j]
                   : world.transitions[static_cast<std::size_t>(t - 2)][r_b][j];
        if (ux < cum) {
          xi = j;
          break;
        }
      }
      const std::size_t r_a = r_b * sup.size() + xi;
      const double p1 = world.propensities[static_cast<std::size_t>(t - 1)][r_a];
      const int a = stream.bernoulli(p1) ? 1 : 0;
      tr.covariates[static_cast<std::size_t>(t - 1)] = {sup[xi]};
      tr.treatments[static_cast<std::size_t>(t - 1)] = a;
      r_b = r_a * 2 + static_cast<std::size_t>(a);
    }
    tr.outcome = world.outcome_mean[r_b] +
                 (world.noise_sd > 0.0 ? world.noise_sd * stream.gaussian() : 0.0);
  }
  return PanelDataset::from_trajectories(std::move(rows));
}

std::map<std::vector<int>, double> exact_intervention_distribution(
    const DiscreteWorld& world, const TargetRegime& regime,
    const OracleWeight& weight) {
  require_regime(world, regime);
  std::map<std::vector<int>, double> dist;
  Enumerator en(world, regime, weight);
  en.run([&](double w, std::size_t row) {
    // Decode the treatment path from the chronological row code.
    std::vector<int> d(static_cast<std::size_t>(world.horizon));
    std::size_t r = row;
    for (int t = world.horizon; t >= 1; --t) {
      d[static_cast<std::size_t>(t - 1)] = static_cast<int>(r % 2);
      r /= 2;
      r /= world.support_size(t);
    }
    dist[d] += w;
  });
  return dist;
}

WatePair exact_wate_single(const DiscreteWorld& world, const OracleWeight& weight) {
  if (world.horizon != 1)
    throw ValidationError("exact_wate_single needs a single-timepoint world");
  // Single-timepoint weights are shared by the two interventions and are
  // functions of pi(x) = P(A=1|x).
  double num_mech = 0.0, den_mech = 0.0;
  double num_wate = 0.0, den_wate = 0.0;
  for (std::size_t xi = 0; xi < world.x1_dist.size(); ++xi) {
    const double px = world.x1_dist[xi];
    if (px == 0.0) continue;
    const double pi = world.propensities[0][xi];
    const double f = weight.value(pi);
    const double m0 = world.outcome_mean[xi * 2];
    const double m1 = world.outcome_mean[xi * 2 + 1];
    // Mechanism route: intervention propensities of the pair of flips.
    const double q1_target1 = pi + f * (1.0 - pi);        // P(D_f(1)=1 | x)
    const double q1_target0 = pi * (1.0 - f);             // P(D_f(0)=1 | x)
    num_mech += px * ((q1_target1 * m1 + (1.0 - q1_target1) * m0) -
                      (q1_target0 * m1 + (1.0 - q1_target0) * m0));
    den_mech += px * (q1_target1 - q1_target0);
    // Weighted-average route.
    num_wate += px * f * (m1 - m0);
    den_wate += px * f;
  }
  if (den_wate == 0.0 || den_mech == 0.0)
    throw Error("undefined estimand: E{f(X)} = 0 for weight " + weight.name());
  return {num_mech / den_mech, num_wate / den_wate};
}

FlipRatio exact_flip_ratio(const DiscreteWorld& world, const TargetRegime& a,
                           const TargetRegime& a_prime,
                           const OracleWeight& weight,
                           std::size_t term_budget) {
  FlipRatio out;
  out.numerator = exact_psi(world, a, weight, term_budget) -
                  exact_psi(world, a_prime, weight, term_budget);
  out.delta_t.resize(static_cast<std::size_t>(world.horizon));
  double total = 0.0;
  for (int t = 1; t <= world.horizon; ++t) {
    const double d = exact_treatment_mean(world, a, weight, t, term_budget) -
                     exact_treatment_mean(world, a_prime, weight, t, term_budget);
    out.delta_t[static_cast<std::size_t>(t - 1)] = d;
    total += std::fabs(d);
  }
  out.denominator = total / world.horizon;
  if (out.denominator == 0.0)
    throw Error("flip-effect denominator is zero: the two interventions "
                "induce identical treatment means at every timepoint");
  out.ratio = out.numerator / out.denominator;
  return out;
}

namespace {

// Decodes r_b(t) into covariate indices; returns the row with the same
// covariates and every treatment bit set to zero.
std::size_t zero_treatment_row(const DiscreteWorld& world, int t, std::size_t row) {
  std::vector<std::size_t> x(static_cast<std::size_t>(t));
  for (int s = t; s >= 1; --s) {
    row /= 2;
    x[static_cast<std::size_t>(s - 1)] = row % world.support_size(s);
    row /= world.support_size(s);
  }
  std::size_t base = 0;
  for (int s = 1; s <= t; ++s)
    base = (base * world.support_size(s) + x[static_cast<std::size_t>(s - 1)]) * 2;
  return base;
}

}  // namespace

bool treatment_inert(const DiscreteWorld& world) {
  // Transitions must ignore the treatment history...
  for (int t = 2; t <= world.horizon; ++t) {
    const auto& trans = world.transitions[static_cast<std::size_t>(t - 2)];
    for (std::size_t rb = 0; rb < trans.size(); ++rb) {
      const std::size_t base = zero_treatment_row(world, t - 1, rb);
      for (std::size_t xi = 0; xi < world.support_size(t); ++xi)
        if (trans[rb][xi] != trans[base][xi]) return false;
    }
  }
  // ...and outcome means must ignore every treatment coordinate.
  for (std::size_t row = 0; row < world.outcome_mean.size(); ++row)
    if (world.outcome_mean[row] !=
        world.outcome_mean[zero_treatment_row(world, world.horizon, row)])
      return false;
  return true;
}

SharpNullResult sharp_null_certify(const DiscreteWorld& world,
                                   const TargetRegime& a,
                                   const TargetRegime& a_prime,
                                   const OracleWeight& weight, double tol,
                                   std::size_t term_budget) {
  SharpNullResult res;
  res.value = exact_flip_ratio(world, a, a_prime, weight, term_budget);
  res.inert = treatment_inert(world);
  if (res.inert) {
    if (std::fabs(res.value.ratio) > tol)
      throw Error("sharp-null certification failed: world is treatment-inert "
                  "but the exact flip effect is " +
                  text::format_double(res.value.ratio));
    res.certified = true;
  }
  return res;
}

namespace {

NuisanceSet lookup_nuisances(const DiscreteWorld& world, const PanelDataset& data,
                             const TargetRegime& regime, const SmoothWeight& weight,
                             const ExactNuisanceTables& tables, int R) {
  NuisanceSet ns;
  ns.resize(R, data.size());
  ns.clip = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Trajectory& tr = data.subject(i);
    std::size_t r_b = 0;
    for (int t = 1; t <= R; ++t) {
      if (tr.covariates[static_cast<std::size_t>(t - 1)].size() != 1)
        throw ValidationError("world-backed nuisances need scalar covariates");
      const int xi =
          world.support_index(t, tr.covariates[static_cast<std::size_t>(t - 1)][0]);
      const std::size_t r_a =
          r_b * world.support_size(t) + static_cast<std::size_t>(xi);
      ns.pi1[static_cast<std::size_t>(t - 1)][i] =
          world.propensities[static_cast<std::size_t>(t - 1)][r_a];
      ns.m0[static_cast<std::size_t>(t - 1)][i] =
          tables.m[static_cast<std::size_t>(t - 1)][r_a * 2];
      ns.m1[static_cast<std::size_t>(t - 1)][i] =
          tables.m[static_cast<std::size_t>(t - 1)][r_a * 2 + 1];
      r_b = r_a * 2 + static_cast<std::size_t>(tr.treatments[static_cast<std::size_t>(t - 1)]);
    }
  }
  TargetRegime trunc;
  trunc.arms.assign(regime.arms.begin(), regime.arms.begin() + R);
  ns.derive_intervention_terms(data, trunc, weight);
  return ns;
}

}  // namespace

NuisanceSet exact_nuisances(const DiscreteWorld& world, const PanelDataset& data,
                            const TargetRegime& regime,
                            const SmoothWeight& weight) {
  require_regime(world, regime);
  if (data.horizon() != world.horizon)
    throw ValidationError("panel horizon does not match world horizon");
  const auto tables =
      exact_sequential_regressions(world, regime, OracleWeight::wrap(weight));
  return lookup_nuisances(world, data, regime, weight, tables, world.horizon);
}

NuisanceSet exact_nuisances_tm(const DiscreteWorld& world, const PanelDataset& data,
                               const TargetRegime& regime,
                               const SmoothWeight& weight, int t_star) {
  require_regime(world, regime);
  if (data.horizon() != world.horizon)
    throw ValidationError("panel horizon does not match world horizon");
  const auto tables = exact_sequential_regressions_tm(
      world, regime, OracleWeight::wrap(weight), t_star);
  return lookup_nuisances(world, data, regime, weight, tables, t_star);
}

ObservationalEnumeration enumerate_observational(const DiscreteWorld& world) {
  ObservationalEnumeration out;
  std::vector<Trajectory> rows;
  Trajectory current;
  current.covariates.resize(static_cast<std::size_t>(world.horizon));
  current.treatments.resize(static_cast<std::size_t>(world.horizon));

  const std::function<void(int, std::size_t, double)> walk = [&](int t,
                                                                 std::size_t r_b,
                                                                 double w) {
    const auto& sup = world.supports[static_cast<std::size_t>(t - 1)];
    for (std::size_t xi = 0; xi < sup.size(); ++xi) {
      const double px =
          (t == 1) ? world.x1_dist[xi]
                   : world.transitions[static_cast<std::size_t>(t - 2)][r_b][xi];
      if (px == 0.0) continue;
      const std::size_t r_a = r_b * sup.size() + xi;
      current.covariates[static_cast<std::size_t>(t - 1)] = {sup[xi]};
      const double p1 = world.propensities[static_cast<std::size_t>(t - 1)][r_a];
      for (int a = 0; a <= 1; ++a) {
        const double pa = (a == 1) ? p1 : 1.0 - p1;
        if (pa == 0.0) continue;
        current.treatments[static_cast<std::size_t>(t - 1)] = a;
        const std::size_t next_rb = r_a * 2 + static_cast<std::size_t>(a);
        if (t == world.horizon) {
          current.outcome = world.outcome_mean[next_rb];
          rows.push_back(current);
          out.probability.push_back(w * px * pa);
        } else {
          walk(t + 1, next_rb, w * px * pa);
        }
      }
    }
  };
  walk(1, 0, 1.0);
  out.panel = PanelDataset::from_trajectories(std::move(rows));
  return out;
}

}  // namespace flip::oracle
