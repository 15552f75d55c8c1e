#include "flip/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "flip/simd/kernels.hpp"
#include "flip/util/error.hpp"
#include "flip/util/rng.hpp"
#include "flip/util/stats.hpp"

namespace flip {

EstimatorKind parse_estimator(std::string_view t) {
  if (t == "mr") return EstimatorKind::mr;
  if (t == "sdr") return EstimatorKind::sdr;
  if (t == "ipw") return EstimatorKind::ipw;
  throw ConfigError("unknown estimator '" + std::string(t) + "' (expected mr|sdr|ipw)");
}

std::string estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::mr:
      return "mr";
    case EstimatorKind::sdr:
      return "sdr";
    case EstimatorKind::ipw:
      return "ipw";
  }
  return "?";
}

double phi_t(int b, int a_t, int a_obs, double pi_hat_target,
             const SmoothWeight& weight) {
  const double sign = (b == a_t) ? 1.0 : -1.0;
  const double resid = (a_obs == a_t ? 1.0 : 0.0) - pi_hat_target;
  const double bracket = 1.0 - weight_value(weight, pi_hat_target) +
                         weight_deriv(weight, pi_hat_target) * (1.0 - pi_hat_target);
  return sign * resid * bracket;
}

namespace {

// Which functional the influence algebra targets: the mean potential outcome
// (residual terms end at t=R with P_{R+1} = Y) or the treatment mean
// (pinned terminal regressions, no outcome term).
struct Shape {
  int R = 1;
  bool outcome_terminal = true;
};

struct PhiArrays {
  std::vector<std::vector<double>> bracket;  // [t-1][i]
  std::vector<std::vector<double>> resid;    // [t-1][i]: 1(A_t = a_t) - pa
};

PhiArrays make_phi_arrays(const PanelDataset& data, const NuisanceSet& ns,
                          const TargetRegime& regime, const SmoothWeight& weight) {
  const auto& k = simd::active();
  const std::size_t n = ns.n;
  PhiArrays out;
  out.bracket.resize(static_cast<std::size_t>(ns.horizon));
  out.resid.resize(static_cast<std::size_t>(ns.horizon));
  std::vector<double> pa(n), s(n), sp(n), obs(n);
  for (int t = 1; t <= ns.horizon; ++t) {
    const int a_t = regime.arm(t);
    const auto& p1 = ns.pi1[static_cast<std::size_t>(t - 1)];
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = (a_t == 1) ? p1[i] : 1.0 - p1[i];
      obs[i] = (data.treatment(i, t) == a_t) ? 1.0 : 0.0;
    }
    k.weight_batch(static_cast<int>(weight.kind), weight.rate_k, pa.data(), n,
                   s.data(), sp.data());
    auto& bracket = out.bracket[static_cast<std::size_t>(t - 1)];
    auto& resid = out.resid[static_cast<std::size_t>(t - 1)];
    bracket.resize(n);
    resid.resize(n);
    k.eif_terms(n, pa.data(), s.data(), sp.data(), obs.data(), bracket.data(),
                resid.data());
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(bracket[i]))
        throw Error(
            "unbounded weight derivative at an estimated propensity of " +
            std::to_string(pa[i]) + " (entropy weights need clipping)");
  }
  return out;
}

// P_t = m_t(0)Q_t(0) + m_t(1)Q_t(1) for every t <= R.
std::vector<std::vector<double>> make_pmix(const NuisanceSet& ns, int R) {
  const auto& k = simd::active();
  std::vector<std::vector<double>> pmix(static_cast<std::size_t>(R));
  for (int t = 1; t <= R; ++t) {
    auto& p = pmix[static_cast<std::size_t>(t - 1)];
    p.resize(ns.n);
    k.mix_two(ns.n, ns.m0[static_cast<std::size_t>(t - 1)].data(),
              ns.q0[static_cast<std::size_t>(t - 1)].data(),
              ns.m1[static_cast<std::size_t>(t - 1)].data(),
              ns.q1[static_cast<std::size_t>(t - 1)].data(), p.data());
  }
  return pmix;
}

inline double m_at_observed(const PanelDataset& data, const NuisanceSet& ns,
                            std::size_t i, int t) {
  return data.treatment(i, t) == 1 ? ns.m1[static_cast<std::size_t>(t - 1)][i]
                                   : ns.m0[static_cast<std::size_t>(t - 1)][i];
}

// Uncentered EIF value for one observation: the residual (phi_m) ladder plus
// the intervention-propensity (phi_Q) ladder.
double eif_at(const PanelDataset& data, const NuisanceSet& ns,
              const PhiArrays& phi, const std::vector<std::vector<double>>& pmix,
              const TargetRegime& regime, const Shape& shape, double m0_plugin,
              std::size_t i) {
  double value = pmix[0][i] - m0_plugin;
  double rprod = 1.0;
  for (int t = 1; t <= shape.R; ++t) {
    rprod *= ns.r_obs[static_cast<std::size_t>(t - 1)][i];
    if (t < shape.R) {
      value += rprod * (pmix[static_cast<std::size_t>(t)][i] -
                        m_at_observed(data, ns, i, t));
    } else if (shape.outcome_terminal) {
      value += rprod * (data.outcome(i) - m_at_observed(data, ns, i, t));
    }
  }
  double rprod_prev = 1.0;
  for (int t = 1; t <= shape.R; ++t) {
    const int a_t = regime.arm(t);
    const auto& m0t = ns.m0[static_cast<std::size_t>(t - 1)];
    const auto& m1t = ns.m1[static_cast<std::size_t>(t - 1)];
    const double m_gap = (a_t == 1) ? m1t[i] - m0t[i] : m0t[i] - m1t[i];
    value += rprod_prev * m_gap * phi.resid[static_cast<std::size_t>(t - 1)][i] *
             phi.bracket[static_cast<std::size_t>(t - 1)][i];
    rprod_prev *= ns.r_obs[static_cast<std::size_t>(t - 1)][i];
  }
  return value;
}

// B_t = sum_b m_t(b) { Q_t(b) + phi_t(b) } for every observation.
std::vector<double> b_array(const NuisanceSet& ns, const PhiArrays& phi,
                            const TargetRegime& regime, int t) {
  const std::size_t n = ns.n;
  std::vector<double> b(n);
  const int a_t = regime.arm(t);
  const double sign1 = (a_t == 1) ? 1.0 : -1.0;
  const auto& m0t = ns.m0[static_cast<std::size_t>(t - 1)];
  const auto& m1t = ns.m1[static_cast<std::size_t>(t - 1)];
  const auto& q0t = ns.q0[static_cast<std::size_t>(t - 1)];
  const auto& q1t = ns.q1[static_cast<std::size_t>(t - 1)];
  const auto& re = phi.resid[static_cast<std::size_t>(t - 1)];
  const auto& br = phi.bracket[static_cast<std::size_t>(t - 1)];
  for (std::size_t i = 0; i < n; ++i) {
    const double adj = re[i] * br[i];
    b[i] = m0t[i] * (q0t[i] - sign1 * adj) + m1t[i] * (q1t[i] + sign1 * adj);
  }
  return b;
}

// Debiased pseudo-outcomes: recurses P*_t = B_t + r_t (P*_{t+1} - m_t(A_t))
// backward from the terminal layer down to t_out.
std::vector<double> pstar_to(const PanelDataset& data, const NuisanceSet& ns,
                             const PhiArrays& phi, const TargetRegime& regime,
                             const Shape& shape, int t_out) {
  const std::size_t n = ns.n;
  const auto& k = simd::active();
  std::vector<double> pstar(n);
  int start;
  if (shape.outcome_terminal) {
    for (std::size_t i = 0; i < n; ++i) pstar[i] = data.outcome(i);
    start = shape.R;
  } else {
    pstar = b_array(ns, phi, regime, shape.R);
    start = shape.R - 1;
  }
  std::vector<double> m_obs(n), next(n);
  for (int t = start; t >= t_out; --t) {
    const std::vector<double> b = b_array(ns, phi, regime, t);
    for (std::size_t i = 0; i < n; ++i) m_obs[i] = m_at_observed(data, ns, i, t);
    next = pstar;
    k.pseudo_update(n, b.data(), ns.r_obs[static_cast<std::size_t>(t - 1)].data(),
                    next.data(), m_obs.data(), pstar.data());
  }
  return pstar;
}

double view_mean(const std::vector<double>& values,
                 const std::vector<std::size_t>& rows,
                 const std::vector<double>* probs) {
  double s = 0.0;
  if (!probs) {
    for (std::size_t r : rows) s += values[r];
    return s / static_cast<double>(rows.size());
  }
  double wsum = 0.0;
  for (std::size_t r : rows) {
    s += (*probs)[r] * values[r];
    wsum += (*probs)[r];
  }
  if (wsum <= 0.0) throw Error("enumeration weights sum to zero");
  return s / wsum;
}

double view_mean_sq(const std::vector<double>& values, double center,
                    const std::vector<std::size_t>& rows,
                    const std::vector<double>* probs) {
  double s = 0.0;
  if (!probs) {
    for (std::size_t r : rows) {
      const double d = values[r] - center;
      s += d * d;
    }
    return s / static_cast<double>(rows.size());
  }
  double wsum = 0.0;
  for (std::size_t r : rows) {
    const double d = values[r] - center;
    s += (*probs)[r] * d * d;
    wsum += (*probs)[r];
  }
  return s / wsum;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

TargetRegime truncate_regime(const TargetRegime& regime, int R) {
  TargetRegime out;
  out.arms.assign(regime.arms.begin(), regime.arms.begin() + R);
  return out;
}

struct CombineOut {
  double psi = 0.0;
  double m0 = 0.0;
  // Indexed like `rows`.
  std::vector<double> influence;  // uncentered, averages to psi
  std::vector<double> phi;        // MR only: estimated EIF values
};

CombineOut combine_mr(const PanelDataset& data, const NuisanceSet& ns,
                      const TargetRegime& regime, const SmoothWeight& weight,
                      const Shape& shape, const std::vector<std::size_t>& rows,
                      const std::vector<double>* probs) {
  const PhiArrays phi = make_phi_arrays(data, ns, regime, weight);
  const auto pmix = make_pmix(ns, shape.R);
  CombineOut out;
  out.m0 = view_mean(pmix[0], rows, probs);
  out.influence.resize(rows.size());
  out.phi.resize(rows.size());
  for (std::size_t pos = 0; pos < rows.size(); ++pos) {
    const double v = eif_at(data, ns, phi, pmix, regime, shape, out.m0, rows[pos]);
    out.phi[pos] = v;
    out.influence[pos] = out.m0 + v;
  }
  double s = 0.0, w = 0.0;
  for (std::size_t pos = 0; pos < rows.size(); ++pos) {
    const double wt = probs ? (*probs)[rows[pos]] : 1.0;
    s += wt * out.phi[pos];
    w += wt;
  }
  out.psi = out.m0 + s / w;
  return out;
}

CombineOut combine_sdr(const PanelDataset& data, const NuisanceSet& ns,
                       const TargetRegime& regime, const SmoothWeight& weight,
                       const Shape& shape, const std::vector<std::size_t>& rows,
                       const std::vector<double>* probs) {
  const PhiArrays phi = make_phi_arrays(data, ns, regime, weight);
  const std::vector<double> pstar = pstar_to(data, ns, phi, regime, shape, 1);
  CombineOut out;
  const auto pmix = make_pmix(ns, 1);
  out.m0 = view_mean(pmix[0], rows, probs);
  out.influence.resize(rows.size());
  for (std::size_t pos = 0; pos < rows.size(); ++pos)
    out.influence[pos] = pstar[rows[pos]];
  out.psi = view_mean(pstar, rows, probs);
  return out;
}

EstimateReport finalize_report(double psi, double sigma2, std::size_t n,
                               double level, std::vector<double> influence) {
  EstimateReport rep;
  rep.psi_hat = psi;
  rep.sigma2_hat = sigma2;
  rep.n_eval = n;
  rep.level = level;
  const double half =
      stats::z_critical(level) * std::sqrt(sigma2 / static_cast<double>(n));
  rep.ci_low = psi - half;
  rep.ci_high = psi + half;
  rep.influence = std::move(influence);
  return rep;
}

void require_horizon(const NuisanceSet& ns, int R) {
  if (ns.horizon != R)
    throw ValidationError("nuisance set horizon " + std::to_string(ns.horizon) +
                          " does not match the functional horizon " +
                          std::to_string(R));
}

}  // namespace

double eif_value(std::size_t i, const PanelDataset& data, const NuisanceSet& ns,
                 const TargetRegime& regime, const SmoothWeight& weight) {
  const Shape shape{ns.horizon, true};
  const PhiArrays phi = make_phi_arrays(data, ns, regime, weight);
  const auto pmix = make_pmix(ns, shape.R);
  return eif_at(data, ns, phi, pmix, regime, shape, ns.m0_plugin, i);
}

std::vector<double> debiased_pseudo_outcome(int t, const PanelDataset& data,
                                            const NuisanceSet& ns,
                                            const TargetRegime& regime,
                                            const SmoothWeight& weight) {
  if (t < 1 || t > ns.horizon) throw ValidationError("t out of range");
  const Shape shape{ns.horizon, true};
  const PhiArrays phi = make_phi_arrays(data, ns, regime, weight);
  return pstar_to(data, ns, phi, regime, shape, t);
}

EstimateReport mr_combine(const PanelDataset& data, NuisanceSet& ns,
                          const TargetRegime& regime, const SmoothWeight& weight,
                          double level, const std::vector<double>* probs) {
  require_horizon(ns, regime.horizon());
  const Shape shape{ns.horizon, true};
  const auto rows = all_rows(ns.n);
  const CombineOut out = combine_mr(data, ns, regime, weight, shape, rows, probs);
  ns.m0_plugin = out.m0;
  // Uncentered second moment, exactly as the multiply robust recipe states.
  // rows is the identity here, so positions in out.phi align with row ids.
  const double sigma2 = view_mean_sq(out.phi, 0.0, rows, probs);
  return finalize_report(out.psi, sigma2, ns.n, level, out.influence);
}

EstimateReport sdr_combine(const PanelDataset& data, NuisanceSet& ns,
                           const TargetRegime& regime, const SmoothWeight& weight,
                           double level, const std::vector<double>* probs) {
  require_horizon(ns, regime.horizon());
  const Shape shape{ns.horizon, true};
  const auto rows = all_rows(ns.n);
  const CombineOut out = combine_sdr(data, ns, regime, weight, shape, rows, probs);
  ns.m0_plugin = out.m0;
  const double sigma2 = view_mean_sq(out.influence, out.psi, rows, probs);
  return finalize_report(out.psi, sigma2, ns.n, level, out.influence);
}

EstimateReport treatment_mean_mr_combine(const PanelDataset& data, NuisanceSet& ns,
                                         const TargetRegime& regime,
                                         const SmoothWeight& weight, int t_star,
                                         double level,
                                         const std::vector<double>* probs) {
  require_horizon(ns, t_star);
  const Shape shape{t_star, false};
  const TargetRegime reg = truncate_regime(regime, t_star);
  const auto rows = all_rows(ns.n);
  const CombineOut out = combine_mr(data, ns, reg, weight, shape, rows, probs);
  ns.m0_plugin = out.m0;
  const double sigma2 = view_mean_sq(out.phi, 0.0, rows, probs);
  return finalize_report(out.psi, sigma2, ns.n, level, out.influence);
}

EstimateReport treatment_mean_sdr_combine(const PanelDataset& data, NuisanceSet& ns,
                                          const TargetRegime& regime,
                                          const SmoothWeight& weight, int t_star,
                                          double level,
                                          const std::vector<double>* probs) {
  require_horizon(ns, t_star);
  const Shape shape{t_star, false};
  const TargetRegime reg = truncate_regime(regime, t_star);
  const auto rows = all_rows(ns.n);
  const CombineOut out = combine_sdr(data, ns, reg, weight, shape, rows, probs);
  ns.m0_plugin = out.m0;
  const double sigma2 = view_mean_sq(out.influence, out.psi, rows, probs);
  return finalize_report(out.psi, sigma2, ns.n, level, out.influence);
}

// ------------------------- cross-fitted pipelines ---------------------------

namespace {

void validate_weight_for_estimation(const SmoothWeight& weight,
                                    const EstimatorOptions& opts) {
  if (check_identification(weight) == IdentificationCondition::requires_positivity &&
      !opts.assume_positivity)
    throw IdentificationError(
        "weight '" + weight.name() +
        "' does not vanish at zero propensity, so the flip effect is only "
        "identified under target-arm positivity; pass --assume-positivity to "
        "proceed");
  if (weight.kind == WeightKind::entropy && opts.clip <= 0.0)
    throw ConfigError(
        "entropy weights have an unbounded derivative at 0 and 1; estimation "
        "requires a positive propensity clip");
}

struct Context {
  const PanelDataset& data;
  const EstimatorOptions& opts;
  FoldAssignment folds;
  CrossFitPropensities props;
  std::vector<Eigen::MatrixXd> history_features;  // per t
  std::vector<std::vector<int>> treatments;       // per t
  std::vector<double> outcomes;
  std::unique_ptr<RegressionBackend> reg_backend;

  Context(const PanelDataset& data_in, const EstimatorOptions& opts_in)
      : data(data_in),
        opts(opts_in),
        folds(assign_folds(data_in.size(), opts_in.folds,
                           rng::derive_seed(opts_in.seed, {0x666f6c64ull}))),
        props(data_in, folds, opts_in.backend, opts_in.clip,
              rng::derive_seed(opts_in.seed, {0x70726f70ull})) {
    const int T = data.horizon();
    history_features.reserve(static_cast<std::size_t>(T));
    treatments.resize(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) {
      const std::size_t len = history_length(data, t);
      Eigen::MatrixXd X(static_cast<Eigen::Index>(data.size()),
                        static_cast<Eigen::Index>(len));
      for (std::size_t i = 0; i < data.size(); ++i) {
        const HistoryView h = history(data, i, t);
        for (std::size_t j = 0; j < len; ++j)
          X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
              h.features[j];
      }
      history_features.push_back(std::move(X));
      auto& a_t = treatments[static_cast<std::size_t>(t - 1)];
      a_t.resize(data.size());
      for (std::size_t i = 0; i < data.size(); ++i) a_t[i] = data.treatment(i, t);
    }
    outcomes.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) outcomes[i] = data.outcome(i);
    reg_backend = make_backend(opts.backend.kind == BackendConfig::Kind::logistic
                                   ? BackendConfig{BackendConfig::Kind::linear}
                                   : opts.backend,
                               /*binary_response=*/false);
  }

  std::vector<std::size_t> eval_rows(int k) const { return folds.members(k); }
  std::vector<std::size_t> train_rows(int k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < folds.labels.size(); ++i)
      if (folds.labels[i] != k) out.push_back(i);
    return out;
  }
};

// Per-rotation nuisances with every prediction from rotation k's models, and
// the sequential regressions fitted backward on rotation k's training rows.
NuisanceSet rotation_nuisances(Context& ctx, int k, const TargetRegime& regime,
                               const SmoothWeight& weight, const Shape& shape,
                               EstimatorKind kind) {
  const std::size_t n = ctx.data.size();
  NuisanceSet ns;
  ns.resize(shape.R, n);
  ns.clip = ctx.opts.clip;
  for (int t = 1; t <= shape.R; ++t)
    ns.pi1[static_cast<std::size_t>(t - 1)] =
        ctx.props.rotation(k)[static_cast<std::size_t>(t - 1)];
  std::fill(ns.provenance.begin(), ns.provenance.end(), k);
  const TargetRegime reg = truncate_regime(regime, shape.R);
  ns.derive_intervention_terms(ctx.data, reg, weight);
  if (kind == EstimatorKind::ipw) return ns;  // no regressions needed

  const auto train = ctx.train_rows(k);
  const auto& kern = simd::active();
  const PhiArrays phi =
      (kind == EstimatorKind::sdr) ? make_phi_arrays(ctx.data, ns, reg, weight)
                                   : PhiArrays{};

  std::vector<double> pseudo;
  int first_fit_t;
  if (shape.outcome_terminal) {
    pseudo = ctx.outcomes;
    first_fit_t = shape.R;
  } else {
    // Pinned terminal layer m_{t*}(b, .) = b.
    ns.m0[static_cast<std::size_t>(shape.R - 1)].assign(n, 0.0);
    ns.m1[static_cast<std::size_t>(shape.R - 1)].assign(n, 1.0);
    if (kind == EstimatorKind::sdr) {
      pseudo = b_array(ns, phi, reg, shape.R);
    } else {
      pseudo.resize(n);
      kern.mix_two(n, ns.m0[static_cast<std::size_t>(shape.R - 1)].data(),
                   ns.q0[static_cast<std::size_t>(shape.R - 1)].data(),
                   ns.m1[static_cast<std::size_t>(shape.R - 1)].data(),
                   ns.q1[static_cast<std::size_t>(shape.R - 1)].data(),
                   pseudo.data());
    }
    first_fit_t = shape.R - 1;
  }

  std::vector<double> m_obs(n);
  for (int t = first_fit_t; t >= 1; --t) {
    SequentialFitResult fit;
    try {
      fit = fit_arm_regression(
          ctx.history_features[static_cast<std::size_t>(t - 1)],
          ctx.treatments[static_cast<std::size_t>(t - 1)], pseudo, train,
          *ctx.reg_backend,
          rng::derive_seed(ctx.opts.seed,
                           {0x7365714dull, static_cast<std::uint64_t>(t),
                            static_cast<std::uint64_t>(k)}));
    } catch (const Error& e) {
      throw BackendError("sequential regression failed at t=" + std::to_string(t) +
                         ", fold " + std::to_string(k) + ": " + e.what());
    }
    ns.m0[static_cast<std::size_t>(t - 1)] = std::move(fit.m0);
    ns.m1[static_cast<std::size_t>(t - 1)] = std::move(fit.m1);
    if (kind == EstimatorKind::sdr) {
      const std::vector<double> b = b_array(ns, phi, reg, t);
      for (std::size_t i = 0; i < n; ++i)
        m_obs[i] = m_at_observed(ctx.data, ns, i, t);
      std::vector<double> next = pseudo;
      kern.pseudo_update(n, b.data(),
                         ns.r_obs[static_cast<std::size_t>(t - 1)].data(),
                         next.data(), m_obs.data(), pseudo.data());
    } else {
      kern.mix_two(n, ns.m0[static_cast<std::size_t>(t - 1)].data(),
                   ns.q0[static_cast<std::size_t>(t - 1)].data(),
                   ns.m1[static_cast<std::size_t>(t - 1)].data(),
                   ns.q1[static_cast<std::size_t>(t - 1)].data(), pseudo.data());
    }
  }
  return ns;
}

EstimateReport run_pipeline(Context& ctx, const TargetRegime& regime,
                            const SmoothWeight& weight, const Shape& shape,
                            EstimatorKind kind) {
  validate_weight_for_estimation(weight, ctx.opts);
  const std::size_t n = ctx.data.size();
  const TargetRegime reg = truncate_regime(regime, shape.R);
  std::vector<double> influence(n, 0.0), centered(n, 0.0);
  double psi_sum = 0.0;
  for (int k = 0; k < ctx.folds.k; ++k) {
    const NuisanceSet ns = rotation_nuisances(ctx, k, regime, weight, shape, kind);
    const auto eval = ctx.eval_rows(k);
    if (kind == EstimatorKind::ipw) {
      // Horvitz-Thompson style plug-in of the weighting identification line;
      // diagnostic only, no influence-function correction.
      double s = 0.0;
      for (std::size_t i : eval) {
        double w = 1.0;
        if (shape.outcome_terminal) {
          for (int t = 1; t <= shape.R; ++t)
            w *= ns.r_obs[static_cast<std::size_t>(t - 1)][i];
          w *= ctx.outcomes[i];
        } else {
          for (int t = 1; t < shape.R; ++t)
            w *= ns.r_obs[static_cast<std::size_t>(t - 1)][i];
          w *= ns.q1[static_cast<std::size_t>(shape.R - 1)][i];
        }
        influence[i] = w;
        s += w;
      }
      psi_sum += s / static_cast<double>(eval.size());
      continue;
    }
    const CombineOut out =
        (kind == EstimatorKind::mr)
            ? combine_mr(ctx.data, ns, reg, weight, shape, eval, nullptr)
            : combine_sdr(ctx.data, ns, reg, weight, shape, eval, nullptr);
    psi_sum += out.psi;
    for (std::size_t pos = 0; pos < eval.size(); ++pos) {
      influence[eval[pos]] = out.influence[pos];
      centered[eval[pos]] =
          (kind == EstimatorKind::mr) ? out.phi[pos] : out.influence[pos];
    }
  }
  const double psi = psi_sum / ctx.folds.k;
  double sigma2 = 0.0;
  const auto rows = all_rows(n);
  switch (kind) {
    case EstimatorKind::mr:
      sigma2 = view_mean_sq(centered, 0.0, rows, nullptr);
      break;
    case EstimatorKind::sdr:
    case EstimatorKind::ipw:
      sigma2 = view_mean_sq(influence, psi, rows, nullptr);
      break;
  }
  EstimateReport rep =
      finalize_report(psi, sigma2, n, ctx.opts.level, std::move(influence));
  if (kind == EstimatorKind::ipw)
    rep.notes.push_back(
        "ipw is a diagnostic plug-in without influence-function correction; "
        "not robust to nuisance estimation error");
  return rep;
}

}  // namespace

EstimateReport mr_estimate(const PanelDataset& data, const TargetRegime& regime,
                           const SmoothWeight& weight, const EstimatorOptions& opts) {
  Context ctx(data, opts);
  return run_pipeline(ctx, regime, weight, Shape{data.horizon(), true},
                      EstimatorKind::mr);
}

EstimateReport sdr_estimate(const PanelDataset& data, const TargetRegime& regime,
                            const SmoothWeight& weight, const EstimatorOptions& opts) {
  Context ctx(data, opts);
  return run_pipeline(ctx, regime, weight, Shape{data.horizon(), true},
                      EstimatorKind::sdr);
}

EstimateReport ipw_estimate(const PanelDataset& data, const TargetRegime& regime,
                            const SmoothWeight& weight, const EstimatorOptions& opts) {
  Context ctx(data, opts);
  return run_pipeline(ctx, regime, weight, Shape{data.horizon(), true},
                      EstimatorKind::ipw);
}

EstimateReport treatment_mean_mr(const PanelDataset& data, const TargetRegime& regime,
                                 const SmoothWeight& weight, int t_star,
                                 const EstimatorOptions& opts) {
  if (t_star < 1 || t_star > data.horizon())
    throw ValidationError("t_star out of range");
  Context ctx(data, opts);
  return run_pipeline(ctx, regime, weight, Shape{t_star, false}, EstimatorKind::mr);
}

EstimateReport treatment_mean_sdr(const PanelDataset& data,
                                  const TargetRegime& regime,
                                  const SmoothWeight& weight, int t_star,
                                  const EstimatorOptions& opts) {
  if (t_star < 1 || t_star > data.horizon())
    throw ValidationError("t_star out of range");
  Context ctx(data, opts);
  return run_pipeline(ctx, regime, weight, Shape{t_star, false}, EstimatorKind::sdr);
}

FlipEffectReport flip_effect(const PanelDataset& data, const TargetRegime& regime_a,
                             const TargetRegime& regime_a_prime,
                             const SmoothWeight& weight,
                             const EstimatorOptions& opts, EstimatorKind kind) {
  if (regime_a.horizon() != data.horizon() ||
      regime_a_prime.horizon() != data.horizon())
    throw ValidationError("regime length must equal the panel horizon");
  if (regime_a.arms == regime_a_prime.arms)
    throw ValidationError(
        "the two regimes of a contrast are identical: the flip-effect "
        "denominator is identically zero");
  const int T = data.horizon();
  const std::size_t n = data.size();
  Context ctx(data, opts);

  FlipEffectReport rep;
  rep.level = opts.level;
  rep.n = n;
  rep.psi_a = run_pipeline(ctx, regime_a, weight, Shape{T, true}, kind);
  rep.psi_a_prime = run_pipeline(ctx, regime_a_prime, weight, Shape{T, true}, kind);

  // Numerator: difference of the two mean potential outcomes.
  std::vector<double> if_num(n);
  for (std::size_t i = 0; i < n; ++i)
    if_num[i] = rep.psi_a.influence[i] - rep.psi_a_prime.influence[i];
  rep.numerator = rep.psi_a.psi_hat - rep.psi_a_prime.psi_hat;
  const double var_num = stats::variance_about(if_num, stats::mean(if_num));
  rep.numerator_se = std::sqrt(var_num / static_cast<double>(n));
  const double z = stats::z_critical(opts.level);
  rep.numerator_ci_low = rep.numerator - z * rep.numerator_se;
  rep.numerator_ci_high = rep.numerator + z * rep.numerator_se;

  // Per-timepoint treatment means under each regime's own weights.
  rep.delta_t.resize(static_cast<std::size_t>(T));
  rep.delta_t_se.resize(static_cast<std::size_t>(T));
  std::vector<std::vector<double>> if_delta(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    const Shape shape{t, false};
    const EstimateReport da = run_pipeline(ctx, regime_a, weight, shape, kind);
    const EstimateReport db = run_pipeline(ctx, regime_a_prime, weight, shape, kind);
    auto& diff = if_delta[static_cast<std::size_t>(t - 1)];
    diff.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      diff[i] = da.influence[i] - db.influence[i];
    rep.delta_t[static_cast<std::size_t>(t - 1)] = da.psi_hat - db.psi_hat;
    rep.delta_t_se[static_cast<std::size_t>(t - 1)] = std::sqrt(
        stats::variance_about(diff, stats::mean(diff)) / static_cast<double>(n));
    if (std::fabs(rep.delta_t[static_cast<std::size_t>(t - 1)]) <= opts.tau_den)
      rep.warnings.push_back(
          "treatment-mean difference at t=" + std::to_string(t) +
          " is within tau_den of zero; the sign entering the delta method is "
          "unstable");
  }

  double denom = 0.0;
  for (double d : rep.delta_t) denom += std::fabs(d);
  denom /= static_cast<double>(T);
  rep.denominator = denom;
  if (denom <= opts.tau_den)
    throw Error("flip-effect denominator " + std::to_string(denom) +
                " is at or below tau_den=" + std::to_string(opts.tau_den) +
                "; the standardized effect is near-undefined");

  rep.ratio = rep.numerator / denom;

  // Delta method with the plug-in sign of each timepoint difference.
  rep.ratio_influence.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double if_den = 0.0;
    for (int t = 1; t <= T; ++t) {
      const double sgn =
          rep.delta_t[static_cast<std::size_t>(t - 1)] >= 0.0 ? 1.0 : -1.0;
      if_den += sgn * if_delta[static_cast<std::size_t>(t - 1)][i];
    }
    if_den /= static_cast<double>(T);
    rep.ratio_influence[i] = (if_num[i] - rep.ratio * if_den) / denom;
  }
  const double var_ratio =
      stats::variance_about(rep.ratio_influence, stats::mean(rep.ratio_influence));
  rep.ratio_se = std::sqrt(var_ratio / static_cast<double>(n));
  rep.ci_low = rep.ratio - z * rep.ratio_se;
  rep.ci_high = rep.ratio + z * rep.ratio_se;
  return rep;
}

}  // namespace flip
