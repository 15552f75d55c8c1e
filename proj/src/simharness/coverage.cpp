#include <cmath>
#include <fstream>

#include "flip/simharness.hpp"
#include "flip/util/rng.hpp"
#include "flip/util/stats.hpp"
#include "flip/util/text.hpp"
#include "flip/util/thread_pool.hpp"

namespace flip::sim {

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  const auto kv = text::KeyValueFile::load(path);
  ExperimentConfig cfg;
  auto parse_list = [&](const std::string& key, auto& out, auto convert) {
    if (!kv.has(key)) return;
    out.clear();
    for (const auto& tok : text::split(kv.get(key), ',')) {
      const auto trimmed = text::strip(tok);
      if (!trimmed.empty()) out.push_back(convert(std::string(trimmed)));
    }
    if (out.empty()) throw ConfigError(path + ": empty list for '" + key + "'");
  };
  parse_list("n", cfg.sample_sizes, [&](const std::string& s) {
    long long v = 0;
    if (!text::parse_long(s, v) || v < 100)
      throw ConfigError(path + ": sample sizes must be integers >= 100");
    return static_cast<std::size_t>(v);
  });
  auto to_rate = [&](const std::string& s) {
    double v = 0.0;
    if (!text::parse_double(s, v) || !(v > 0.0 && v <= 1.0))
      throw ConfigError(path + ": rate exponents must lie in (0,1]");
    return v;
  };
  parse_list("alpha_pi", cfg.alpha_pi, to_rate);
  parse_list("alpha_m", cfg.alpha_m, to_rate);
  if (kv.has("reps")) {
    cfg.reps = static_cast<int>(kv.get_int("reps"));
    if (cfg.reps < 1) throw ConfigError(path + ": reps must be >= 1");
  }
  if (kv.has("weight")) cfg.weight = SmoothWeight::parse(kv.get("weight"));
  if (kv.has("regime_a")) cfg.regime_a = TargetRegime::parse(kv.get("regime_a"));
  if (kv.has("regime_b")) cfg.regime_b = TargetRegime::parse(kv.get("regime_b"));
  if (kv.has("mode")) {
    const std::string m = kv.get("mode");
    if (m == "difference")
      cfg.difference = true;
    else if (m == "single")
      cfg.difference = false;
    else
      throw ConfigError(path + ": mode must be difference|single");
  }
  if (kv.has("estimator")) {
    cfg.estimator = parse_estimator(kv.get("estimator"));
    if (cfg.estimator == EstimatorKind::ipw)
      throw ConfigError(path + ": the coverage study runs mr or sdr");
  }
  if (kv.has("seed")) cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed"));
  if (kv.has("level")) cfg.level = kv.get_double("level");
  if (kv.has("prob_lo")) cfg.prob_lo = kv.get_double("prob_lo");
  if (kv.has("prob_hi")) cfg.prob_hi = kv.get_double("prob_hi");
  if (!(cfg.prob_lo > 0.0 && cfg.prob_lo < cfg.prob_hi && cfg.prob_hi < 1.0))
    throw ConfigError(path + ": need 0 < prob_lo < prob_hi < 1");
  if (kv.has("threads"))
    cfg.threads = static_cast<unsigned>(kv.get_int("threads"));
  if (cfg.regime_a.horizon() != 2 || cfg.regime_b.horizon() != 2)
    throw ConfigError(path + ": regimes must have length 2");
  return cfg;
}

std::string ExperimentConfig::describe() const {
  std::string s;
  s += "estimator=" + estimator_name(estimator);
  s += " weight=" + weight.name();
  s += " regimes=" + regime_a.to_string() + (difference ? ":" + regime_b.to_string() : "");
  s += " reps=" + std::to_string(reps);
  return s;
}

double config_truth(const ExperimentConfig& cfg) {
  const double a = true_psi_dgp(cfg.regime_a, cfg.weight);
  if (!cfg.difference) return a;
  return a - true_psi_dgp(cfg.regime_b, cfg.weight);
}

namespace {

struct Shifts {
  std::vector<double> pi1, pi2;          // propensity function shifts, shared
  std::vector<double> m2[2], m1[2];      // per arm, per observation
};

// The corruption emulates estimators whose error decays like n^{-alpha}.
// Propensities are shifted per observation by n^{-alpha_pi} (1 + G_i): the
// deterministic unit component keeps their bias from averaging out, which is
// what makes slowly estimated propensities break coverage downstream.
// Sequential regressions are shifted by sqrt(2) n^{-alpha_m} G_i (mean zero,
// same RMSE): the regressions enter the debiased pseudo-outcomes linearly, so
// a deterministic regression shift would manufacture a first-order
// cross-term bias that no estimator could remove and the well-specified
// propensity row would stop covering. The same propensity shift applies
// wherever that observation's propensity function is evaluated (observed and
// counterfactual histories), keeping the corrupted nuisances coherent
// functions.
Shifts draw_shifts(std::size_t n, double rate_pi, double rate_m,
                   std::uint64_t seed, int regime_tag, bool shared_pi,
                   const Shifts* shared) {
  Shifts s;
  auto fill_biased = [&](std::vector<double>& v, double rate, std::uint64_t tag) {
    rng::Stream stream(rng::derive_seed(seed, {tag}));
    v.resize(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = rate * (1.0 + stream.gaussian());
  };
  auto fill_centered = [&](std::vector<double>& v, double rate, std::uint64_t tag) {
    rng::Stream stream(rng::derive_seed(seed, {tag}));
    v.resize(n);
    const double scale = rate * std::sqrt(2.0);
    for (std::size_t i = 0; i < n; ++i) v[i] = scale * stream.gaussian();
  };
  if (shared_pi && shared) {
    s.pi1 = shared->pi1;
    s.pi2 = shared->pi2;
  } else {
    fill_biased(s.pi1, rate_pi, 0x11);
    fill_biased(s.pi2, rate_pi, 0x12);
  }
  const std::uint64_t r = static_cast<std::uint64_t>(regime_tag) << 8;
  fill_centered(s.m2[0], rate_m, r | 0x20);
  fill_centered(s.m2[1], rate_m, r | 0x21);
  fill_centered(s.m1[0], rate_m, r | 0x30);
  fill_centered(s.m1[1], rate_m, r | 0x31);
  return s;
}

double clampd(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

// Builds the corrupted NuisanceSet for one regime. The sequential-regression
// truth is computed under the corrupted intervention propensities (the
// m-tilde role in the rate theory), then shifted at rate n^{-alpha_m}.
NuisanceSet build_corrupted(const ExperimentConfig& cfg, const DgpData& data,
                            const TargetRegime& regime, const Shifts& s,
                            EstimatorKind kind) {
  const std::size_t n = data.panel.size();
  NuisanceSet ns;
  ns.resize(2, n);
  ns.clip = 0.0;
  const SmoothWeight& w = cfg.weight;
  const int a2 = regime.arm(2);

  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory& tr = data.panel.subject(i);
    const double x1 = tr.covariates[0][0];
    const double x2_obs = tr.covariates[1][0];
    const double p1_hat = clampd(data.pi1[i] + s.pi1[i], cfg.prob_lo, cfg.prob_hi);
    const double p2_hat_obs =
        clampd(data.pi2[i] + s.pi2[i], cfg.prob_lo, cfg.prob_hi);
    ns.pi1[0][i] = p1_hat;
    ns.pi1[1][i] = p2_hat_obs;

    // Terminal regression: true outcome mean, shifted.
    const int b1_obs = tr.treatments[0];
    ns.m0[1][i] = (x1 + x2_obs + b1_obs + 0.0) + s.m2[0][i];
    ns.m1[1][i] = (x1 + x2_obs + b1_obs + 1.0) + s.m2[1][i];

    // First-stage regression, both arms forced.
    for (int b1 = 0; b1 <= 1; ++b1) {
      const double x2c = 0.5 * (x1 + b1);
      const double p2_true = dgp_propensity(x2c);
      const double p2_hat = clampd(p2_true + s.pi2[i], cfg.prob_lo, cfg.prob_hi);
      const double pa2_hat = (a2 == 1) ? p2_hat : 1.0 - p2_hat;
      const double q2_target = pa2_hat + weight_value(w, pa2_hat) * (1.0 - pa2_hat);
      const double q2[2] = {(a2 == 1) ? 1.0 - q2_target : q2_target,
                            (a2 == 1) ? q2_target : 1.0 - q2_target};
      double m2c[2];
      for (int b2 = 0; b2 <= 1; ++b2)
        m2c[b2] = (x1 + x2c + b1 + b2) + s.m2[b2][i];

      double m_tilde;
      if (kind == EstimatorKind::mr) {
        m_tilde = m2c[0] * q2[0] + m2c[1] * q2[1];
      } else {
        // Conditional mean of the debiased pseudo-outcome under the true law,
        // holding the corrupted nuisances fixed.
        const double pa2_true = (a2 == 1) ? p2_true : 1.0 - p2_true;
        const double bracket = 1.0 - weight_value(w, pa2_hat) +
                               weight_deriv(w, pa2_hat) * (1.0 - pa2_hat);
        const double e_phi_target = (pa2_true - pa2_hat) * bracket;
        double value = 0.0;
        for (int b2 = 0; b2 <= 1; ++b2) {
          const double sign = (b2 == a2) ? 1.0 : -1.0;
          value += m2c[b2] * (q2[b2] + sign * e_phi_target);
          const double p_obs_true = (b2 == 1) ? p2_true : 1.0 - p2_true;
          const double p_obs_hat = (b2 == 1) ? p2_hat : 1.0 - p2_hat;
          const double m2_true = x1 + x2c + b1 + b2;
          value += p_obs_true * (q2[b2] / p_obs_hat) * (m2_true - m2c[b2]);
        }
        m_tilde = value;
      }
      const double m_hat = m_tilde + s.m1[b1][i];
      (b1 == 0 ? ns.m0[0][i] : ns.m1[0][i]) = m_hat;
    }
  }
  ns.derive_intervention_terms(data.panel, regime, w);
  return ns;
}

void check_corruption_rate(const std::vector<double>& shifts, double rate,
                           const char* what) {
  double ss = 0.0;
  for (double v : shifts) ss += v * v;
  const double rmse = std::sqrt(ss / static_cast<double>(shifts.size()));
  const double target = std::sqrt(2.0) * rate;
  if (std::fabs(rmse / target - 1.0) > 0.25)
    throw Error(std::string("corruption sanity gate: realized ") + what +
                " RMSE " + text::format_double(rmse) + " is outside 25% of " +
                text::format_double(target));
}

}  // namespace

Replication run_replication(const ExperimentConfig& cfg, std::size_t n,
                            double alpha_pi, double alpha_m, double truth,
                            std::uint64_t rep_seed) {
  Replication rep;
  try {
    const DgpData data = generate_dgp(n, rng::derive_seed(rep_seed, {0xDA7A}));
    const double rate_pi = std::pow(static_cast<double>(n), -alpha_pi);
    const double rate_m = std::pow(static_cast<double>(n), -alpha_m);
    const Shifts sa = draw_shifts(n, rate_pi, rate_m,
                                  rng::derive_seed(rep_seed, {0x5F1F}), 0, false,
                                  nullptr);
    check_corruption_rate(sa.pi1, rate_pi, "propensity-1 corruption");
    check_corruption_rate(sa.pi2, rate_pi, "propensity-2 corruption");
    check_corruption_rate(sa.m2[0], rate_m, "regression corruption");
    check_corruption_rate(sa.m1[1], rate_m, "regression corruption");

    auto estimate_one = [&](const TargetRegime& regime, const Shifts& s) {
      NuisanceSet ns = build_corrupted(cfg, data, regime, s, cfg.estimator);
      return (cfg.estimator == EstimatorKind::sdr)
                 ? sdr_combine(data.panel, ns, regime, cfg.weight, cfg.level)
                 : mr_combine(data.panel, ns, regime, cfg.weight, cfg.level);
    };

    const EstimateReport ra = estimate_one(cfg.regime_a, sa);
    if (!cfg.difference) {
      rep.estimate = ra.psi_hat;
      rep.se = std::sqrt(ra.sigma2_hat / static_cast<double>(n));
      rep.ci_low = ra.ci_low;
      rep.ci_high = ra.ci_high;
    } else {
      const Shifts sb = draw_shifts(n, rate_pi, rate_m,
                                    rng::derive_seed(rep_seed, {0x5F1F, 1}), 1,
                                    true, &sa);
      const EstimateReport rb = estimate_one(cfg.regime_b, sb);
      std::vector<double> diff(n);
      for (std::size_t i = 0; i < n; ++i)
        diff[i] = ra.influence[i] - rb.influence[i];
      rep.estimate = ra.psi_hat - rb.psi_hat;
      rep.se = std::sqrt(stats::variance_about(diff, stats::mean(diff)) /
                         static_cast<double>(n));
      const double z = stats::z_critical(cfg.level);
      rep.ci_low = rep.estimate - z * rep.se;
      rep.ci_high = rep.estimate + z * rep.se;
    }
    rep.covered = (truth >= rep.ci_low && truth <= rep.ci_high);
  } catch (const std::exception& e) {
    rep.failed = true;
    rep.failure = e.what();
  }
  return rep;
}

std::vector<CoverageCell> run_coverage_grid(const ExperimentConfig& cfg) {
  const double truth = config_truth(cfg);
  struct CellSpec {
    double api, am;
    std::size_t n;
  };
  std::vector<CellSpec> specs;
  for (double api : cfg.alpha_pi)
    for (double am : cfg.alpha_m)
      for (std::size_t n : cfg.sample_sizes) specs.push_back({api, am, n});

  const std::size_t reps = static_cast<std::size_t>(cfg.reps);
  std::vector<Replication> results(specs.size() * reps);
  const unsigned threads =
      cfg.threads == 0 ? util::hardware_threads() : cfg.threads;
  // One derived seed per (cell, replication): scheduling cannot change output.
  util::parallel_for(results.size(), threads, [&](std::size_t task) {
    const std::size_t cell = task / reps;
    const std::size_t r = task % reps;
    const std::uint64_t rep_seed = rng::derive_seed(cfg.seed, {cell, r});
    results[task] = run_replication(cfg, specs[cell].n, specs[cell].api,
                                    specs[cell].am, truth, rep_seed);
  });

  std::vector<CoverageCell> cells(specs.size());
  for (std::size_t c = 0; c < specs.size(); ++c) {
    CoverageCell& cell = cells[c];
    cell.alpha_pi = specs[c].api;
    cell.alpha_m = specs[c].am;
    cell.n = specs[c].n;
    cell.reps = cfg.reps;
    int ok = 0, covered = 0;
    double bias = 0.0, abs_bias = 0.0, width = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      const Replication& rep = results[c * reps + r];
      if (rep.failed) {
        ++cell.failures;
        continue;
      }
      ++ok;
      covered += rep.covered ? 1 : 0;
      bias += rep.estimate - truth;
      abs_bias += std::fabs(rep.estimate - truth);
      width += rep.ci_high - rep.ci_low;
    }
    if (ok > 0) {
      cell.coverage = static_cast<double>(covered) / ok;
      cell.coverage_se =
          std::sqrt(cell.coverage * (1.0 - cell.coverage) / ok);
      cell.mean_bias = bias / ok;
      cell.mean_abs_bias = abs_bias / ok;
      cell.mean_ci_width = width / ok;
    }
  }
  return cells;
}

void write_coverage_csv(const std::vector<CoverageCell>& cells,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << "alpha_pi,alpha_m,n,reps,failures,coverage,coverage_se,mean_bias,"
         "mean_abs_bias,mean_ci_width\n";
  for (const auto& c : cells) {
    out << text::format_double(c.alpha_pi) << ',' << text::format_double(c.alpha_m)
        << ',' << c.n << ',' << c.reps << ',' << c.failures << ','
        << text::format_double(c.coverage) << ','
        << text::format_double(c.coverage_se) << ','
        << text::format_double(c.mean_bias) << ','
        << text::format_double(c.mean_abs_bias) << ','
        << text::format_double(c.mean_ci_width) << '\n';
  }
}

void write_coverage_long_csv(const std::vector<CoverageCell>& cells,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << "rate_row,rate_col,n,coverage,se\n";
  for (const auto& c : cells) {
    out << "pi=" << text::format_double(c.alpha_pi) << ','
        << "m=" << text::format_double(c.alpha_m) << ',' << c.n << ','
        << text::format_double(c.coverage) << ','
        << text::format_double(c.coverage_se) << '\n';
  }
}

}  // namespace flip::sim
