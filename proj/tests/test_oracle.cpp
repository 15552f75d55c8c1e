#include <doctest.h>

#include <cmath>
#include <string>

#include "flip/oracle.hpp"
#include "flip/util/error.hpp"

using namespace flip;
using namespace flip::oracle;

namespace {

std::string world_path(const char* name) {
  return std::string(FLIP_DATA_DIR) + "/worlds/" + name;
}

std::vector<OracleWeight> full_catalog() {
  std::vector<OracleWeight> out;
  for (const char* name : {"one", "target", "nontarget", "overlap", "entropy"})
    out.push_back(OracleWeight::parse(name));
  out.push_back(OracleWeight::wrap({WeightKind::smooth_trim, 20.0}));
  out.push_back(OracleWeight::hard_trim(0.2));
  out.push_back(OracleWeight::matching());
  return out;
}

// A tiny world where everyone is always treated.
DiscreteWorld always_treated_world() {
  return DiscreteWorld::parse_text(
      "horizon = 2\n"
      "support 1 = 0 1\n"
      "support 2 = 0 1\n"
      "x1_dist = 0.5 0.5\n"
      "propensity 1 = 1 1\n"
      "transition 2 = 0.5 0.5 | 0.5 0.5 | 0.2 0.8 | 0.2 0.8\n"
      "propensity 2 = 1 1 1 1 1 1 1 1\n"
      "outcome = 0 1 0 2 0 3 0 4 0 5 0 6 0 7 0 8\n",
      "test");
}

}  // namespace

TEST_CASE("world files parse and validate") {
  const auto w = DiscreteWorld::load(world_path("ident_t2.world"));
  CHECK(w.horizon == 2);
  CHECK(w.term_count() == 16.0);
  CHECK(w.support_index(1, 1.0) == 1);
  CHECK_THROWS_AS(w.support_index(1, 0.7), ValidationError);

  CHECK_THROWS_WITH_AS(
      DiscreteWorld::parse_text("horizon = 1\nsupport 1 = 0 1\n"
                                "x1_dist = 0.5 0.6\npropensity 1 = 0.5 0.5\n"
                                "outcome = 1 2 3 4\n",
                                "bad"),
      doctest::Contains("sum"), ValidationError);
  CHECK_THROWS_AS(
      DiscreteWorld::parse_text("horizon = 1\nsupport 1 = 0 1\n"
                                "x1_dist = 0.5 0.5\npropensity 1 = 0.5\n"
                                "outcome = 1 2 3 4\n",
                                "bad"),
      ValidationError);
}

TEST_CASE("single-timepoint flip effects equal weighted average effects") {
  for (const char* name : {"wate_a.world", "wate_b.world", "wate_c.world"}) {
    const auto w = DiscreteWorld::load(world_path(name));
    for (const auto& weight : full_catalog()) {
      const WatePair pair = exact_wate_single(w, weight);
      CHECK(std::fabs(pair.interventional - pair.wate) <= 1e-12);
    }
  }
}

TEST_CASE("constant weight recovers the plain average effect") {
  const auto w = DiscreteWorld::load(world_path("wate_a.world"));
  const auto pair = exact_wate_single(w, OracleWeight::parse("one"));
  double ate = 0.0;
  for (std::size_t x = 0; x < w.x1_dist.size(); ++x)
    ate += w.x1_dist[x] * (w.outcome_mean[2 * x + 1] - w.outcome_mean[2 * x]);
  CHECK(pair.wate == doctest::Approx(ate).epsilon(1e-14));
  CHECK(pair.interventional == doctest::Approx(ate).epsilon(1e-14));
}

TEST_CASE("propensity weight recovers the treated-population effect") {
  const auto w = DiscreteWorld::load(world_path("wate_a.world"));
  const auto pair = exact_wate_single(w, OracleWeight::parse("target"));
  double num = 0.0, den = 0.0;
  for (std::size_t x = 0; x < w.x1_dist.size(); ++x) {
    const double pi = w.propensities[0][x];
    num += w.x1_dist[x] * pi * (w.outcome_mean[2 * x + 1] - w.outcome_mean[2 * x]);
    den += w.x1_dist[x] * pi;
  }
  CHECK(pair.wate == doctest::Approx(num / den).epsilon(1e-14));
}

TEST_CASE("undefined estimand when the weight kills all mass") {
  const auto w = DiscreteWorld::parse_text(
      "horizon = 1\nsupport 1 = 0 1\nx1_dist = 0.5 0.5\n"
      "propensity 1 = 0 0\noutcome = 1 2 3 4\n",
      "test");
  CHECK_THROWS_AS(exact_wate_single(w, OracleWeight::parse("target")), Error);
}

TEST_CASE("g-formula enumeration: trivial single-timepoint case") {
  const auto w = DiscreteWorld::load(world_path("wate_a.world"));
  const double psi =
      exact_psi(w, TargetRegime::repeat(1, 1), OracleWeight::parse("one"));
  double direct = 0.0;
  for (std::size_t x = 0; x < w.x1_dist.size(); ++x)
    direct += w.x1_dist[x] * w.outcome_mean[2 * x + 1];
  CHECK(psi == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("identification under exact positivity violations") {
  const auto w = DiscreteWorld::load(world_path("ident_t2.world"));
  const auto always = TargetRegime::repeat(1, 2);
  for (const char* name : {"overlap", "smooth-trim:10"}) {
    const double psi = exact_psi(w, always, OracleWeight::parse(name));
    CHECK(std::isfinite(psi));
  }
  // Hard trimming is available in the oracle even though estimation excludes it.
  CHECK(std::isfinite(exact_psi(w, always, OracleWeight::hard_trim(0.2))));
  CHECK_THROWS_WITH_AS(exact_psi(w, always, OracleWeight::parse("one")),
                       doctest::Contains("identification"), IdentificationError);
}

TEST_CASE("forward and backward enumeration routes agree") {
  const auto ident = DiscreteWorld::load(world_path("ident_t2.world"));
  const auto inert = DiscreteWorld::load(world_path("inert_t2.world"));
  for (const auto* regime_bits : {"11", "00", "10"}) {
    const auto regime = TargetRegime::parse(regime_bits);
    for (const char* name : {"overlap", "smooth-trim:10", "target", "entropy"}) {
      const auto weight = OracleWeight::parse(name);
      CHECK(std::fabs(exact_psi(ident, regime, weight) -
                      exact_psi_sequential(ident, regime, weight)) <= 1e-12);
    }
    // The classical longitudinal g-formula (no weighting) on a
    // positivity-satisfying world, two code paths.
    const auto one = OracleWeight::parse("one");
    CHECK(std::fabs(exact_psi(inert, regime, one) -
                    exact_psi_sequential(inert, regime, one)) <= 1e-12);
  }
}

TEST_CASE("intervention propensities never fall below the natural target arm") {
  const auto w = DiscreteWorld::load(world_path("ident_t2.world"));
  for (const auto& weight : full_catalog()) {
    for (int t = 1; t <= w.horizon; ++t) {
      for (double p1 : w.propensities[static_cast<std::size_t>(t - 1)]) {
        for (int a : {0, 1}) {
          const double pa = (a == 1) ? p1 : 1.0 - p1;
          const double q = pa + weight.value(pa) * (1.0 - pa);
          CHECK(q >= pa - 1e-15);
        }
      }
    }
  }
}

TEST_CASE("mechanism simulation: certain flips and no-op flips") {
  const auto w = DiscreteWorld::load(world_path("ident_t2.world"));
  const auto regime = TargetRegime::parse("10");
  // f == 1 forces the static regime.
  const auto forced = simulate_flip(w, regime, OracleWeight::parse("one"), 500, 11);
  for (const auto& d : forced) CHECK(d.d == std::vector<int>({1, 0}));
  // f == 0 never intervenes: the outcome mean matches the observational mean.
  const auto natural =
      simulate_flip(w, regime, OracleWeight::hard_trim(1.5), 200000, 12);
  double mean = 0.0;
  for (const auto& d : natural) mean += d.y;
  mean /= static_cast<double>(natural.size());
  const auto en = enumerate_observational(w);
  double obs_mean = 0.0, psum = 0.0;
  for (std::size_t i = 0; i < en.panel.size(); ++i) {
    obs_mean += en.probability[i] * en.panel.outcome(i);
    psum += en.probability[i];
  }
  CHECK(psum == doctest::Approx(1.0).epsilon(1e-12));
  obs_mean /= psum;
  double var = 0.0;
  for (const auto& d : natural) var += (d.y - mean) * (d.y - mean);
  var /= static_cast<double>(natural.size());
  CHECK(std::fabs(mean - obs_mean) <=
        4.0 * std::sqrt(var / static_cast<double>(natural.size())));
}

TEST_CASE("mechanism frequencies match the exact intervention distribution") {
  const auto w = DiscreteWorld::load(world_path("ident_t2.world"));
  const auto regime = TargetRegime::parse("11");
  const auto weight = OracleWeight::parse("overlap");
  const auto dist = exact_intervention_distribution(w, regime, weight);
  const std::size_t n = 1000000;
  const auto draws = simulate_flip(w, regime, weight, n, 21);
  std::map<std::vector<int>, double> freq;
  for (const auto& d : draws) freq[d.d] += 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (const auto& [path, p] : dist) {
    total += p;
    const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    CHECK(std::fabs(freq[path] - p) <= 4.0 * se + 1e-12);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("stochastic amendment leaves the identified value unchanged") {
  const auto w = DiscreteWorld::load(world_path("ident_t2.world"));
  const auto regime = TargetRegime::repeat(1, 2);
  const auto weight = OracleWeight::parse("smooth-trim:10");
  const double psi = exact_psi(w, regime, weight);
  const auto draws =
      simulate_flip(w, regime, weight, 200000, 31, FlipMode::stochastic);
  double mean = 0.0;
  for (const auto& d : draws) mean += d.y;
  mean /= static_cast<double>(draws.size());
  double var = 0.0;
  for (const auto& d : draws) var += (d.y - mean) * (d.y - mean);
  var /= static_cast<double>(draws.size());
  CHECK(std::fabs(mean - psi) <=
        4.0 * std::sqrt(var / static_cast<double>(draws.size())));
}

TEST_CASE("treatment means: saturated world and empty-product case") {
  const auto w = always_treated_world();
  const auto always = TargetRegime::repeat(1, 2);
  const auto weight = OracleWeight::parse("overlap");
  CHECK(exact_treatment_mean(w, always, weight, 1) == doctest::Approx(1.0));
  CHECK(exact_treatment_mean(w, always, weight, 2) == doctest::Approx(1.0));

  const auto ident = DiscreteWorld::load(world_path("ident_t2.world"));
  // t_star = 1 is a plain average of Q_1(1 | x1), no ratio product.
  double direct = 0.0;
  for (std::size_t x = 0; x < ident.x1_dist.size(); ++x) {
    const double p1 = ident.propensities[0][x];
    direct += ident.x1_dist[x] * (p1 + weight.value(p1) * (1.0 - p1));
  }
  CHECK(exact_treatment_mean(ident, always, weight, 1) ==
        doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("treatment mean is invariant to structure strictly after t") {
  auto w = DiscreteWorld::load(world_path("ident_t2.world"));
  const auto weight = OracleWeight::parse("smooth-trim:10");
  const auto regime = TargetRegime::parse("11");
  const double before = exact_treatment_mean(w, regime, weight, 1);
  // Rewrite everything after t=1: transitions, later propensities, outcomes.
  for (auto& row : w.transitions[0]) row = {0.25, 0.75};
  for (auto& p : w.propensities[1]) p = 0.123;
  for (auto& y : w.outcome_mean) y += 17.0;
  w.validate();
  CHECK(exact_treatment_mean(w, regime, weight, 1) ==
        doctest::Approx(before).epsilon(1e-14));
}

TEST_CASE("treatment-mean enumeration matches mechanism simulation") {
  const auto w = DiscreteWorld::load(world_path("ident_t2.world"));
  const auto weight = OracleWeight::parse("overlap");
  for (const char* bits : {"11", "00"}) {
    const auto regime = TargetRegime::parse(bits);
    for (int t = 1; t <= 2; ++t) {
      const double exact = exact_treatment_mean(w, regime, weight, t);
      const std::size_t n = 200000;
      const auto draws = simulate_flip(w, regime, weight, n, 41);
      double mean = 0.0;
      for (const auto& d : draws) mean += d.d[static_cast<std::size_t>(t - 1)];
      mean /= static_cast<double>(n);
      const double se = std::sqrt(exact * (1.0 - exact) / static_cast<double>(n));
      CHECK(std::fabs(mean - exact) <= 4.0 * se + 1e-12);
    }
  }
}

TEST_CASE("sharp-null certification") {
  const auto inert = DiscreteWorld::load(world_path("inert_t2.world"));
  const auto always = TargetRegime::repeat(1, 2);
  const auto never = TargetRegime::repeat(0, 2);
  CHECK(treatment_inert(inert));

  const auto res =
      sharp_null_certify(inert, always, never, OracleWeight::parse("smooth-trim:10"));
  CHECK(res.inert);
  CHECK(res.certified);
  CHECK(std::fabs(res.value.ratio) <= 1e-12);
  CHECK(res.value.denominator > 0.1);

  // Identical regimes leave no treatment shift: precondition error.
  CHECK_THROWS_AS(sharp_null_certify(inert, always, always,
                                     OracleWeight::parse("overlap")),
                  Error);

  // A treatment-responsive world returns its value without any assertion.
  const auto ident = DiscreteWorld::load(world_path("ident_t2.world"));
  CHECK_FALSE(treatment_inert(ident));
  const auto res2 =
      sharp_null_certify(ident, always, never, OracleWeight::parse("overlap"));
  CHECK_FALSE(res2.inert);
  CHECK_FALSE(res2.certified);
  CHECK(std::fabs(res2.value.ratio) > 0.1);
}

TEST_CASE("observational enumeration covers exactly the reachable paths") {
  const auto w = DiscreteWorld::load(world_path("ident_t2.world"));
  const auto en = enumerate_observational(w);
  CHECK(en.panel.size() == 11);  // zero-probability arms are pruned
  double total = 0.0;
  for (double p : en.probability) {
    CHECK(p > 0.0);
    total += p;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exact nuisance lookups reproduce the world tables") {
  const auto w = DiscreteWorld::load(world_path("ident_t2.world"));
  const auto data = sample_observational(w, 200, 5);
  const SmoothWeight weight{WeightKind::overlap, 0.0};
  const auto regime = TargetRegime::repeat(1, 2);
  const auto ns = exact_nuisances(w, data, regime, weight);
  ns.validate();
  const auto tables =
      exact_sequential_regressions(w, regime, OracleWeight::wrap(weight));
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(ns.provenance[i] == -1);
    const int x1 = w.support_index(1, data.subject(i).covariates[0][0]);
    CHECK(ns.pi1[0][i] == w.propensities[0][static_cast<std::size_t>(x1)]);
    CHECK(ns.m1[0][i] ==
          tables.m[0][static_cast<std::size_t>(x1) * 2 + 1]);
    CHECK(ns.q0[0][i] + ns.q1[0][i] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("state budget refuses oversized enumerations") {
  const auto w = DiscreteWorld::load(world_path("ident_t2.world"));
  CHECK_THROWS_WITH_AS(
      exact_psi(w, TargetRegime::repeat(1, 2), OracleWeight::parse("overlap"), 8),
      doctest::Contains("budget"), Error);
}
