#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "flip/util/error.hpp"
#include "flip/util/rng.hpp"
#include "flip/weights.hpp"

using namespace flip;

namespace {

const std::vector<SmoothWeight> kCatalog = {
    {WeightKind::constant_one, 0.0}, {WeightKind::target_prop, 0.0},
    {WeightKind::nontarget_prop, 0.0}, {WeightKind::overlap, 0.0},
    {WeightKind::smooth_trim, 20.0},  {WeightKind::entropy, 0.0},
};

// Independent derivative oracle: second-order finite differences, one-sided
// at the domain boundary.
double fd_deriv(const SmoothWeight& w, double p, double h) {
  if (p - h < 0.0)
    return (-3.0 * weight_value(w, p) + 4.0 * weight_value(w, p + h) -
            weight_value(w, p + 2 * h)) /
           (2.0 * h);
  if (p + h > 1.0)
    return (3.0 * weight_value(w, p) - 4.0 * weight_value(w, p - h) +
            weight_value(w, p - 2 * h)) /
           (2.0 * h);
  return (weight_value(w, p + h) - weight_value(w, p - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("weight values match the catalog formulas") {
  CHECK(weight_value({WeightKind::overlap, 0}, 0.5) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(weight_value({WeightKind::smooth_trim, 20.0}, 0.0) == 0.0);
  CHECK(weight_value({WeightKind::constant_one, 0}, 0.3) == 1.0);
  CHECK(weight_value({WeightKind::target_prop, 0}, 0.37) == 0.37);
  CHECK(weight_value({WeightKind::nontarget_prop, 0}, 0.37) == doctest::Approx(0.63));
  // Entropy is normalized to [0,1] with 0 log 0 := 0.
  CHECK(weight_value({WeightKind::entropy, 0}, 0.5) == doctest::Approx(1.0));
  CHECK(weight_value({WeightKind::entropy, 0}, 0.0) == 0.0);
  CHECK(weight_value({WeightKind::entropy, 0}, 1.0) == 0.0);
  CHECK_THROWS_AS(weight_value({WeightKind::overlap, 0}, 1.5), ValidationError);
  CHECK_THROWS_AS(weight_value({WeightKind::overlap, 0}, -0.1), ValidationError);
}

TEST_CASE("weight derivatives are the analytic forms") {
  CHECK(weight_deriv({WeightKind::overlap, 0}, 0.5) == 0.0);
  CHECK(weight_deriv({WeightKind::smooth_trim, 20.0}, 0.0) == doctest::Approx(20.0));
  CHECK(weight_deriv({WeightKind::constant_one, 0}, 0.8) == 0.0);
  CHECK(std::isinf(weight_deriv({WeightKind::entropy, 0}, 0.0)));
  CHECK(weight_deriv({WeightKind::entropy, 0}, 0.0) > 0.0);
  CHECK(weight_deriv({WeightKind::entropy, 0}, 1.0) < 0.0);
}

TEST_CASE("derivatives agree with central differences on a 101-point grid") {
  const double h = 1e-6;
  for (const auto& w : kCatalog) {
    for (int j = 0; j <= 100; ++j) {
      // Entropy has unbounded one-sided limits at the endpoints, so its grid
      // stays in the interior; every other kind covers the full [0,1].
      const double p = (w.kind == WeightKind::entropy)
                           ? 0.005 + 0.99 * j / 100.0
                           : static_cast<double>(j) / 100.0;
      const double analytic = weight_deriv(w, p);
      const double fd = fd_deriv(w, p, h);
      CHECK(std::fabs(fd - analytic) <= 1e-5 * std::max(1.0, std::fabs(analytic)));
    }
  }
}

TEST_CASE("batch evaluation matches the scalar functions") {
  std::vector<double> p(101), v(101), d(101);
  for (int j = 0; j <= 100; ++j) p[static_cast<std::size_t>(j)] = j / 100.0;
  for (const auto& w : kCatalog) {
    weight_batch(w, p.data(), p.size(), v.data(), d.data());
    for (std::size_t j = 0; j < p.size(); ++j) {
      CHECK(std::fabs(v[j] - weight_value(w, p[j])) <= 1e-13);
      const double ref = weight_deriv(w, p[j]);
      if (std::isinf(ref))
        CHECK(d[j] == ref);
      else
        CHECK(std::fabs(d[j] - ref) <= 1e-13 * std::max(1.0, std::fabs(ref)));
    }
  }
}

TEST_CASE("every weight maps probabilities into the unit interval") {
  for (const auto& w : kCatalog) {
    for (int j = 0; j <= 1000; ++j) {
      const double v = weight_value(w, j / 1000.0);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-15);
    }
  }
}

TEST_CASE("target propensity follows the flip construction") {
  for (const auto& w : kCatalog) {
    CHECK(target_propensity(1.0, w) == doctest::Approx(1.0));
  }
  CHECK(target_propensity(0.0, {WeightKind::smooth_trim, 20.0}) == 0.0);
  CHECK(target_propensity(0.5, {WeightKind::overlap, 0}) == doctest::Approx(0.625));
}

TEST_CASE("intervention propensities conserve probability and reduce correctly") {
  const SmoothWeight overlap{WeightKind::overlap, 0};
  CHECK(intervention_propensity(1, 1, 0.5, overlap) ==
        doctest::Approx(target_propensity(0.5, overlap)));
  CHECK(intervention_propensity(0, 1, 0.5, overlap) == doctest::Approx(0.375));
  // Condition-1 weights assign the whole mass to the opposite arm at zero
  // target propensity.
  CHECK(intervention_propensity(0, 1, 0.0, {WeightKind::smooth_trim, 15.0}) ==
        doctest::Approx(1.0));
  for (const auto& w : kCatalog) {
    for (int j = 0; j <= 100; ++j) {
      const double p = j / 100.0;
      for (int a : {0, 1}) {
        const double q0 = intervention_propensity(0, a, p, w);
        const double q1 = intervention_propensity(1, a, p, w);
        CHECK(q0 >= 0.0);
        CHECK(q1 >= 0.0);
        CHECK(q0 + q1 == doctest::Approx(1.0).epsilon(1e-12));
        // The flip never decreases the target-arm probability.
        CHECK(intervention_propensity(a, a, p, w) >= p - 1e-12);
      }
    }
  }
}

TEST_CASE("propensity ratios honor conventions, errors and analytic bounds") {
  const SmoothWeight overlap{WeightKind::overlap, 0};
  CHECK(propensity_ratio(1, 1, 1.0, overlap) == doctest::Approx(1.0));
  CHECK(propensity_ratio(1, 1, 0.5, overlap) == doctest::Approx(1.25));
  // 0/0 convention.
  CHECK(propensity_ratio(1, 1, 0.0, {WeightKind::smooth_trim, 10.0}) == 0.0);
  // P(A=b)=0 with Q(b)>0 is an identification violation.
  CHECK_THROWS_AS(propensity_ratio(1, 1, 0.0, {WeightKind::constant_one, 0}),
                  IdentificationError);

  flip::rng::Stream stream(99);
  const SmoothWeight target{WeightKind::target_prop, 0};
  for (int trial = 0; trial < 20000; ++trial) {
    const double p = stream.uniform();
    const double k = stream.uniform(0.5, 80.0);
    const SmoothWeight st{WeightKind::smooth_trim, k};
    for (int b : {0, 1}) {
      CHECK(propensity_ratio(b, 1, p, st) <= 1.0 + k + 1e-9);
      CHECK(propensity_ratio(b, 1, p, overlap) <= 2.0 + 1e-9);
      CHECK(propensity_ratio(b, 1, p, target) <= 2.0 + 1e-9);
    }
  }
  CHECK(ratio_upper_bound({WeightKind::smooth_trim, 12.0}) == doctest::Approx(13.0));
  CHECK(ratio_upper_bound(overlap) == 2.0);
  CHECK(std::isinf(ratio_upper_bound({WeightKind::constant_one, 0})));
}

TEST_CASE("identification condition classification") {
  CHECK(check_identification({WeightKind::overlap, 0}) ==
        IdentificationCondition::condition1);
  CHECK(check_identification({WeightKind::smooth_trim, 5.0}) ==
        IdentificationCondition::condition1);
  CHECK(check_identification({WeightKind::entropy, 0}) ==
        IdentificationCondition::condition1);
  CHECK(check_identification({WeightKind::target_prop, 0}) ==
        IdentificationCondition::condition1);
  CHECK(check_identification({WeightKind::constant_one, 0}) ==
        IdentificationCondition::requires_positivity);
  CHECK(check_identification({WeightKind::nontarget_prop, 0}) ==
        IdentificationCondition::requires_positivity);
}

TEST_CASE("weight and regime parsing") {
  CHECK(SmoothWeight::parse("overlap").kind == WeightKind::overlap);
  CHECK(SmoothWeight::parse("smooth-trim:12.5").rate_k == doctest::Approx(12.5));
  CHECK(SmoothWeight::parse("one").kind == WeightKind::constant_one);
  CHECK_THROWS_AS(SmoothWeight::parse("smooth-trim:-1"), ConfigError);
  CHECK_THROWS_AS(SmoothWeight::parse("banana"), ConfigError);
  CHECK(TargetRegime::parse("1101").arms == std::vector<int>({1, 1, 0, 1}));
  CHECK(TargetRegime::repeat(0, 3).to_string() == "000");
  CHECK_THROWS_AS(TargetRegime::parse("12"), ConfigError);
}
