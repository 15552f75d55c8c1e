#include "flip/weights.hpp"

#include <cmath>
#include <limits>

#include "flip/util/error.hpp"
#include "flip/util/text.hpp"

namespace flip {

namespace {

constexpr double kLn2 = 0.6931471805599453094172321;

void require_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0))
    throw ValidationError(std::string(what) + " must lie in [0,1], got " +
                          text::format_double(p));
}

}  // namespace

SmoothWeight SmoothWeight::parse(std::string_view t) {
  if (t == "one" || t == "constant" || t == "constant-one")
    return {WeightKind::constant_one, 0.0};
  if (t == "target") return {WeightKind::target_prop, 0.0};
  if (t == "nontarget") return {WeightKind::nontarget_prop, 0.0};
  if (t == "overlap") return {WeightKind::overlap, 0.0};
  if (t == "entropy") return {WeightKind::entropy, 0.0};
  if (t.rfind("smooth-trim", 0) == 0) {
    auto rest = t.substr(11);
    if (rest.empty() || rest.front() != ':')
      throw ConfigError("smooth-trim weight needs a rate, e.g. smooth-trim:20");
    double k = 0.0;
    if (!text::parse_double(rest.substr(1), k) || !(k > 0.0))
      throw ConfigError("smooth-trim rate must be a positive decimal, got '" +
                        std::string(rest.substr(1)) + "'");
    return {WeightKind::smooth_trim, k};
  }
  throw ConfigError(
      "unknown weight '" + std::string(t) +
      "' (expected one|target|nontarget|overlap|smooth-trim:k|entropy)");
}

std::string SmoothWeight::name() const {
  switch (kind) {
    case WeightKind::constant_one:
      return "one";
    case WeightKind::target_prop:
      return "target";
    case WeightKind::nontarget_prop:
      return "nontarget";
    case WeightKind::overlap:
      return "overlap";
    case WeightKind::smooth_trim:
      return "smooth-trim:" + text::format_double(rate_k);
    case WeightKind::entropy:
      return "entropy";
  }
  return "?";
}

double weight_value(const SmoothWeight& w, double p) {
  require_prob(p, "weight argument");
  switch (w.kind) {
    case WeightKind::constant_one:
      return 1.0;
    case WeightKind::target_prop:
      return p;
    case WeightKind::nontarget_prop:
      return 1.0 - p;
    case WeightKind::overlap:
      return p * (1.0 - p);
    case WeightKind::smooth_trim:
      return 1.0 - std::exp(-w.rate_k * p);
    case WeightKind::entropy: {
      const double q = 1.0 - p;
      const double t0 = (p == 0.0) ? 0.0 : p * std::log(p);
      const double t1 = (q == 0.0) ? 0.0 : q * std::log(q);
      return -(t0 + t1) / kLn2;
    }
  }
  throw Error("unreachable weight kind");
}

double weight_deriv(const SmoothWeight& w, double p) {
  require_prob(p, "weight argument");
  switch (w.kind) {
    case WeightKind::constant_one:
      return 0.0;
    case WeightKind::target_prop:
      return 1.0;
    case WeightKind::nontarget_prop:
      return -1.0;
    case WeightKind::overlap:
      return 1.0 - 2.0 * p;
    case WeightKind::smooth_trim:
      return w.rate_k * std::exp(-w.rate_k * p);
    case WeightKind::entropy:
      // One-sided limits at the endpoints.
      if (p == 0.0) return std::numeric_limits<double>::infinity();
      if (p == 1.0) return -std::numeric_limits<double>::infinity();
      return (std::log(1.0 - p) - std::log(p)) / kLn2;
  }
  throw Error("unreachable weight kind");
}

void weight_batch(const SmoothWeight& w, const double* p, std::size_t n,
                  double* value, double* deriv) {
  simd::active().weight_batch(static_cast<int>(w.kind), w.rate_k, p, n, value,
                              deriv);
}

double target_propensity(double pi_target, const SmoothWeight& w) {
  require_prob(pi_target, "target propensity");
  const double q = pi_target + weight_value(w, pi_target) * (1.0 - pi_target);
  return q < 0.0 ? 0.0 : (q > 1.0 ? 1.0 : q);
}

double intervention_propensity(int b, int a_t, double pi_target,
                               const SmoothWeight& w) {
  if ((b != 0 && b != 1) || (a_t != 0 && a_t != 1))
    throw ValidationError("treatment values must be 0 or 1");
  const double q_target = target_propensity(pi_target, w);
  return b == a_t ? q_target : 1.0 - q_target;
}

double propensity_ratio(int b, int a_t, double pi_target,
                        const SmoothWeight& w) {
  const double q = intervention_propensity(b, a_t, pi_target, w);
  const double pb = (b == a_t) ? pi_target : 1.0 - pi_target;
  if (pb == 0.0) {
    // Observed data almost surely never reaches this branch; the 0/0
    // convention only matters for degenerate synthetic inputs.
    if (q == 0.0) return 0.0;
    throw IdentificationError(
        "intervention assigns positive probability to an arm the observed "
        "propensity rules out (P(A=b)=0 with Q(b)>0)");
  }
  return q / pb;
}

IdentificationCondition check_identification(const SmoothWeight& w) {
  switch (w.kind) {
    case WeightKind::target_prop:
    case WeightKind::overlap:
    case WeightKind::smooth_trim:
    case WeightKind::entropy:
      return IdentificationCondition::condition1;
    case WeightKind::constant_one:
    case WeightKind::nontarget_prop:
      return IdentificationCondition::requires_positivity;
  }
  throw Error("unreachable weight kind");
}

double ratio_upper_bound(const SmoothWeight& w) {
  switch (w.kind) {
    case WeightKind::target_prop:
      return 2.0;  // r(target) = 2 - p
    case WeightKind::overlap:
      return 2.0;  // r(target) = 1 + (1-p)^2
    case WeightKind::smooth_trim:
      return 1.0 + w.rate_k;  // s(p)/p <= k
    case WeightKind::constant_one:
    case WeightKind::nontarget_prop:
    case WeightKind::entropy:
      return std::numeric_limits<double>::infinity();
  }
  throw Error("unreachable weight kind");
}

TargetRegime TargetRegime::parse(std::string_view bits) {
  if (bits.empty()) throw ConfigError("empty target regime");
  TargetRegime r;
  r.arms.reserve(bits.size());
  for (char c : bits) {
    if (c != '0' && c != '1')
      throw ConfigError("target regime must be a bitstring like 1100, got '" +
                        std::string(bits) + "'");
    r.arms.push_back(c - '0');
  }
  return r;
}

TargetRegime TargetRegime::repeat(int a, int horizon) {
  if (a != 0 && a != 1) throw ConfigError("target arm must be 0 or 1");
  TargetRegime r;
  r.arms.assign(static_cast<std::size_t>(horizon), a);
  return r;
}

std::string TargetRegime::to_string() const {
  std::string s;
  for (int a : arms) s.push_back(static_cast<char>('0' + a));
  return s;
}

}  // namespace flip
