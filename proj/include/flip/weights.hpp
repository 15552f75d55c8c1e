#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "flip/simd/kernels.hpp"

namespace flip {

// Smooth weight / flipping-probability functions of the target propensity
// score. Hard trimming and matching-style min-weights are deliberately not in
// this catalog: they are not twice differentiable, so the estimation path
// cannot use them. The exact oracle carries its own extended catalog.
enum class WeightKind : int {
  constant_one = simd::weight_kind::constant_one,
  target_prop = simd::weight_kind::target_prop,
  nontarget_prop = simd::weight_kind::nontarget_prop,
  overlap = simd::weight_kind::overlap,
  smooth_trim = simd::weight_kind::smooth_trim,
  entropy = simd::weight_kind::entropy,
};

struct SmoothWeight {
  WeightKind kind = WeightKind::overlap;
  double rate_k = 20.0;  // smooth_trim only

  // Accepts one|target|nontarget|overlap|smooth-trim:k|entropy.
  static SmoothWeight parse(std::string_view text);
  std::string name() const;
};

enum class IdentificationCondition {
  condition1,           // s(0) = 0: identified under arbitrary positivity violations
  requires_positivity,  // needs target-arm positivity
};

// s(p). Domain [0,1]; throws outside.
double weight_value(const SmoothWeight& w, double p);

// s'(p). For entropy the endpoint values are the one-sided limits
// (+inf at 0, -inf at 1).
double weight_deriv(const SmoothWeight& w, double p);

// Batch evaluation through the kernel layer; either output may be null.
void weight_batch(const SmoothWeight& w, const double* p, std::size_t n,
                  double* value, double* deriv);

// Q(target arm) = p + s(p)(1 - p).
double target_propensity(double pi_target, const SmoothWeight& w);

// Q(b) = P(A=b) + {2*1(b=a_t)-1} s(p)(1-p), with P(A=b) = p if b==a_t else 1-p.
double intervention_propensity(int b, int a_t, double pi_target,
                               const SmoothWeight& w);

// r(b) = Q(b) / P(A=b). Returns 0 when both vanish; throws
// IdentificationError when P(A=b)=0 but Q(b)>0.
double propensity_ratio(int b, int a_t, double pi_target, const SmoothWeight& w);

IdentificationCondition check_identification(const SmoothWeight& w);

// Analytic sup over p of max_b r(b); +inf where no finite bound exists
// (constant_one, nontarget_prop, entropy).
double ratio_upper_bound(const SmoothWeight& w);

// A target treatment regime, one arm per timepoint.
struct TargetRegime {
  std::vector<int> arms;

  int horizon() const { return static_cast<int>(arms.size()); }
  int arm(int t) const { return arms.at(static_cast<std::size_t>(t - 1)); }

  static TargetRegime parse(std::string_view bits);  // e.g. "1101"
  static TargetRegime repeat(int a, int horizon);
  std::string to_string() const;
};

}  // namespace flip
