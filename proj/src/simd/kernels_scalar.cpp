#include <cmath>
#include <limits>

#include "flip/simd/kernels.hpp"

// Reference semantics for every kernel. Vector variants are validated
// against this file element-by-element.

namespace flip::simd {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLn2 = 0.6931471805599453094172321;

void vexp_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] < kExpUnderflow) {
      out[i] = 0.0;
    } else if (x[i] > kExpOverflow) {
      out[i] = kInf;
    } else {
      out[i] = std::exp(x[i]);
    }
  }
}

void vlog_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(x[i]);
}

void weight_batch_scalar(int kind, double k, const double* p, std::size_t n,
                         double* value, double* deriv) {
  switch (kind) {
    case weight_kind::constant_one:
      for (std::size_t i = 0; i < n; ++i) {
        if (value) value[i] = 1.0;
        if (deriv) deriv[i] = 0.0;
      }
      break;
    case weight_kind::target_prop:
      for (std::size_t i = 0; i < n; ++i) {
        if (value) value[i] = p[i];
        if (deriv) deriv[i] = 1.0;
      }
      break;
    case weight_kind::nontarget_prop:
      for (std::size_t i = 0; i < n; ++i) {
        if (value) value[i] = 1.0 - p[i];
        if (deriv) deriv[i] = -1.0;
      }
      break;
    case weight_kind::overlap:
      for (std::size_t i = 0; i < n; ++i) {
        if (value) value[i] = p[i] * (1.0 - p[i]);
        if (deriv) deriv[i] = 1.0 - 2.0 * p[i];
      }
      break;
    case weight_kind::smooth_trim:
      for (std::size_t i = 0; i < n; ++i) {
        const double t = -k * p[i];
        const double e = (t < kExpUnderflow) ? 0.0 : std::exp(t);
        if (value) value[i] = 1.0 - e;
        if (deriv) deriv[i] = k * e;
      }
      break;
    case weight_kind::entropy:
      for (std::size_t i = 0; i < n; ++i) {
        const double q = 1.0 - p[i];
        // 0*log(0) := 0 at both endpoints.
        const double t0 = (p[i] == 0.0) ? 0.0 : p[i] * std::log(p[i]);
        const double t1 = (q == 0.0) ? 0.0 : q * std::log(q);
        if (value) value[i] = -(t0 + t1) / kLn2;
        // One-sided limits at the endpoints: +inf at 0, -inf at 1.
        if (deriv) deriv[i] = (std::log(q) - std::log(p[i])) / kLn2;
      }
      break;
    default:
      for (std::size_t i = 0; i < n; ++i) {
        if (value) value[i] = std::numeric_limits<double>::quiet_NaN();
        if (deriv) deriv[i] = std::numeric_limits<double>::quiet_NaN();
      }
  }
}

void flip_propensities_scalar(std::size_t n, const double* pa, const double* s,
                              double* q_target, double* q_other) {
  for (std::size_t i = 0; i < n; ++i) {
    const double comp = 1.0 - pa[i];
    q_target[i] = pa[i] + s[i] * comp;
    q_other[i] = comp * (1.0 - s[i]);
  }
}

void eif_terms_scalar(std::size_t n, const double* pa, const double* s,
                      const double* sp, const double* obs_target,
                      double* bracket, double* resid) {
  for (std::size_t i = 0; i < n; ++i) {
    bracket[i] = 1.0 - s[i] + sp[i] * (1.0 - pa[i]);
    resid[i] = obs_target[i] - pa[i];
  }
}

void pseudo_update_scalar(std::size_t n, const double* b, const double* r,
                          const double* pnext, const double* m_obs,
                          double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = b[i] + r[i] * (pnext[i] - m_obs[i]);
}

void mix_two_scalar(std::size_t n, const double* m0, const double* q0,
                    const double* m1, const double* q1, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = m0[i] * q0[i] + m1[i] * q1[i];
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double sum_sq_about_scalar(const double* x, double center, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - center;
    acc += d * d;
  }
  return acc;
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void clamp_scalar(double* x, std::size_t n, double lo, double hi) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] < lo) x[i] = lo;
    if (x[i] > hi) x[i] = hi;
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t = {
      "scalar",
      vexp_scalar,
      vlog_scalar,
      weight_batch_scalar,
      flip_propensities_scalar,
      eif_terms_scalar,
      pseudo_update_scalar,
      mix_two_scalar,
      sum_scalar,
      sum_sq_about_scalar,
      dot_scalar,
      clamp_scalar,
  };
  return t;
}

}  // namespace flip::simd
