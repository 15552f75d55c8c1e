// AVX2 variants of the data-parallel kernels. Pure-arithmetic kernels keep
// the exact operation order of the scalar reference (mul/add, no FMA) so the
// two paths agree bit-for-bit; vexp/vlog use polynomial evaluations that the
// equivalence tests hold to <= 1e-13 relative against libm.

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>
#include <cstdint>
#include <limits>

#include "flip/simd/kernels.hpp"

namespace flip::simd {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLn2 = 0.6931471805599453094172321;

inline __m256d blend_where(__m256d mask, __m256d a, __m256d b) {
  // mask lanes all-ones pick a, zeros pick b.
  return _mm256_blendv_pd(b, a, mask);
}

// exp(x) for x in [-708, 709.78]; flushes below, saturates above, NaN in ->
// NaN out. Cody-Waite reduction, degree-13 Taylor on [-ln2/2, ln2/2].
inline __m256d exp4(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);

  const __m256d xs = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(-709.0)),
                                   _mm256_set1_pd(709.5));
  const __m256d nd = _mm256_round_pd(_mm256_mul_pd(xs, log2e),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_sub_pd(xs, _mm256_mul_pd(nd, ln2_hi));
  r = _mm256_sub_pd(r, _mm256_mul_pd(nd, ln2_lo));

  __m256d p = _mm256_set1_pd(1.6059043836821613e-10);  // 1/13!
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.08767569878681e-09));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.505210838544172e-08));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.755731922398589e-07));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985893e-06));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.48015873015873e-05));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.984126984126984e-04));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.3888888888888889e-03));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(8.333333333333333e-03));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(4.1666666666666664e-02));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.6666666666666666e-01));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  // Scale by 2^n through the exponent bits; |n| <= 1022 here.
  const __m128i n32 = _mm256_cvtpd_epi32(nd);
  const __m256i n64 = _mm256_cvtepi32_epi64(n32);
  const __m256i bits =
      _mm256_slli_epi64(_mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
  const __m256d scale = _mm256_castsi256_pd(bits);
  __m256d res = _mm256_mul_pd(p, scale);

  const __m256d under =
      _mm256_cmp_pd(x, _mm256_set1_pd(kExpUnderflow), _CMP_LT_OQ);
  const __m256d over =
      _mm256_cmp_pd(x, _mm256_set1_pd(kExpOverflow), _CMP_GT_OQ);
  const __m256d is_nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  res = blend_where(under, _mm256_setzero_pd(), res);
  res = blend_where(over, _mm256_set1_pd(kInf), res);
  res = blend_where(is_nan, x, res);
  return res;
}

// log(x): x = 2^e * m with m in [sqrt(1/2), sqrt(2)), atanh-series in
// (m-1)/(m+1) through s^17.
inline __m256d log4(__m256d x) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d min_normal = _mm256_set1_pd(2.2250738585072014e-308);

  // Normalize subnormal inputs.
  const __m256d sub_mask = _mm256_and_pd(_mm256_cmp_pd(x, min_normal, _CMP_LT_OQ),
                                         _mm256_cmp_pd(x, zero, _CMP_GT_OQ));
  const __m256d x_adj =
      blend_where(sub_mask, _mm256_mul_pd(x, _mm256_set1_pd(0x1.0p54)), x);

  const __m256i bits = _mm256_castpd_si256(x_adj);
  __m256i e64 = _mm256_sub_epi64(
      _mm256_and_si256(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(0x7FF)),
      _mm256_set1_epi64x(1023));
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(
      _mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFll)),
      _mm256_set1_epi64x(0x3FF0000000000000ll)));

  const __m256d root2 = _mm256_set1_pd(1.4142135623730951);
  const __m256d fold = _mm256_cmp_pd(m, root2, _CMP_GT_OQ);
  m = blend_where(fold, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), m);
  e64 = _mm256_add_epi64(e64, _mm256_and_si256(_mm256_castpd_si256(fold),
                                               _mm256_set1_epi64x(1)));
  // Undo the 2^54 normalization in the exponent for subnormal lanes.
  const __m256i sub_adj = _mm256_and_si256(_mm256_castpd_si256(sub_mask),
                                           _mm256_set1_epi64x(54));
  e64 = _mm256_sub_epi64(e64, sub_adj);

  // Small signed e -> double via the 2^52 bias trick.
  const __m256i biased = _mm256_add_epi64(e64, _mm256_set1_epi64x(4096));
  const __m256d ed = _mm256_sub_pd(
      _mm256_castsi256_pd(
          _mm256_or_si256(biased, _mm256_set1_epi64x(0x4330000000000000ll))),
      _mm256_set1_pd(4503599627370496.0 + 4096.0));

  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d s = _mm256_div_pd(_mm256_sub_pd(m, one), _mm256_add_pd(m, one));
  const __m256d z = _mm256_mul_pd(s, s);
  __m256d poly = _mm256_set1_pd(0.058823529411764705);  // 1/17
  poly = _mm256_fmadd_pd(poly, z, _mm256_set1_pd(0.06666666666666667));
  poly = _mm256_fmadd_pd(poly, z, _mm256_set1_pd(0.07692307692307693));
  poly = _mm256_fmadd_pd(poly, z, _mm256_set1_pd(0.09090909090909091));
  poly = _mm256_fmadd_pd(poly, z, _mm256_set1_pd(0.1111111111111111));
  poly = _mm256_fmadd_pd(poly, z, _mm256_set1_pd(0.14285714285714285));
  poly = _mm256_fmadd_pd(poly, z, _mm256_set1_pd(0.2));
  poly = _mm256_fmadd_pd(poly, z, _mm256_set1_pd(0.3333333333333333));
  poly = _mm256_fmadd_pd(poly, z, one);
  const __m256d atanh2 = _mm256_mul_pd(_mm256_set1_pd(2.0), _mm256_mul_pd(s, poly));

  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  __m256d res = _mm256_add_pd(_mm256_mul_pd(ed, ln2_hi),
                              _mm256_fmadd_pd(ed, ln2_lo, atanh2));

  const __m256d qnan = _mm256_set1_pd(std::numeric_limits<double>::quiet_NaN());
  const __m256d is_zero = _mm256_cmp_pd(x, zero, _CMP_EQ_OQ);
  const __m256d is_neg = _mm256_cmp_pd(x, zero, _CMP_LT_OQ);
  const __m256d is_inf = _mm256_cmp_pd(x, _mm256_set1_pd(kInf), _CMP_EQ_OQ);
  const __m256d is_nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  res = blend_where(is_zero, _mm256_set1_pd(-kInf), res);
  res = blend_where(is_neg, qnan, res);
  res = blend_where(is_inf, _mm256_set1_pd(kInf), res);
  res = blend_where(is_nan, x, res);
  return res;
}

void vexp_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) {
    if (x[i] < kExpUnderflow)
      out[i] = 0.0;
    else if (x[i] > kExpOverflow)
      out[i] = kInf;
    else
      out[i] = std::exp(x[i]);
  }
}

void vlog_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, log4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = std::log(x[i]);
}

void weight_batch_avx2(int kind, double k, const double* p, std::size_t n,
                       double* value, double* deriv) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  switch (kind) {
    case weight_kind::constant_one:
      for (; i + 4 <= n; i += 4) {
        if (value) _mm256_storeu_pd(value + i, one);
        if (deriv) _mm256_storeu_pd(deriv + i, _mm256_setzero_pd());
      }
      for (; i < n; ++i) {
        if (value) value[i] = 1.0;
        if (deriv) deriv[i] = 0.0;
      }
      break;
    case weight_kind::target_prop:
      for (; i + 4 <= n; i += 4) {
        if (value) _mm256_storeu_pd(value + i, _mm256_loadu_pd(p + i));
        if (deriv) _mm256_storeu_pd(deriv + i, one);
      }
      for (; i < n; ++i) {
        if (value) value[i] = p[i];
        if (deriv) deriv[i] = 1.0;
      }
      break;
    case weight_kind::nontarget_prop:
      for (; i + 4 <= n; i += 4) {
        const __m256d pv = _mm256_loadu_pd(p + i);
        if (value) _mm256_storeu_pd(value + i, _mm256_sub_pd(one, pv));
        if (deriv) _mm256_storeu_pd(deriv + i, _mm256_set1_pd(-1.0));
      }
      for (; i < n; ++i) {
        if (value) value[i] = 1.0 - p[i];
        if (deriv) deriv[i] = -1.0;
      }
      break;
    case weight_kind::overlap:
      for (; i + 4 <= n; i += 4) {
        const __m256d pv = _mm256_loadu_pd(p + i);
        if (value)
          _mm256_storeu_pd(value + i, _mm256_mul_pd(pv, _mm256_sub_pd(one, pv)));
        if (deriv)
          _mm256_storeu_pd(
              deriv + i,
              _mm256_sub_pd(one, _mm256_mul_pd(_mm256_set1_pd(2.0), pv)));
      }
      for (; i < n; ++i) {
        if (value) value[i] = p[i] * (1.0 - p[i]);
        if (deriv) deriv[i] = 1.0 - 2.0 * p[i];
      }
      break;
    case weight_kind::smooth_trim: {
      const __m256d mk = _mm256_set1_pd(-k);
      const __m256d kk = _mm256_set1_pd(k);
      for (; i + 4 <= n; i += 4) {
        const __m256d pv = _mm256_loadu_pd(p + i);
        const __m256d e = exp4(_mm256_mul_pd(mk, pv));
        if (value) _mm256_storeu_pd(value + i, _mm256_sub_pd(one, e));
        if (deriv) _mm256_storeu_pd(deriv + i, _mm256_mul_pd(kk, e));
      }
      for (; i < n; ++i) {
        const double t = -k * p[i];
        const double e = (t < kExpUnderflow) ? 0.0 : std::exp(t);
        if (value) value[i] = 1.0 - e;
        if (deriv) deriv[i] = k * e;
      }
      break;
    }
    case weight_kind::entropy: {
      const __m256d inv_ln2 = _mm256_set1_pd(1.0 / kLn2);
      const __m256d zero = _mm256_setzero_pd();
      for (; i + 4 <= n; i += 4) {
        const __m256d pv = _mm256_loadu_pd(p + i);
        const __m256d qv = _mm256_sub_pd(one, pv);
        const __m256d lp = log4(pv);
        const __m256d lq = log4(qv);
        if (value) {
          __m256d t0 = _mm256_mul_pd(pv, lp);
          __m256d t1 = _mm256_mul_pd(qv, lq);
          t0 = blend_where(_mm256_cmp_pd(pv, zero, _CMP_EQ_OQ), zero, t0);
          t1 = blend_where(_mm256_cmp_pd(qv, zero, _CMP_EQ_OQ), zero, t1);
          const __m256d v = _mm256_mul_pd(
              _mm256_sub_pd(zero, _mm256_add_pd(t0, t1)), inv_ln2);
          _mm256_storeu_pd(value + i, v);
        }
        if (deriv)
          _mm256_storeu_pd(deriv + i,
                           _mm256_mul_pd(_mm256_sub_pd(lq, lp), inv_ln2));
      }
      for (; i < n; ++i) {
        const double q = 1.0 - p[i];
        const double t0 = (p[i] == 0.0) ? 0.0 : p[i] * std::log(p[i]);
        const double t1 = (q == 0.0) ? 0.0 : q * std::log(q);
        if (value) value[i] = -(t0 + t1) / kLn2;
        if (deriv) deriv[i] = (std::log(q) - std::log(p[i])) / kLn2;
      }
      break;
    }
    default:
      for (; i < n; ++i) {
        if (value) value[i] = std::numeric_limits<double>::quiet_NaN();
        if (deriv) deriv[i] = std::numeric_limits<double>::quiet_NaN();
      }
  }
}

void flip_propensities_avx2(std::size_t n, const double* pa, const double* s,
                            double* q_target, double* q_other) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d pav = _mm256_loadu_pd(pa + i);
    const __m256d sv = _mm256_loadu_pd(s + i);
    const __m256d comp = _mm256_sub_pd(one, pav);
    _mm256_storeu_pd(q_target + i, _mm256_add_pd(pav, _mm256_mul_pd(sv, comp)));
    _mm256_storeu_pd(q_other + i, _mm256_mul_pd(comp, _mm256_sub_pd(one, sv)));
  }
  for (; i < n; ++i) {
    const double comp = 1.0 - pa[i];
    q_target[i] = pa[i] + s[i] * comp;
    q_other[i] = comp * (1.0 - s[i]);
  }
}

void eif_terms_avx2(std::size_t n, const double* pa, const double* s,
                    const double* sp, const double* obs_target, double* bracket,
                    double* resid) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d pav = _mm256_loadu_pd(pa + i);
    const __m256d sv = _mm256_loadu_pd(s + i);
    const __m256d spv = _mm256_loadu_pd(sp + i);
    const __m256d ov = _mm256_loadu_pd(obs_target + i);
    _mm256_storeu_pd(
        bracket + i,
        _mm256_add_pd(_mm256_sub_pd(one, sv),
                      _mm256_mul_pd(spv, _mm256_sub_pd(one, pav))));
    _mm256_storeu_pd(resid + i, _mm256_sub_pd(ov, pav));
  }
  for (; i < n; ++i) {
    bracket[i] = 1.0 - s[i] + sp[i] * (1.0 - pa[i]);
    resid[i] = obs_target[i] - pa[i];
  }
}

void pseudo_update_avx2(std::size_t n, const double* b, const double* r,
                        const double* pnext, const double* m_obs, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d diff =
        _mm256_sub_pd(_mm256_loadu_pd(pnext + i), _mm256_loadu_pd(m_obs + i));
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(b + i),
                                   _mm256_mul_pd(_mm256_loadu_pd(r + i), diff)));
  }
  for (; i < n; ++i) out[i] = b[i] + r[i] * (pnext[i] - m_obs[i]);
}

void mix_two_avx2(std::size_t n, const double* m0, const double* q0,
                  const double* m1, const double* q1, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d a = _mm256_mul_pd(_mm256_loadu_pd(m0 + i), _mm256_loadu_pd(q0 + i));
    const __m256d b = _mm256_mul_pd(_mm256_loadu_pd(m1 + i), _mm256_loadu_pd(q1 + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(a, b));
  }
  for (; i < n; ++i) out[i] = m0[i] * q0[i] + m1[i] * q1[i];
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double total = hsum(acc);
  for (; i < n; ++i) total += x[i];
  return total;
}

double sum_sq_about_avx2(const double* x, double center, std::size_t n) {
  const __m256d c = _mm256_set1_pd(center);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), c);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double total = hsum(acc);
  for (; i < n; ++i) {
    const double d = x[i] - center;
    total += d * d;
  }
  return total;
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(
        acc, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  double total = hsum(acc);
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

void clamp_avx2(double* x, std::size_t n, double lo, double hi) {
  const __m256d vlo = _mm256_set1_pd(lo);
  const __m256d vhi = _mm256_set1_pd(hi);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    v = _mm256_min_pd(_mm256_max_pd(v, vlo), vhi);
    _mm256_storeu_pd(x + i, v);
  }
  for (; i < n; ++i) {
    if (x[i] < lo) x[i] = lo;
    if (x[i] > hi) x[i] = hi;
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t = {
      "avx2",
      vexp_avx2,
      vlog_avx2,
      weight_batch_avx2,
      flip_propensities_avx2,
      eif_terms_avx2,
      pseudo_update_avx2,
      mix_two_avx2,
      sum_avx2,
      sum_sq_about_avx2,
      dot_avx2,
      clamp_avx2,
  };
  return t;
}

}  // namespace flip::simd

#endif  // __AVX2__
