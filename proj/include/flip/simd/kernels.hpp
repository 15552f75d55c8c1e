#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace flip::simd {

// Integer mirror of flip::WeightKind so the kernel layer does not depend on
// the weights module (which sits on top of it).
namespace weight_kind {
inline constexpr int constant_one = 0;
inline constexpr int target_prop = 1;
inline constexpr int nontarget_prop = 2;
inline constexpr int overlap = 3;
inline constexpr int smooth_trim = 4;
inline constexpr int entropy = 5;
}  // namespace weight_kind

// Inputs below -708 flush to zero in vexp (uniformly across variants); the
// library never needs subnormal exp values.
inline constexpr double kExpUnderflow = -708.0;
inline constexpr double kExpOverflow = 709.782712893384;

enum class Arch { scalar = 0, avx2 = 1 };

// One table of data-parallel kernels per architecture. The scalar table is
// the reference semantics; vector variants must agree with it bit-for-bit for
// the pure-arithmetic kernels and to <= 1e-13 relative for vexp/vlog-based
// ones (enforced by the equivalence tests).
struct KernelTable {
  const char* name;

  void (*vexp)(const double* x, double* out, std::size_t n);
  void (*vlog)(const double* x, double* out, std::size_t n);

  // Weight/flipping-probability catalog evaluated on a probability array.
  // Either output may be null. `k` is the smooth-trim rate.
  void (*weight_batch)(int kind, double k, const double* p, std::size_t n,
                       double* value, double* deriv);

  // q_target[i] = pa[i] + s[i]*(1 - pa[i]);  q_other[i] = (1 - pa[i])*(1 - s[i])
  void (*flip_propensities)(std::size_t n, const double* pa, const double* s,
                            double* q_target, double* q_other);

  // bracket[i] = 1 - s[i] + sp[i]*(1 - pa[i]);  resid[i] = obs_target[i] - pa[i]
  void (*eif_terms)(std::size_t n, const double* pa, const double* s,
                    const double* sp, const double* obs_target, double* bracket,
                    double* resid);

  // out[i] = b[i] + r[i]*(pnext[i] - m_obs[i])
  void (*pseudo_update)(std::size_t n, const double* b, const double* r,
                        const double* pnext, const double* m_obs, double* out);

  // out[i] = m0[i]*q0[i] + m1[i]*q1[i]
  void (*mix_two)(std::size_t n, const double* m0, const double* q0,
                  const double* m1, const double* q1, double* out);

  double (*sum)(const double* x, std::size_t n);
  double (*sum_sq_about)(const double* x, double center, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*clamp)(double* x, std::size_t n, double lo, double hi);
};

bool arch_available(Arch arch);
const KernelTable& table(Arch arch);
std::vector<Arch> available_archs();

// Best available table; override with FLIP_KERNELS=scalar|avx2 in the
// environment (checked once, at first use).
const KernelTable& active();
Arch active_arch();

}  // namespace flip::simd
