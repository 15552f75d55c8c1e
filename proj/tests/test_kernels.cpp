#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "flip/simd/kernels.hpp"
#include "flip/util/rng.hpp"

using flip::simd::Arch;
using flip::simd::KernelTable;

namespace {

std::vector<double> random_vec(std::size_t n, double lo, double hi,
                               std::uint64_t seed) {
  flip::rng::Stream s(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = s.uniform(lo, hi);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b,
                 double rel) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) {
      CHECK(std::isnan(a[i]));
      CHECK(std::isnan(b[i]));
      continue;
    }
    const double scale = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
    CHECK(std::fabs(a[i] - b[i]) <= rel * scale);
  }
}

void check_bitwise(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

}  // namespace

TEST_CASE("vexp matches libm and honors flush/saturate bounds") {
  for (Arch arch : flip::simd::available_archs()) {
    const KernelTable& k = flip::simd::table(arch);
    auto x = random_vec(1003, -700.0, 700.0, 7);
    x.push_back(-708.5);
    x.push_back(-1000.0);
    x.push_back(710.0);
    x.push_back(0.0);
    std::vector<double> out(x.size());
    k.vexp(x.data(), out.data(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] < flip::simd::kExpUnderflow) {
        CHECK(out[i] == 0.0);
      } else if (x[i] > flip::simd::kExpOverflow) {
        CHECK(std::isinf(out[i]));
      } else {
        const double ref = std::exp(x[i]);
        CHECK(std::fabs(out[i] - ref) <= 1e-13 * ref);
      }
    }
  }
}

TEST_CASE("vlog matches libm across magnitudes") {
  for (Arch arch : flip::simd::available_archs()) {
    const KernelTable& k = flip::simd::table(arch);
    std::vector<double> x = random_vec(1001, 1e-12, 1.0, 11);
    for (double v : {1e-300, 5e-310 /* subnormal */, 1.0, 2.0, 1e12, 0.9999999})
      x.push_back(v);
    std::vector<double> out(x.size());
    k.vlog(x.data(), out.data(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double ref = std::log(x[i]);
      const double scale = std::max(1.0, std::fabs(ref));
      CHECK(std::fabs(out[i] - ref) <= 5e-13 * scale);
    }
    // Edge semantics.
    const double edge_in[3] = {0.0, -1.0, std::numeric_limits<double>::infinity()};
    double edge_out[3];
    k.vlog(edge_in, edge_out, 3);
    CHECK(std::isinf(edge_out[0]));
    CHECK(edge_out[0] < 0.0);
    CHECK(std::isnan(edge_out[1]));
    CHECK(std::isinf(edge_out[2]));
  }
}

TEST_CASE("pure-arithmetic kernels agree bit-for-bit across variants") {
  const KernelTable& ref = flip::simd::table(Arch::scalar);
  const std::size_t n = 517;  // deliberately not a multiple of the lane width
  const auto pa = random_vec(n, 0.0, 1.0, 21);
  const auto s = random_vec(n, 0.0, 1.0, 22);
  const auto sp = random_vec(n, -3.0, 3.0, 23);
  const auto obs = random_vec(n, 0.0, 1.0, 24);
  const auto b = random_vec(n, -2.0, 2.0, 25);
  const auto r = random_vec(n, 0.0, 3.0, 26);
  const auto pn = random_vec(n, -2.0, 2.0, 27);
  const auto mo = random_vec(n, -2.0, 2.0, 28);

  for (Arch arch : flip::simd::available_archs()) {
    const KernelTable& k = flip::simd::table(arch);
    std::vector<double> qt1(n), qo1(n), qt2(n), qo2(n);
    ref.flip_propensities(n, pa.data(), s.data(), qt1.data(), qo1.data());
    k.flip_propensities(n, pa.data(), s.data(), qt2.data(), qo2.data());
    check_bitwise(qt1, qt2);
    check_bitwise(qo1, qo2);

    std::vector<double> br1(n), re1(n), br2(n), re2(n);
    ref.eif_terms(n, pa.data(), s.data(), sp.data(), obs.data(), br1.data(),
                  re1.data());
    k.eif_terms(n, pa.data(), s.data(), sp.data(), obs.data(), br2.data(),
                re2.data());
    check_bitwise(br1, br2);
    check_bitwise(re1, re2);

    std::vector<double> u1(n), u2(n);
    ref.pseudo_update(n, b.data(), r.data(), pn.data(), mo.data(), u1.data());
    k.pseudo_update(n, b.data(), r.data(), pn.data(), mo.data(), u2.data());
    check_bitwise(u1, u2);

    ref.mix_two(n, b.data(), pa.data(), pn.data(), s.data(), u1.data());
    k.mix_two(n, b.data(), pa.data(), pn.data(), s.data(), u2.data());
    check_bitwise(u1, u2);

    std::vector<double> c1 = b, c2 = b;
    ref.clamp(c1.data(), n, -0.5, 0.75);
    k.clamp(c2.data(), n, -0.5, 0.75);
    check_bitwise(c1, c2);
  }
}

TEST_CASE("weight batches agree across variants") {
  const KernelTable& ref = flip::simd::table(Arch::scalar);
  const std::size_t n = 509;
  auto p = random_vec(n, 0.0, 1.0, 31);
  p[0] = 0.0;
  p[1] = 1.0;  // endpoint conventions must match too
  for (Arch arch : flip::simd::available_archs()) {
    const KernelTable& k = flip::simd::table(arch);
    for (int kind = 0; kind <= 5; ++kind) {
      std::vector<double> v1(n), d1(n), v2(n), d2(n);
      const double rate = 17.5;
      ref.weight_batch(kind, rate, p.data(), n, v1.data(), d1.data());
      k.weight_batch(kind, rate, p.data(), n, v2.data(), d2.data());
      if (kind == flip::simd::weight_kind::smooth_trim ||
          kind == flip::simd::weight_kind::entropy) {
        check_close(v1, v2, 1e-13);
        // Infinite one-sided limits must agree exactly.
        for (std::size_t i = 0; i < n; ++i) {
          if (std::isinf(d1[i]))
            CHECK(d1[i] == d2[i]);
          else
            CHECK(std::fabs(d1[i] - d2[i]) <=
                  1e-13 * std::max(1.0, std::fabs(d1[i])));
        }
      } else {
        check_bitwise(v1, v2);
        check_bitwise(d1, d2);
      }
    }
  }
}

TEST_CASE("reductions agree across variants to accumulation tolerance") {
  const KernelTable& ref = flip::simd::table(Arch::scalar);
  const std::size_t n = 100003;
  const auto x = random_vec(n, -1.0, 1.0, 41);
  const auto y = random_vec(n, -1.0, 1.0, 42);
  for (Arch arch : flip::simd::available_archs()) {
    const KernelTable& k = flip::simd::table(arch);
    CHECK(std::fabs(ref.sum(x.data(), n) - k.sum(x.data(), n)) <= 1e-9);
    CHECK(std::fabs(ref.dot(x.data(), y.data(), n) - k.dot(x.data(), y.data(), n)) <=
          1e-9);
    CHECK(std::fabs(ref.sum_sq_about(x.data(), 0.25, n) -
                    k.sum_sq_about(x.data(), 0.25, n)) <= 1e-9);
  }
}

TEST_CASE("avx2 variant is exercised when the host supports it") {
#if defined(FLIP_HAVE_AVX2_TU) && defined(__x86_64__)
  if (__builtin_cpu_supports("avx2")) {
    CHECK(flip::simd::arch_available(Arch::avx2));
    bool saw_avx2 = false;
    for (Arch a : flip::simd::available_archs())
      if (a == Arch::avx2) saw_avx2 = true;
    CHECK(saw_avx2);
  }
#endif
  CHECK(flip::simd::arch_available(Arch::scalar));
}
