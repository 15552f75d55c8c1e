#include <cstdlib>
#include <string>

#include "flip/simd/kernels.hpp"
#include "flip/util/error.hpp"

namespace flip::simd {

const KernelTable& scalar_table();
#if defined(__AVX2__) || defined(FLIP_HAVE_AVX2_TU)
const KernelTable& avx2_table();
#endif

bool arch_available(Arch arch) {
  switch (arch) {
    case Arch::scalar:
      return true;
    case Arch::avx2:
#if defined(FLIP_HAVE_AVX2_TU) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Arch arch) {
  switch (arch) {
    case Arch::scalar:
      return scalar_table();
    case Arch::avx2:
#if defined(FLIP_HAVE_AVX2_TU) && (defined(__x86_64__) || defined(__i386__))
      if (arch_available(Arch::avx2)) return avx2_table();
#endif
      throw Error("avx2 kernels are not available on this machine");
  }
  throw Error("unknown kernel architecture");
}

std::vector<Arch> available_archs() {
  std::vector<Arch> out{Arch::scalar};
  if (arch_available(Arch::avx2)) out.push_back(Arch::avx2);
  return out;
}

namespace {

Arch select_arch() {
  if (const char* env = std::getenv("FLIP_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return Arch::scalar;
    if (v == "avx2") {
      if (!arch_available(Arch::avx2))
        throw Error("FLIP_KERNELS=avx2 requested but avx2 is unavailable");
      return Arch::avx2;
    }
    throw Error("FLIP_KERNELS must be 'scalar' or 'avx2', got '" + v + "'");
  }
  return arch_available(Arch::avx2) ? Arch::avx2 : Arch::scalar;
}

}  // namespace

Arch active_arch() {
  static const Arch a = select_arch();
  return a;
}

const KernelTable& active() { return table(active_arch()); }

}  // namespace flip::simd
