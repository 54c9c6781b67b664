#include "degsr/simd/cpu.hpp"

#include <cstdlib>
#include <string>

namespace degsr::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::avx512:
      return "avx512";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
#if defined(__x86_64__) || defined(__i386__)
    case Isa::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::avx512:
      return __builtin_cpu_supports("avx512f") && isa_supported(Isa::avx2);
#else
    default:
      return false;
#endif
  }
  return false;
}

Isa detect_isa() {
  if (isa_supported(Isa::avx512)) return Isa::avx512;
  if (isa_supported(Isa::avx2)) return Isa::avx2;
  return Isa::scalar;
}

namespace {

Isa resolve_active() {
  Isa best = detect_isa();
  const char* env = std::getenv("DEGSR_ISA");
  if (env == nullptr) return best;
  const std::string want(env);
  Isa cap = best;
  if (want == "scalar") {
    cap = Isa::scalar;
  } else if (want == "avx2") {
    cap = Isa::avx2;
  } else if (want == "avx512") {
    cap = Isa::avx512;
  }
  return static_cast<int>(cap) < static_cast<int>(best) ? cap : best;
}

}  // namespace

Isa active_isa() {
  static const Isa isa = resolve_active();
  return isa;
}

}  // namespace degsr::simd
