#include <stdexcept>
#include <string>

#include "kernels_impl.hpp"

namespace degsr::simd {
namespace {

#define DEGSR_TABLE(tier)                                                                  \
  KernelTable {                                                                            \
    Isa::tier, &tier::gemm, &tier::gemm_nt, &tier::axpy, &tier::relu_forward,              \
        &tier::relu_backward, &tier::adam_update                                           \
  }

const KernelTable kScalar = DEGSR_TABLE(scalar);
const KernelTable kAvx2 = DEGSR_TABLE(avx2);
const KernelTable kAvx512 = DEGSR_TABLE(avx512);

#undef DEGSR_TABLE

}  // namespace

const KernelTable& kernels_for(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::runtime_error("kernel tier '" + std::string(isa_name(isa)) +
                             "' is not supported on this CPU");
  }
  switch (isa) {
    case Isa::avx512:
      return kAvx512;
    case Isa::avx2:
      return kAvx2;
    case Isa::scalar:
      break;
  }
  return kScalar;
}

const KernelTable& kernels() {
  static const KernelTable& table = kernels_for(active_isa());
  return table;
}

}  // namespace degsr::simd
