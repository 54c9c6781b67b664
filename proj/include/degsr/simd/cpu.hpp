#pragma once

#include <string_view>

namespace degsr::simd {

// Instruction-set tiers with a dedicated kernel implementation.
enum class Isa { scalar = 0, avx2 = 1, avx512 = 2 };

std::string_view isa_name(Isa isa);

// Best tier the running CPU supports.
Isa detect_isa();

bool isa_supported(Isa isa);

// Tier used by kernels(): detect_isa() capped by the DEGSR_ISA environment
// variable ("scalar", "avx2", "avx512"). Resolved once per process.
Isa active_isa();

}  // namespace degsr::simd
