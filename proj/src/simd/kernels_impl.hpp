#pragma once

#include "degsr/simd/kernels.hpp"

// Per-tier entry points collected into KernelTables by kernels.cpp.
#define DEGSR_DECLARE_KERNELS(ns)                                                           \
  namespace ns {                                                                            \
  void gemm(const GemmArgs& g);                                                             \
  void gemm_nt(const DotArgs& g);                                                           \
  void axpy(std::size_t n, float alpha, const float* x, float* y);                          \
  void relu_forward(std::size_t n, const float* x, float* y);                               \
  void relu_backward(std::size_t n, const float* x, const float* gy, float* gx);            \
  void adam_update(std::size_t n, float* theta, const float* grad, float* m, float* v,      \
                   const AdamCoefficients& c);                                              \
  }

namespace degsr::simd {
DEGSR_DECLARE_KERNELS(scalar)
DEGSR_DECLARE_KERNELS(avx2)
DEGSR_DECLARE_KERNELS(avx512)
}  // namespace degsr::simd

#undef DEGSR_DECLARE_KERNELS
