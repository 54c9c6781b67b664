#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "degsr/simd/cpu.hpp"

namespace degsr::simd {

// C[m x n] (row-major, leading dimension ldc) = A[m x k] * B[k x n], added
// onto C when accumulate is set. A and B are addressed through arbitrary
// row/column strides so transposed operands need no copy.
struct GemmArgs {
  int m = 0;
  int n = 0;
  int k = 0;
  const float* a = nullptr;
  std::ptrdiff_t a_row_stride = 0;
  std::ptrdiff_t a_col_stride = 1;
  const float* b = nullptr;
  std::ptrdiff_t b_row_stride = 0;
  std::ptrdiff_t b_col_stride = 1;
  float* c = nullptr;
  std::ptrdiff_t ldc = 0;
  bool accumulate = false;
  // When set, B[p][j] = b_rows[p][j] and b with its strides is ignored. The
  // vector tiers read B unpacked this way, and may load up to
  // kGemmRowSlack floats past column n of each row.
  const float* const* b_rows = nullptr;
};

inline constexpr int kGemmRowSlack = 32;

// C[m x n] (=|+=) A * B^T, with row i of A at a_rows[i] and row j of B at
// b_rows[j], each k floats long. Both operands are read contiguously along k
// and nothing is packed, which suits long reductions over few rows.
struct DotArgs {
  int m = 0;
  int n = 0;
  int k = 0;
  const float* const* a_rows = nullptr;
  const float* const* b_rows = nullptr;
  float* c = nullptr;
  std::ptrdiff_t ldc = 0;
  bool accumulate = false;
};

// Per-step Adam constants. bias_correction{1,2} are 1 - beta^t.
struct AdamCoefficients {
  float lr = 0.0f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float coupled_decay = 0.0f;    // added to the gradient as decay * theta
  float decoupled_decay = 0.0f;  // applied as theta -= lr * decay * theta
  float bias_correction1 = 1.0f;
  float bias_correction2 = 1.0f;
};

struct KernelTable {
  Isa isa = Isa::scalar;
  void (*gemm)(const GemmArgs& args) = nullptr;
  void (*gemm_nt)(const DotArgs& args) = nullptr;
  // y += alpha * x
  void (*axpy)(std::size_t n, float alpha, const float* x, float* y) = nullptr;
  // y = max(x, 0)
  void (*relu_forward)(std::size_t n, const float* x, float* y) = nullptr;
  // gx += gy where x > 0
  void (*relu_backward)(std::size_t n, const float* x, const float* gy, float* gx) = nullptr;
  void (*adam_update)(std::size_t n, float* theta, const float* grad, float* m, float* v,
                      const AdamCoefficients& coef) = nullptr;
};

// Table for the active tier.
const KernelTable& kernels();

// Table for a specific tier; throws std::runtime_error when the CPU lacks it.
const KernelTable& kernels_for(Isa isa);

namespace reference {

// Element update shared by the scalar kernel and 64-bit reference checks.
template <typename T>
inline void adam_element(T& theta, T grad, T& m, T& v, T lr, T beta1, T beta2, T eps,
                         T coupled_decay, T decoupled_decay, T bias_correction1,
                         T bias_correction2) {
  const T g = grad + coupled_decay * theta;
  m = beta1 * m + (T(1) - beta1) * g;
  v = beta2 * v + (T(1) - beta2) * g * g;
  const T m_hat = m / bias_correction1;
  const T v_hat = v / bias_correction2;
  if (decoupled_decay != T(0)) theta -= lr * decoupled_decay * theta;
  theta -= lr * m_hat / (std::sqrt(v_hat) + eps);
}

}  // namespace reference

}  // namespace degsr::simd
