#include "kernels_impl.hpp"

namespace degsr::simd::scalar {

void gemm(const GemmArgs& g) {
  for (int i = 0; i < g.m; ++i) {
    float* crow = g.c + static_cast<std::ptrdiff_t>(i) * g.ldc;
    if (!g.accumulate) {
      for (int j = 0; j < g.n; ++j) crow[j] = 0.0f;
    }
    for (int p = 0; p < g.k; ++p) {
      const float a = g.a[i * g.a_row_stride + p * g.a_col_stride];
      if (g.b_rows != nullptr) {
        const float* brow = g.b_rows[p];
        for (int j = 0; j < g.n; ++j) crow[j] += a * brow[j];
        continue;
      }
      const float* brow = g.b + p * g.b_row_stride;
      for (int j = 0; j < g.n; ++j) crow[j] += a * brow[j * g.b_col_stride];
    }
  }
}

void gemm_nt(const DotArgs& g) {
  for (int i = 0; i < g.m; ++i) {
    for (int j = 0; j < g.n; ++j) {
      const float* a = g.a_rows[i];
      const float* b = g.b_rows[j];
      float sum = 0.0f;
      for (int p = 0; p < g.k; ++p) sum += a[p] * b[p];
      float& c = g.c[i * g.ldc + j];
      c = g.accumulate ? c + sum : sum;
    }
  }
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void relu_forward(std::size_t n, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::size_t n, const float* x, const float* gy, float* gx) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0f) gx[i] += gy[i];
  }
}

void adam_update(std::size_t n, float* theta, const float* grad, float* m, float* v,
                 const AdamCoefficients& c) {
  for (std::size_t i = 0; i < n; ++i) {
    reference::adam_element<float>(theta[i], grad[i], m[i], v[i], c.lr, c.beta1, c.beta2, c.eps,
                                   c.coupled_decay, c.decoupled_decay, c.bias_correction1,
                                   c.bias_correction2);
  }
}

}  // namespace degsr::simd::scalar
