#include <immintrin.h>

#include "dot_blocked.hpp"
#include "gemm_blocked.hpp"
#include "kernels_impl.hpp"

#define DEGSR_AVX512 __attribute__((target("avx512f,avx2,fma")))

namespace degsr::simd::avx512 {
namespace {

constexpr int kMr = 12;
constexpr int kNr = 32;

struct Micro12x32 {
  template <class B>
  DEGSR_AVX512 static void run(int kc, const float* pa, B b, float* c, std::ptrdiff_t ldc, bool accumulate) {
    __m512 acc[kMr][2];
#pragma GCC unroll 12
    for (int i = 0; i < kMr; ++i) {
      acc[i][0] = _mm512_setzero_ps();
      acc[i][1] = _mm512_setzero_ps();
    }
    for (int p = 0; p < kc; ++p) {
      const float* pb = b.row(p);
      const __m512 b0 = _mm512_loadu_ps(pb);
      const __m512 b1 = _mm512_loadu_ps(pb + 16);
#pragma GCC unroll 12
      for (int i = 0; i < kMr; ++i) {
        const __m512 a = _mm512_set1_ps(pa[i]);
        acc[i][0] = _mm512_fmadd_ps(a, b0, acc[i][0]);
        acc[i][1] = _mm512_fmadd_ps(a, b1, acc[i][1]);
      }
      pa += kMr;
    }
#pragma GCC unroll 12
    for (int i = 0; i < kMr; ++i) {
      float* crow = c + i * ldc;
      __m512 r0 = acc[i][0];
      __m512 r1 = acc[i][1];
      if (accumulate) {
        r0 = _mm512_add_ps(_mm512_loadu_ps(crow), r0);
        r1 = _mm512_add_ps(_mm512_loadu_ps(crow + 16), r1);
      }
      _mm512_storeu_ps(crow, r0);
      _mm512_storeu_ps(crow + 16, r1);
    }
  }
};

template <int MA, int NB>
struct Dot {
  DEGSR_AVX512 static void run(int kc, const float* const* a, const float* const* b, int k0, float* c,
                               std::ptrdiff_t ldc, bool add) {
    __m512 acc[MA][NB];
    for (int i = 0; i < MA; ++i)
      for (int j = 0; j < NB; ++j) acc[i][j] = _mm512_setzero_ps();
    auto step = [&](int p, __mmask16 mask) DEGSR_AVX512 {
      __m512 bv[NB];
      for (int j = 0; j < NB; ++j) bv[j] = _mm512_maskz_loadu_ps(mask, b[j] + k0 + p);
      for (int i = 0; i < MA; ++i) {
        const __m512 av = _mm512_maskz_loadu_ps(mask, a[i] + k0 + p);
        for (int j = 0; j < NB; ++j) acc[i][j] = _mm512_fmadd_ps(av, bv[j], acc[i][j]);
      }
    };
    int p = 0;
    for (; p + 16 <= kc; p += 16) step(p, 0xFFFF);
    if (p < kc) step(p, static_cast<__mmask16>((1u << (kc - p)) - 1u));
    for (int i = 0; i < MA; ++i) {
      for (int j = 0; j < NB; ++j) {
        const float v = _mm512_reduce_add_ps(acc[i][j]);
        float& out = c[i * ldc + j];
        out = add ? out + v : v;
      }
    }
  }
};

}  // namespace

void gemm(const GemmArgs& g) { detail::gemm_blocked<kMr, kNr, 96, 512, 1024, Micro12x32>(g); }

void gemm_nt(const DotArgs& g) { detail::dot_blocked<Dot, 4, 6, 2048>(g); }

DEGSR_AVX512 void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m512 va = _mm512_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512 prod = _mm512_mul_ps(va, _mm512_loadu_ps(x + i));
    _mm512_storeu_ps(y + i, _mm512_add_ps(_mm512_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

DEGSR_AVX512 void relu_forward(std::size_t n, const float* x, float* y) {
  const __m512 zero = _mm512_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) _mm512_storeu_ps(y + i, _mm512_max_ps(_mm512_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

DEGSR_AVX512 void relu_backward(std::size_t n, const float* x, const float* gy, float* gx) {
  const __m512 zero = _mm512_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __mmask16 pos = _mm512_cmp_ps_mask(_mm512_loadu_ps(x + i), zero, _CMP_GT_OQ);
    const __m512 sum = _mm512_add_ps(_mm512_loadu_ps(gx + i), _mm512_loadu_ps(gy + i));
    _mm512_mask_storeu_ps(gx + i, pos, sum);
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) gx[i] += gy[i];
  }
}

DEGSR_AVX512 void adam_update(std::size_t n, float* theta, const float* grad, float* m, float* v,
                              const AdamCoefficients& c) {
  const __m512 lr = _mm512_set1_ps(c.lr);
  const __m512 b1 = _mm512_set1_ps(c.beta1);
  const __m512 b2 = _mm512_set1_ps(c.beta2);
  const __m512 one_b1 = _mm512_set1_ps(1.0f - c.beta1);
  const __m512 one_b2 = _mm512_set1_ps(1.0f - c.beta2);
  const __m512 eps = _mm512_set1_ps(c.eps);
  const __m512 wd = _mm512_set1_ps(c.coupled_decay);
  const __m512 dwd = _mm512_set1_ps(c.decoupled_decay);
  const __m512 bc1 = _mm512_set1_ps(c.bias_correction1);
  const __m512 bc2 = _mm512_set1_ps(c.bias_correction2);
  const bool decoupled = c.decoupled_decay != 0.0f;
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    __m512 th = _mm512_loadu_ps(theta + i);
    const __m512 g = _mm512_add_ps(_mm512_loadu_ps(grad + i), _mm512_mul_ps(wd, th));
    const __m512 mi = _mm512_add_ps(_mm512_mul_ps(b1, _mm512_loadu_ps(m + i)), _mm512_mul_ps(one_b1, g));
    const __m512 vi = _mm512_add_ps(_mm512_mul_ps(b2, _mm512_loadu_ps(v + i)),
                                    _mm512_mul_ps(_mm512_mul_ps(one_b2, g), g));
    _mm512_storeu_ps(m + i, mi);
    _mm512_storeu_ps(v + i, vi);
    const __m512 m_hat = _mm512_div_ps(mi, bc1);
    const __m512 v_hat = _mm512_div_ps(vi, bc2);
    if (decoupled) th = _mm512_sub_ps(th, _mm512_mul_ps(_mm512_mul_ps(lr, dwd), th));
    const __m512 step = _mm512_div_ps(_mm512_mul_ps(lr, m_hat), _mm512_add_ps(_mm512_sqrt_ps(v_hat), eps));
    _mm512_storeu_ps(theta + i, _mm512_sub_ps(th, step));
  }
  for (; i < n; ++i) {
    reference::adam_element<float>(theta[i], grad[i], m[i], v[i], c.lr, c.beta1, c.beta2, c.eps,
                                   c.coupled_decay, c.decoupled_decay, c.bias_correction1,
                                   c.bias_correction2);
  }
}

}  // namespace degsr::simd::avx512
