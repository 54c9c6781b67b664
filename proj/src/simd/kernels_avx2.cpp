#include <immintrin.h>

#include "dot_blocked.hpp"
#include "gemm_blocked.hpp"
#include "kernels_impl.hpp"

#define DEGSR_AVX2 __attribute__((target("avx2,fma")))

namespace degsr::simd::avx2 {
namespace {

constexpr int kMr = 6;
constexpr int kNr = 16;

struct Micro6x16 {
  template <class B>
  DEGSR_AVX2 static void run(int kc, const float* pa, B b, float* c, std::ptrdiff_t ldc, bool accumulate) {
    __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
    __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
    __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
    __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
    __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
    __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
    for (int p = 0; p < kc; ++p) {
      const float* pb = b.row(p);
      const __m256 b0 = _mm256_loadu_ps(pb);
      const __m256 b1 = _mm256_loadu_ps(pb + 8);
      __m256 a = _mm256_broadcast_ss(pa + 0);
      c00 = _mm256_fmadd_ps(a, b0, c00);
      c01 = _mm256_fmadd_ps(a, b1, c01);
      a = _mm256_broadcast_ss(pa + 1);
      c10 = _mm256_fmadd_ps(a, b0, c10);
      c11 = _mm256_fmadd_ps(a, b1, c11);
      a = _mm256_broadcast_ss(pa + 2);
      c20 = _mm256_fmadd_ps(a, b0, c20);
      c21 = _mm256_fmadd_ps(a, b1, c21);
      a = _mm256_broadcast_ss(pa + 3);
      c30 = _mm256_fmadd_ps(a, b0, c30);
      c31 = _mm256_fmadd_ps(a, b1, c31);
      a = _mm256_broadcast_ss(pa + 4);
      c40 = _mm256_fmadd_ps(a, b0, c40);
      c41 = _mm256_fmadd_ps(a, b1, c41);
      a = _mm256_broadcast_ss(pa + 5);
      c50 = _mm256_fmadd_ps(a, b0, c50);
      c51 = _mm256_fmadd_ps(a, b1, c51);
      pa += kMr;
    }
    const __m256 rows[kMr][2] = {{c00, c01}, {c10, c11}, {c20, c21},
                                 {c30, c31}, {c40, c41}, {c50, c51}};
    for (int i = 0; i < kMr; ++i) {
      float* crow = c + i * ldc;
      __m256 r0 = rows[i][0];
      __m256 r1 = rows[i][1];
      if (accumulate) {
        r0 = _mm256_add_ps(_mm256_loadu_ps(crow), r0);
        r1 = _mm256_add_ps(_mm256_loadu_ps(crow + 8), r1);
      }
      _mm256_storeu_ps(crow, r0);
      _mm256_storeu_ps(crow + 8, r1);
    }
  }
};

// Fixed-order horizontal sum: halves folded pairwise.
DEGSR_AVX2 float hsum(__m256 v) {
  __m128 x = _mm_add_ps(_mm256_castps256_ps128(v), _mm256_extractf128_ps(v, 1));
  x = _mm_add_ps(x, _mm_movehl_ps(x, x));
  x = _mm_add_ss(x, _mm_movehdup_ps(x));
  return _mm_cvtss_f32(x);
}

template <int MA, int NB>
struct Dot {
  DEGSR_AVX2 static void run(int kc, const float* const* a, const float* const* b, int k0, float* c,
                             std::ptrdiff_t ldc, bool add) {
    __m256 acc[MA][NB];
    for (int i = 0; i < MA; ++i)
      for (int j = 0; j < NB; ++j) acc[i][j] = _mm256_setzero_ps();
    int p = 0;
    for (; p + 8 <= kc; p += 8) {
      __m256 bv[NB];
      for (int j = 0; j < NB; ++j) bv[j] = _mm256_loadu_ps(b[j] + k0 + p);
      for (int i = 0; i < MA; ++i) {
        const __m256 av = _mm256_loadu_ps(a[i] + k0 + p);
        for (int j = 0; j < NB; ++j) acc[i][j] = _mm256_fmadd_ps(av, bv[j], acc[i][j]);
      }
    }
    if (p < kc) {
      alignas(32) int lanes[8];
      for (int t = 0; t < 8; ++t) lanes[t] = t < kc - p ? -1 : 0;
      const __m256i mask = _mm256_load_si256(reinterpret_cast<const __m256i*>(lanes));
      __m256 bv[NB];
      for (int j = 0; j < NB; ++j) bv[j] = _mm256_maskload_ps(b[j] + k0 + p, mask);
      for (int i = 0; i < MA; ++i) {
        const __m256 av = _mm256_maskload_ps(a[i] + k0 + p, mask);
        for (int j = 0; j < NB; ++j) acc[i][j] = _mm256_fmadd_ps(av, bv[j], acc[i][j]);
      }
    }
    for (int i = 0; i < MA; ++i) {
      for (int j = 0; j < NB; ++j) {
        const float v = hsum(acc[i][j]);
        float& out = c[i * ldc + j];
        out = add ? out + v : v;
      }
    }
  }
};

}  // namespace

void gemm(const GemmArgs& g) { detail::gemm_blocked<kMr, kNr, 96, 256, 1024, Micro6x16>(g); }

void gemm_nt(const DotArgs& g) { detail::dot_blocked<Dot, 3, 3, 2048>(g); }

DEGSR_AVX2 void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 prod = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

DEGSR_AVX2 void relu_forward(std::size_t n, const float* x, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

DEGSR_AVX2 void relu_backward(std::size_t n, const float* x, const float* gy, float* gx) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    const __m256 pass = _mm256_and_ps(mask, _mm256_loadu_ps(gy + i));
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), pass));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) gx[i] += gy[i];
  }
}

DEGSR_AVX2 void adam_update(std::size_t n, float* theta, const float* grad, float* m, float* v,
                            const AdamCoefficients& c) {
  const __m256 lr = _mm256_set1_ps(c.lr);
  const __m256 b1 = _mm256_set1_ps(c.beta1);
  const __m256 b2 = _mm256_set1_ps(c.beta2);
  const __m256 one_b1 = _mm256_set1_ps(1.0f - c.beta1);
  const __m256 one_b2 = _mm256_set1_ps(1.0f - c.beta2);
  const __m256 eps = _mm256_set1_ps(c.eps);
  const __m256 wd = _mm256_set1_ps(c.coupled_decay);
  const __m256 dwd = _mm256_set1_ps(c.decoupled_decay);
  const __m256 bc1 = _mm256_set1_ps(c.bias_correction1);
  const __m256 bc2 = _mm256_set1_ps(c.bias_correction2);
  const bool decoupled = c.decoupled_decay != 0.0f;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 th = _mm256_loadu_ps(theta + i);
    const __m256 g = _mm256_add_ps(_mm256_loadu_ps(grad + i), _mm256_mul_ps(wd, th));
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(one_b1, g));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(_mm256_mul_ps(one_b2, g), g));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 m_hat = _mm256_div_ps(mi, bc1);
    const __m256 v_hat = _mm256_div_ps(vi, bc2);
    if (decoupled) th = _mm256_sub_ps(th, _mm256_mul_ps(_mm256_mul_ps(lr, dwd), th));
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(lr, m_hat), _mm256_add_ps(_mm256_sqrt_ps(v_hat), eps));
    _mm256_storeu_ps(theta + i, _mm256_sub_ps(th, step));
  }
  for (; i < n; ++i) {
    reference::adam_element<float>(theta[i], grad[i], m[i], v[i], c.lr, c.beta1, c.beta2, c.eps,
                                   c.coupled_decay, c.decoupled_decay, c.bias_correction1,
                                   c.bias_correction2);
  }
}

}  // namespace degsr::simd::avx2
