#pragma once

// Cache-blocked GEMM driver shared by the vector tiers. Operands are packed
// into MR-row / NR-column panels (zero-filled past the matrix edge) and fed
// to an ISA-specific register-tile microkernel; B given as row pointers is
// read in place instead. The summation order for an
// output element depends only on k, never on m/n or on the tile it falls
// in, so results do not change with the problem's other dimensions.

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>

#include "degsr/simd/kernels.hpp"

namespace degsr::simd::detail {

struct AlignedFree {
  void operator()(float* p) const { std::free(p); }
};

class PackBuffer {
 public:
  float* reserve(std::size_t count) {
    if (count > capacity_) {
      const std::size_t bytes = ((count * sizeof(float) + 63) / 64) * 64;
      void* raw = std::aligned_alloc(64, bytes);
      if (raw == nullptr) throw std::bad_alloc();
      data_.reset(static_cast<float*>(raw));
      capacity_ = count;
    }
    return data_.get();
  }

 private:
  std::unique_ptr<float, AlignedFree> data_;
  std::size_t capacity_ = 0;
};

// Where a microkernel finds row p of its NR-column slice of B: a packed
// panel, or the caller's own rows when B is given through b_rows.
template <int NR>
struct PackedB {
  const float* pb;
  const float* row(int p) const { return pb + static_cast<std::ptrdiff_t>(p) * NR; }
};

struct RowsB {
  const float* const* rows;
  int j;
  const float* row(int p) const { return rows[p] + j; }
};

// Microkernel contract: C[MR x NR] (=|+=) sum_p pa[p*MR + i] * b.row(p)[j].
// Micro::run is a template over the two B sources above.

template <int MR, int NR>
void pack_a(const GemmArgs& g, int i0, int mc, int p0, int kc, float* out) {
  for (int ir = 0; ir < mc; ir += MR) {
    const int rows = std::min(MR, mc - ir);
    for (int p = 0; p < kc; ++p) {
      const float* src = g.a + static_cast<std::ptrdiff_t>(i0 + ir) * g.a_row_stride +
                         static_cast<std::ptrdiff_t>(p0 + p) * g.a_col_stride;
      for (int i = 0; i < rows; ++i) out[p * MR + i] = src[i * g.a_row_stride];
      for (int i = rows; i < MR; ++i) out[p * MR + i] = 0.0f;
    }
    out += static_cast<std::ptrdiff_t>(kc) * MR;
  }
}

template <int MR, int NR>
void pack_b(const GemmArgs& g, int j0, int nc, int p0, int kc, float* out) {
  for (int jr = 0; jr < nc; jr += NR) {
    const int cols = std::min(NR, nc - jr);
    if (g.b_col_stride == 1) {
      for (int p = 0; p < kc; ++p) {
        const float* src = g.b + static_cast<std::ptrdiff_t>(p0 + p) * g.b_row_stride + j0 + jr;
        float* dst = out + p * NR;
        std::memcpy(dst, src, sizeof(float) * cols);
        for (int j = cols; j < NR; ++j) dst[j] = 0.0f;
      }
    } else {
      // Column-contiguous source (transposed operand): walk columns outermost.
      for (int j = 0; j < cols; ++j) {
        const float* src = g.b + static_cast<std::ptrdiff_t>(j0 + jr + j) * g.b_col_stride +
                           static_cast<std::ptrdiff_t>(p0) * g.b_row_stride;
        for (int p = 0; p < kc; ++p) out[p * NR + j] = src[p * g.b_row_stride];
      }
      for (int p = 0; p < kc; ++p) {
        for (int j = cols; j < NR; ++j) out[p * NR + j] = 0.0f;
      }
    }
    out += static_cast<std::ptrdiff_t>(kc) * NR;
  }
}

template <int MR, int NR, int MC, int KC, int NC, class Micro>
void gemm_blocked(const GemmArgs& g) {
  if (g.m <= 0 || g.n <= 0) return;
  if (g.k <= 0) {
    if (!g.accumulate) {
      for (int i = 0; i < g.m; ++i) std::fill_n(g.c + i * g.ldc, g.n, 0.0f);
    }
    return;
  }
  thread_local PackBuffer buf_a;
  thread_local PackBuffer buf_b;
  float* pa = buf_a.reserve(static_cast<std::size_t>(MC) * KC);
  float* pb = buf_b.reserve(static_cast<std::size_t>(NC + NR) * KC);
  alignas(64) float edge[MR * NR];

  for (int j0 = 0; j0 < g.n; j0 += NC) {
    const int nc = std::min(NC, g.n - j0);
    for (int p0 = 0; p0 < g.k; p0 += KC) {
      const int kc = std::min(KC, g.k - p0);
      const bool acc = g.accumulate || p0 > 0;
      const bool direct = g.b_rows != nullptr;
      if (!direct) pack_b<MR, NR>(g, j0, nc, p0, kc, pb);
      for (int i0 = 0; i0 < g.m; i0 += MC) {
        const int mc = std::min(MC, g.m - i0);
        pack_a<MR, NR>(g, i0, mc, p0, kc, pa);
        for (int jr = 0; jr < nc; jr += NR) {
          const int cols = std::min(NR, nc - jr);
          const float* panel_b = pb + static_cast<std::ptrdiff_t>(jr / NR) * kc * NR;
          for (int ir = 0; ir < mc; ir += MR) {
            const int rows = std::min(MR, mc - ir);
            const float* panel_a = pa + static_cast<std::ptrdiff_t>(ir / MR) * kc * MR;
            float* c = g.c + static_cast<std::ptrdiff_t>(i0 + ir) * g.ldc + j0 + jr;
            const bool full = rows == MR && cols == NR;
            float* dst = full ? c : edge;
            const std::ptrdiff_t ld = full ? g.ldc : NR;
            const bool add = full && acc;
            if (direct) {
              Micro::run(kc, panel_a, RowsB{g.b_rows + p0, j0 + jr}, dst, ld, add);
            } else {
              Micro::run(kc, panel_a, PackedB<NR>{panel_b}, dst, ld, add);
            }
            if (!full) {
              for (int i = 0; i < rows; ++i) {
                float* crow = c + i * g.ldc;
                const float* erow = edge + i * NR;
                if (acc) {
                  for (int j = 0; j < cols; ++j) crow[j] += erow[j];
                } else {
                  for (int j = 0; j < cols; ++j) crow[j] = erow[j];
                }
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace degsr::simd::detail
