#pragma once

// Driver for C = A * B^T shared by the vector tiers. The reduction runs in
// chunks of KC so the rows being combined stay cache resident; within a
// chunk every output element is one lane-parallel dot product, reduced the
// same way whichever tile shape it falls in.

#include <algorithm>

#include "degsr/simd/kernels.hpp"

namespace degsr::simd::detail {

// Tile<MA, NB>::run(kc, a_rows, b_rows, k0, c, ldc, add) computes an MA x NB
// block over columns [k0, k0 + kc) of the rows.
template <template <int, int> class Tile, int MA, int NB, int KC>
void dot_blocked(const DotArgs& g) {
  if (g.m <= 0 || g.n <= 0) return;
  if (g.k <= 0) {
    if (!g.accumulate) {
      for (int i = 0; i < g.m; ++i) std::fill_n(g.c + i * g.ldc, g.n, 0.0f);
    }
    return;
  }
  for (int k0 = 0; k0 < g.k; k0 += KC) {
    const int kc = std::min(KC, g.k - k0);
    const bool add = g.accumulate || k0 > 0;
    int i = 0;
    for (; i + MA <= g.m; i += MA) {
      float* c = g.c + i * g.ldc;
      int j = 0;
      for (; j + NB <= g.n; j += NB) Tile<MA, NB>::run(kc, g.a_rows + i, g.b_rows + j, k0, c + j, g.ldc, add);
      for (; j < g.n; ++j) Tile<MA, 1>::run(kc, g.a_rows + i, g.b_rows + j, k0, c + j, g.ldc, add);
    }
    for (; i < g.m; ++i) {
      float* c = g.c + i * g.ldc;
      int j = 0;
      for (; j + NB <= g.n; j += NB) Tile<1, NB>::run(kc, g.a_rows + i, g.b_rows + j, k0, c + j, g.ldc, add);
      for (; j < g.n; ++j) Tile<1, 1>::run(kc, g.a_rows + i, g.b_rows + j, k0, c + j, g.ldc, add);
    }
  }
}

}  // namespace degsr::simd::detail
