#include "degsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "degsr/simd/kernels.hpp"

namespace degsr {

using detail::make_output;
using detail::record;
using detail::should_record;

namespace {

// Gradient buffer of an input, or nullptr when it takes no gradient.
float* grad_of(TensorImpl* t) {
  if (!t->requires_grad) return nullptr;
  t->ensure_grad();
  return t->grad.data();
}

TensorImpl* raw(const Tensor& t) { return t.impl_ptr().get(); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

struct ConvGeometry {
  int in_c, in_h, in_w;
  int k_h, k_w;
  int stride, pad;
  int out_h, out_w;

  int k() const { return in_c * k_h * k_w; }
  int p() const { return out_h * out_w; }
  bool pointwise() const { return k_h == 1 && k_w == 1 && stride == 1 && pad == 0; }
};

// Output columns are processed in bands small enough for the column matrix
// to stay in L2: either rows [y0, y1) of sample n0, or `count` whole samples
// starting at n0 when one sample has fewer columns than the target.
struct Band {
  int n0, count, y0, y1;
};

std::vector<Band> make_bands(const ConvGeometry& g, int batch) {
  constexpr std::size_t kColumnBudget = 512 * 1024 / sizeof(float);
  const std::size_t target = std::max<std::size_t>(64, kColumnBudget / static_cast<std::size_t>(g.k()));
  std::vector<Band> bands;
  if (static_cast<std::size_t>(g.p()) >= target) {
    const int rows = std::max(1, static_cast<int>(target / static_cast<std::size_t>(g.out_w)));
    for (int n = 0; n < batch; ++n)
      for (int y0 = 0; y0 < g.out_h; y0 += rows) bands.push_back({n, 1, y0, std::min(g.out_h, y0 + rows)});
  } else {
    const int per = std::max(1, static_cast<int>(target / static_cast<std::size_t>(g.p())));
    for (int n = 0; n < batch; n += per) bands.push_back({n, std::min(per, batch - n), 0, g.out_h});
  }
  return bands;
}

int band_columns(const Band& b, const ConvGeometry& g) { return b.count * (b.y1 - b.y0) * g.out_w; }

// col[(ci*kh + ky)*kw + kx][(oy - y0)*ow + ox] for oy in [y0, y1); rows are ld apart.
void im2col(const float* x, const ConvGeometry& g, int y0, int y1, float* col, std::size_t ld) {
  for (int ci = 0; ci < g.in_c; ++ci) {
    const float* plane = x + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k_h; ++ky) {
      for (int kx = 0; kx < g.k_w; ++kx) {
        float* row = col + static_cast<std::size_t>((ci * g.k_h + ky) * g.k_w + kx) * ld;
        for (int oy = y0; oy < y1; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          float* dst = row + (oy - y0) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill_n(dst, g.out_w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          if (g.stride == 1) {
            const int lo = std::max(0, g.pad - kx);
            const int hi = std::min(g.out_w, g.in_w + g.pad - kx);
            for (int ox = 0; ox < lo; ++ox) dst[ox] = 0.0f;
            if (hi > lo) std::memcpy(dst + lo, src + lo - g.pad + kx, sizeof(float) * (hi - lo));
            for (int ox = std::max(lo, hi); ox < g.out_w; ++ox) dst[ox] = 0.0f;
          } else {
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

struct Scratch {
  std::vector<float> col;
  std::vector<float> tmp;
  std::vector<float> tmp2;
  std::vector<float> gy;
  std::vector<float> padded;
  std::vector<const float*> rows;
  std::vector<const float*> gy_rows;
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

// Adjoint of im2col: scatter-adds the band's column gradient onto the input.
void col2im(const float* col, const ConvGeometry& g, int y0, int y1, std::size_t ld, float* gx) {
  for (int ci = 0; ci < g.in_c; ++ci) {
    float* plane = gx + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k_h; ++ky) {
      for (int kx = 0; kx < g.k_w; ++kx) {
        const float* row = col + static_cast<std::size_t>((ci * g.k_h + ky) * g.k_w + kx) * ld;
        for (int oy = y0; oy < y1; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const float* src = row + (oy - y0) * g.out_w;
          float* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          if (g.stride == 1) {
            const int lo = std::max(0, g.pad - kx);
            const int hi = std::min(g.out_w, g.in_w + g.pad - kx);
            float* d = dst - g.pad + kx;
            for (int ox = lo; ox < hi; ++ox) d[ox] += src[ox];
          } else {
            for (int ox = 0; ox < g.out_w; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

// Column matrix of one band: a view straight into the input when the layer
// is pointwise and the band lies in one sample, otherwise built in `buffer`.
const float* band_columns_of(const float* x, std::size_t in_sample, const ConvGeometry& g, const Band& b,
                             std::vector<float>& buffer, std::size_t& ld) {
  const int rows = b.y1 - b.y0;
  if (g.pointwise() && b.count == 1) {
    ld = static_cast<std::size_t>(g.p());
    return x + b.n0 * in_sample + static_cast<std::size_t>(b.y0) * g.out_w;
  }
  ld = static_cast<std::size_t>(band_columns(b, g));
  buffer.resize(static_cast<std::size_t>(g.k()) * ld);
  for (int i = 0; i < b.count; ++i) {
    im2col(x + (b.n0 + i) * in_sample, g, b.y0, b.y1, buffer.data() + static_cast<std::size_t>(i) * rows * g.out_w,
           ld);
  }
  return buffer.data();
}

// Stride-1 convolutions skip im2col. The batch is copied into one
// zero-padded buffer per channel, samples stacked vertically with `pad` zero
// rows between them, at row pitch wp. Tap (ci, ky, kx) of output column
// j = sample_offset + y * wp + x then reads a fixed shift of that buffer, so
// every column-matrix row is a pointer into it and one GEMM streams the whole
// batch. Output columns past out_w and the rows between samples are dropped.
struct DirectLayout {
  int wp = 0;
  std::size_t sample_stride = 0;
  std::size_t channel_stride = 0;
  int cols = 0;

  DirectLayout(const ConvGeometry& g, int batch)
      : wp(g.in_w + 2 * g.pad),
        sample_stride(static_cast<std::size_t>(g.in_h + g.pad) * wp),
        channel_stride(batch * sample_stride + static_cast<std::size_t>(g.pad) * wp),
        cols(static_cast<int>((batch - 1) * sample_stride) + g.out_h * wp) {}
};

// Fills s.padded with the stacked batch and s.rows with one pointer per tap.
void stack_padded(const float* x, std::size_t in_sample, int batch, const ConvGeometry& g, const DirectLayout& d,
                  Scratch& s) {
  s.padded.assign(g.in_c * d.channel_stride + g.k_w + simd::kGemmRowSlack, 0.0f);
  for (int n = 0; n < batch; ++n)
    for (int ci = 0; ci < g.in_c; ++ci)
      for (int iy = 0; iy < g.in_h; ++iy)
        std::memcpy(s.padded.data() + ci * d.channel_stride + n * d.sample_stride +
                        static_cast<std::size_t>(iy + g.pad) * d.wp + g.pad,
                    x + n * in_sample + (static_cast<std::size_t>(ci) * g.in_h + iy) * g.in_w, sizeof(float) * g.in_w);
  s.rows.resize(static_cast<std::size_t>(g.k()));
  for (int ci = 0, r = 0; ci < g.in_c; ++ci)
    for (int ky = 0; ky < g.k_h; ++ky)
      for (int kx = 0; kx < g.k_w; ++kx) s.rows[r++] = s.padded.data() + ci * d.channel_stride + ky * d.wp + kx;
}

void conv_direct(const float* x, std::size_t in_sample, int batch, const ConvGeometry& g, const float* w, int out_c,
                 float* out, bool accumulate) {
  const auto& kern = simd::kernels();
  Scratch& s = scratch();
  const DirectLayout d(g, batch);
  const std::size_t len = static_cast<std::size_t>(g.p());
  stack_padded(x, in_sample, batch, g, d, s);
  s.tmp.resize(static_cast<std::size_t>(out_c) * d.cols);

  simd::GemmArgs args;
  args.m = out_c;
  args.n = d.cols;
  args.k = g.k();
  args.a = w;
  args.a_row_stride = g.k();
  args.a_col_stride = 1;
  args.b_rows = s.rows.data();
  args.c = s.tmp.data();
  args.ldc = d.cols;
  kern.gemm(args);

  for (int n = 0; n < batch; ++n) {
    float* dst = out + n * out_c * len;
    for (int o = 0; o < out_c; ++o) {
      const float* src = s.tmp.data() + static_cast<std::size_t>(o) * d.cols + n * d.sample_stride;
      for (int y = 0; y < g.out_h; ++y, dst += g.out_w, src += d.wp) {
        if (accumulate) {
          for (int t = 0; t < g.out_w; ++t) dst[t] += src[t];
        } else {
          std::memcpy(dst, src, sizeof(float) * g.out_w);
        }
      }
    }
  }
}

// Weight gradient in the stacked layout: dW[o][tap] += sum_j gy[o][j] * tap
// row j, with gy spread over the same columns and zero where the forward
// output was dropped.
void conv_direct_weight_grad(const float* x, std::size_t in_sample, const float* gy, std::size_t out_sample,
                             int batch, const ConvGeometry& g, int out_c, float* gw) {
  Scratch& s = scratch();
  const DirectLayout d(g, batch);
  stack_padded(x, in_sample, batch, g, d, s);
  s.gy.assign(static_cast<std::size_t>(out_c) * d.cols, 0.0f);
  s.gy_rows.resize(static_cast<std::size_t>(out_c));
  for (int o = 0; o < out_c; ++o) {
    float* row = s.gy.data() + static_cast<std::size_t>(o) * d.cols;
    s.gy_rows[o] = row;
    for (int n = 0; n < batch; ++n)
      for (int y = 0; y < g.out_h; ++y)
        std::memcpy(row + n * d.sample_stride + static_cast<std::size_t>(y) * d.wp,
                    gy + n * out_sample + (static_cast<std::size_t>(o) * g.out_h + y) * g.out_w,
                    sizeof(float) * g.out_w);
  }
  simd::DotArgs args;
  args.m = out_c;
  args.n = g.k();
  args.k = d.cols;
  args.a_rows = s.gy_rows.data();
  args.b_rows = s.rows.data();
  args.c = gw;
  args.ldc = g.k();
  args.accumulate = true;
  simd::kernels().gemm_nt(args);
}

// Strided and pointwise convolutions go through explicit column matrices,
// one band at a time.
void conv_banded(const float* x, std::size_t in_sample, int batch, const ConvGeometry& g, const float* w, int out_c,
                 float* out) {
  const auto& kern = simd::kernels();
  Scratch& s = scratch();
  const std::size_t len = static_cast<std::size_t>(g.p());
  for (const Band& band : make_bands(g, batch)) {
    const int cols = band_columns(band, g);
    std::size_t ld = 0;
    simd::GemmArgs args;
    args.m = out_c;
    args.n = cols;
    args.k = g.k();
    args.a = w;
    args.a_row_stride = g.k();
    args.a_col_stride = 1;
    args.b = band_columns_of(x, in_sample, g, band, s.col, ld);
    args.b_row_stride = static_cast<std::ptrdiff_t>(ld);
    if (band.count == 1) {
      args.c = out + band.n0 * out_c * len + static_cast<std::size_t>(band.y0) * g.out_w;
      args.ldc = g.p();
      kern.gemm(args);
      continue;
    }
    s.tmp.resize(static_cast<std::size_t>(out_c) * cols);
    args.c = s.tmp.data();
    args.ldc = cols;
    kern.gemm(args);
    for (int i = 0; i < band.count; ++i)
      for (int o = 0; o < out_c; ++o)
        std::memcpy(out + ((band.n0 + i) * out_c + o) * len, s.tmp.data() + static_cast<std::size_t>(o) * cols + i * len,
                    sizeof(float) * len);
  }
}

template <typename Fn>
Tensor unary(const Tensor& x, Fn forward) {
  const bool rec = should_record({&x});
  Tensor y = make_output(x.shape(), rec);
  const float* src = x.ptr();
  float* dst = y.ptr();
  for (std::size_t i = 0, n = x.numel(); i < n; ++i) dst[i] = forward(src[i]);
  return y;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int padding) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  if (xs.c != ws.c) {
    throw ShapeError("conv2d: input " + xs.str() + " has " + std::to_string(xs.c) +
                     " channels but weight " + ws.str() + " expects " + std::to_string(ws.c));
  }
  if (xs.h + 2 * padding < ws.h || xs.w + 2 * padding < ws.w) {
    throw ShapeError("conv2d: padded input " + xs.str() + " smaller than kernel " + ws.str());
  }
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(ws.n)) {
    throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match weight " + ws.str());
  }
  ConvGeometry g{xs.c, xs.h, xs.w, ws.h, ws.w, stride, padding,
                 (xs.h + 2 * padding - ws.h) / stride + 1, (xs.w + 2 * padding - ws.w) / stride + 1};
  const int out_c = ws.n;
  const int p_count = g.p();
  const bool rec = should_record({&input, &weight, &bias});
  Tensor out = make_output({xs.n, out_c, g.out_h, g.out_w}, rec);

  if (g.stride == 1 && !g.pointwise()) {
    conv_direct(input.ptr(), xs.sample(), xs.n, g, weight.ptr(), out_c, out.ptr(), false);
  } else {
    conv_banded(input.ptr(), xs.sample(), xs.n, g, weight.ptr(), out_c, out.ptr());
  }
  if (bias.defined()) {
    const float* b = bias.ptr();
    float* y = out.ptr();
    for (int n = 0; n < xs.n; ++n) {
      for (int o = 0; o < out_c; ++o, y += p_count) {
        for (int p = 0; p < p_count; ++p) y[p] += b[o];
      }
    }
  }

  if (rec) {
    TensorImpl* xi = raw(input);
    TensorImpl* wi = raw(weight);
    TensorImpl* bi = bias.defined() ? raw(bias) : nullptr;
    TensorImpl* yi = raw(out);
    record("conv2d", {&input, &weight, &bias}, out, [xi, wi, bi, yi, g, out_c] {
      const auto& kern = simd::kernels();
      Scratch& s = scratch();
      const int k_count = g.k();
      const int p_count = g.p();
      float* gx = grad_of(xi);
      float* gw = grad_of(wi);
      float* gb = bi != nullptr ? grad_of(bi) : nullptr;
      const std::size_t in_sample = xi->shape.sample();
      const std::size_t out_sample = yi->shape.sample();
      const int batch = xi->shape.n;
      const bool direct_dw = gw != nullptr && g.stride == 1 && !g.pointwise();
      const bool as_conv = gx != nullptr && !g.pointwise() && g.stride == 1 && g.k_h == g.k_w && g.pad < g.k_h;
      const bool banded_dw = gw != nullptr && !direct_dw;
      const bool banded_dx = gx != nullptr && !as_conv;

      if (gb != nullptr) {
        for (int o = 0; o < out_c; ++o) {
          double acc = 0.0;
          for (int n = 0; n < batch; ++n) {
            const float* row = yi->grad.data() + n * out_sample + static_cast<std::size_t>(o) * p_count;
            for (int p = 0; p < p_count; ++p) acc += row[p];
          }
          gb[o] += static_cast<float>(acc);
        }
      }
      if (direct_dw) {
        conv_direct_weight_grad(xi->data.data(), in_sample, yi->grad.data(), out_sample, batch, g, out_c, gw);
      }

      // A stride-1 input gradient is itself a convolution: of the output
      // gradient with the spatially flipped, channel-transposed kernel.
      if (as_conv) {
        const int taps = g.k_h * g.k_w;
        std::vector<float> flipped(static_cast<std::size_t>(g.in_c) * out_c * taps);
        const float* w = wi->data.data();
        for (int o = 0; o < out_c; ++o)
          for (int ci = 0; ci < g.in_c; ++ci)
            for (int t = 0; t < taps; ++t)
              flipped[(static_cast<std::size_t>(ci) * out_c + o) * taps + (taps - 1 - t)] =
                  w[(static_cast<std::size_t>(o) * g.in_c + ci) * taps + t];
        const ConvGeometry back{out_c, g.out_h, g.out_w, g.k_h, g.k_w, 1, g.k_h - 1 - g.pad, g.in_h, g.in_w};
        conv_direct(yi->grad.data(), out_sample, batch, back, flipped.data(), g.in_c, gx, true);
      }
      if (!banded_dw && !banded_dx) return;

      if (banded_dw) s.tmp2.assign(static_cast<std::size_t>(k_count) * out_c, 0.0f);
      const std::vector<Band> bands = make_bands(g, batch);
      for (const Band& band : bands) {
        const int cols = band_columns(band, g);
        const int rows = band.y1 - band.y0;
        const std::size_t len = static_cast<std::size_t>(rows) * g.out_w;
        // Output gradient of the band as an out_c x cols matrix.
        const float* gy;
        std::size_t ldg;
        if (band.count == 1) {
          gy = yi->grad.data() + band.n0 * out_sample + static_cast<std::size_t>(band.y0) * g.out_w;
          ldg = static_cast<std::size_t>(p_count);
        } else {
          s.gy.resize(static_cast<std::size_t>(out_c) * cols);
          for (int i = 0; i < band.count; ++i)
            for (int o = 0; o < out_c; ++o)
              std::memcpy(s.gy.data() + static_cast<std::size_t>(o) * cols + i * len,
                          yi->grad.data() + (band.n0 + i) * out_sample + static_cast<std::size_t>(o) * p_count,
                          sizeof(float) * len);
          gy = s.gy.data();
          ldg = static_cast<std::size_t>(cols);
        }
        if (banded_dw) {
          std::size_t ld = 0;
          const float* col = band_columns_of(xi->data.data(), in_sample, g, band, s.col, ld);
          // dW^T[k][o] += sum_p col[k][p] * gy[o][p]
          simd::GemmArgs args;
          args.m = k_count;
          args.n = out_c;
          args.k = cols;
          args.a = col;
          args.a_row_stride = static_cast<std::ptrdiff_t>(ld);
          args.a_col_stride = 1;
          args.b = gy;
          args.b_row_stride = 1;
          args.b_col_stride = static_cast<std::ptrdiff_t>(ldg);
          args.c = s.tmp2.data();
          args.ldc = out_c;
          args.accumulate = true;
          kern.gemm(args);
        }
        if (banded_dx) {
          // dcol[k][p] = sum_o W[o][k] * gy[o][p]
          const bool direct = g.pointwise() && band.count == 1;
          float* gx_band = gx + band.n0 * in_sample + static_cast<std::size_t>(band.y0) * g.out_w;
          simd::GemmArgs args;
          args.m = k_count;
          args.n = cols;
          args.k = out_c;
          args.a = wi->data.data();
          args.a_row_stride = 1;
          args.a_col_stride = k_count;
          args.b = gy;
          args.b_row_stride = static_cast<std::ptrdiff_t>(ldg);
          args.b_col_stride = 1;
          if (direct) {
            args.c = gx_band;
            args.ldc = p_count;
            args.accumulate = true;
          } else {
            s.tmp.resize(static_cast<std::size_t>(k_count) * cols);
            args.c = s.tmp.data();
            args.ldc = cols;
          }
          kern.gemm(args);
          if (!direct) {
            for (int i = 0; i < band.count; ++i) {
              col2im(s.tmp.data() + i * len, g, band.y0, band.y1, static_cast<std::size_t>(cols),
                     gx + (band.n0 + i) * in_sample);
            }
          }
        }
      }
      if (banded_dw) {
        for (int o = 0; o < out_c; ++o) {
          float* dst = gw + static_cast<std::size_t>(o) * k_count;
          for (int k = 0; k < k_count; ++k) dst[k] += s.tmp2[static_cast<std::size_t>(k) * out_c + o];
        }
      }
    });
  }
  return out;
}

Tensor pixel_shuffle(const Tensor& input, int r) {
  const Shape& s = input.shape();
  if (r < 1 || s.c % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels of " + s.str() + " not divisible by r^2 = " +
                     std::to_string(r * r));
  }
  const int oc = s.c / (r * r);
  const bool rec = should_record({&input});
  Tensor out = make_output({s.n, oc, s.h * r, s.w * r}, rec);
  const int ow = s.w * r;
  auto index_pair = [s, r, oc, ow](int n, int c, int h, int w, int i, int j) {
    const std::size_t src = ((static_cast<std::size_t>(n) * s.c + c * r * r + i * r + j) * s.h + h) * s.w + w;
    const std::size_t dst = ((static_cast<std::size_t>(n) * oc + c) * (s.h * r) + h * r + i) * ow + w * r + j;
    return std::pair{src, dst};
  };
  const float* x = input.ptr();
  float* y = out.ptr();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < oc; ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
          for (int h = 0; h < s.h; ++h)
            for (int w = 0; w < s.w; ++w) {
              const auto [src, dst] = index_pair(n, c, h, w, i, j);
              y[dst] = x[src];
            }
  if (rec) {
    TensorImpl* xi = raw(input);
    TensorImpl* yi = raw(out);
    record("pixel_shuffle", {&input}, out, [xi, yi, index_pair, s, oc, r] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      const float* gy = yi->grad.data();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < oc; ++c)
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j)
              for (int h = 0; h < s.h; ++h)
                for (int w = 0; w < s.w; ++w) {
                  const auto [src, dst] = index_pair(n, c, h, w, i, j);
                  gx[src] += gy[dst];
                }
    });
  }
  return out;
}

Tensor pixel_unshuffle(const Tensor& input, int r) {
  const Shape& s = input.shape();
  if (r < 1 || s.h % r != 0 || s.w % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial size of " + s.str() + " not divisible by " + std::to_string(r));
  }
  const int ih = s.h / r;
  const int iw = s.w / r;
  const int oc = s.c * r * r;
  const bool rec = should_record({&input});
  Tensor out = make_output({s.n, oc, ih, iw}, rec);
  auto index_pair = [s, r, ih, iw, oc](int n, int c, int h, int w, int i, int j) {
    const std::size_t src = ((static_cast<std::size_t>(n) * s.c + c) * s.h + h * r + i) * s.w + w * r + j;
    const std::size_t dst = ((static_cast<std::size_t>(n) * oc + c * r * r + i * r + j) * ih + h) * iw + w;
    return std::pair{src, dst};
  };
  const float* x = input.ptr();
  float* y = out.ptr();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
          for (int h = 0; h < ih; ++h)
            for (int w = 0; w < iw; ++w) {
              const auto [src, dst] = index_pair(n, c, h, w, i, j);
              y[dst] = x[src];
            }
  if (rec) {
    TensorImpl* xi = raw(input);
    TensorImpl* yi = raw(out);
    record("pixel_unshuffle", {&input}, out, [xi, yi, index_pair, s, r, ih, iw] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      const float* gy = yi->grad.data();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j)
              for (int h = 0; h < ih; ++h)
                for (int w = 0; w < iw; ++w) {
                  const auto [src, dst] = index_pair(n, c, h, w, i, j);
                  gx[src] += gy[dst];
                }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  const bool rec = should_record({&x});
  Tensor y = make_output(x.shape(), rec);
  simd::kernels().relu_forward(x.numel(), x.ptr(), y.ptr());
  if (rec) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("relu", {&x}, y, [xi, yi] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      simd::kernels().relu_backward(xi->data.size(), xi->data.data(), yi->grad.data(), gx);
    });
  }
  return y;
}

Tensor leaky_relu(const Tensor& x, float slope) {
  const bool rec = should_record({&x});
  Tensor y = make_output(x.shape(), rec);
  const float* src = x.ptr();
  float* dst = y.ptr();
  for (std::size_t i = 0, n = x.numel(); i < n; ++i) dst[i] = src[i] > 0.0f ? src[i] : slope * src[i];
  if (rec) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("leaky_relu", {&x}, y, [xi, yi, slope] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      const float* gy = yi->grad.data();
      for (std::size_t i = 0, n = xi->data.size(); i < n; ++i) {
        gx[i] += xi->data[i] > 0.0f ? gy[i] : slope * gy[i];
      }
    });
  }
  return y;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = unary(x, [](float v) {
    // Split by sign so exp never overflows.
    if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
    const float e = std::exp(v);
    return e / (1.0f + e);
  });
  if (y.requires_grad()) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("sigmoid", {&x}, y, [xi, yi] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      for (std::size_t i = 0, n = yi->data.size(); i < n; ++i) {
        const float s = yi->data[i];
        gx[i] += yi->grad[i] * s * (1.0f - s);
      }
    });
  }
  return y;
}

namespace {

struct ResizeTap {
  int i0;
  int i1;
  float frac;
};

std::vector<ResizeTap> bilinear_taps(int in, int out) {
  std::vector<ResizeTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, static_cast<float>(src - i0)};
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
  const Shape& s = input.shape();
  if (s.numel() == 0 || s.h < 1 || s.w < 1) throw ShapeError("bilinear_resize: empty input " + s.str());
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("bilinear_resize: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " must be at least 1x1");
  }
  const bool rec = should_record({&input});
  Tensor out = make_output({s.n, s.c, out_h, out_w}, rec);
  auto ty = bilinear_taps(s.h, out_h);
  auto tx = bilinear_taps(s.w, out_w);
  const int planes = s.n * s.c;
  for (int pl = 0; pl < planes; ++pl) {
    const float* src = input.ptr() + pl * s.plane();
    float* dst = out.ptr() + static_cast<std::size_t>(pl) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const ResizeTap& y = ty[oy];
      const float* r0 = src + static_cast<std::size_t>(y.i0) * s.w;
      const float* r1 = src + static_cast<std::size_t>(y.i1) * s.w;
      for (int ox = 0; ox < out_w; ++ox) {
        const ResizeTap& x = tx[ox];
        const float top = r0[x.i0] + x.frac * (r0[x.i1] - r0[x.i0]);
        const float bot = r1[x.i0] + x.frac * (r1[x.i1] - r1[x.i0]);
        dst[oy * out_w + ox] = top + y.frac * (bot - top);
      }
    }
  }
  if (rec) {
    TensorImpl* xi = raw(input);
    TensorImpl* yi = raw(out);
    record("bilinear_resize", {&input}, out, [xi, yi, ty = std::move(ty), tx = std::move(tx), planes, out_h, out_w] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      const Shape& s = xi->shape;
      for (int pl = 0; pl < planes; ++pl) {
        float* g = gx + pl * s.plane();
        const float* gy = yi->grad.data() + static_cast<std::size_t>(pl) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
          const ResizeTap& y = ty[oy];
          float* r0 = g + static_cast<std::size_t>(y.i0) * s.w;
          float* r1 = g + static_cast<std::size_t>(y.i1) * s.w;
          for (int ox = 0; ox < out_w; ++ox) {
            const ResizeTap& x = tx[ox];
            const float v = gy[oy * out_w + ox];
            const float top = v * (1.0f - y.frac);
            const float bot = v * y.frac;
            r0[x.i0] += top * (1.0f - x.frac);
            r0[x.i1] += top * x.frac;
            r1[x.i0] += bot * (1.0f - x.frac);
            r1[x.i1] += bot * x.frac;
          }
        }
      }
    });
  }
  return out;
}

Tensor max_pool2x2(const Tensor& input) {
  const Shape& s = input.shape();
  if (s.h < 2 || s.w < 2) throw ShapeError("max_pool2x2: input " + s.str() + " smaller than 2x2");
  const int oh = s.h / 2;
  const int ow = s.w / 2;
  const bool rec = should_record({&input});
  Tensor out = make_output({s.n, s.c, oh, ow}, rec);
  std::vector<std::uint32_t> arg;
  if (rec) arg.resize(out.numel());
  const int planes = s.n * s.c;
  for (int pl = 0; pl < planes; ++pl) {
    const float* src = input.ptr() + pl * s.plane();
    float* dst = out.ptr() + static_cast<std::size_t>(pl) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        std::uint32_t best = static_cast<std::uint32_t>(2 * oy * s.w + 2 * ox);
        for (std::uint32_t cand : {best + 1, best + static_cast<std::uint32_t>(s.w),
                                   best + static_cast<std::uint32_t>(s.w) + 1}) {
          if (src[cand] > src[best]) best = cand;
        }
        dst[oy * ow + ox] = src[best];
        if (rec) arg[static_cast<std::size_t>(pl) * oh * ow + oy * ow + ox] = best;
      }
    }
  }
  if (rec) {
    TensorImpl* xi = raw(input);
    TensorImpl* yi = raw(out);
    record("max_pool2x2", {&input}, out, [xi, yi, arg = std::move(arg), planes, oh, ow] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      const std::size_t plane = xi->shape.plane();
      const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
      for (int pl = 0; pl < planes; ++pl) {
        for (std::size_t i = 0; i < out_plane; ++i) {
          const std::size_t idx = pl * out_plane + i;
          gx[pl * plane + arg[idx]] += yi->grad[idx];
        }
      }
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  const Shape& s = input.shape();
  if (s.plane() == 0) throw ShapeError("global_avg_pool: empty spatial extent " + s.str());
  const bool rec = should_record({&input});
  Tensor out = make_output({s.n, s.c, 1, 1}, rec);
  const std::size_t plane = s.plane();
  for (int pl = 0; pl < s.n * s.c; ++pl) {
    const float* src = input.ptr() + pl * plane;
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
    out.ptr()[pl] = static_cast<float>(acc / static_cast<double>(plane));
  }
  if (rec) {
    TensorImpl* xi = raw(input);
    TensorImpl* yi = raw(out);
    record("global_avg_pool", {&input}, out, [xi, yi] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      const std::size_t plane = xi->shape.plane();
      const float inv = 1.0f / static_cast<float>(plane);
      for (std::size_t pl = 0; pl < yi->data.size(); ++pl) {
        const float v = yi->grad[pl] * inv;
        for (std::size_t i = 0; i < plane; ++i) gx[pl * plane + i] += v;
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const bool rec = should_record({&a, &b});
  Tensor y = make_output(a.shape(), rec);
  for (std::size_t i = 0, n = a.numel(); i < n; ++i) y.ptr()[i] = a.ptr()[i] + b.ptr()[i];
  if (rec) {
    TensorImpl* ai = raw(a);
    TensorImpl* bi = raw(b);
    TensorImpl* yi = raw(y);
    record("add", {&a, &b}, y, [ai, bi, yi] {
      const auto& kern = simd::kernels();
      if (float* ga = grad_of(ai)) kern.axpy(yi->grad.size(), 1.0f, yi->grad.data(), ga);
      if (float* gb = grad_of(bi)) kern.axpy(yi->grad.size(), 1.0f, yi->grad.data(), gb);
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const bool rec = should_record({&a, &b});
  Tensor y = make_output(a.shape(), rec);
  for (std::size_t i = 0, n = a.numel(); i < n; ++i) y.ptr()[i] = a.ptr()[i] - b.ptr()[i];
  if (rec) {
    TensorImpl* ai = raw(a);
    TensorImpl* bi = raw(b);
    TensorImpl* yi = raw(y);
    record("sub", {&a, &b}, y, [ai, bi, yi] {
      const auto& kern = simd::kernels();
      if (float* ga = grad_of(ai)) kern.axpy(yi->grad.size(), 1.0f, yi->grad.data(), ga);
      if (float* gb = grad_of(bi)) kern.axpy(yi->grad.size(), -1.0f, yi->grad.data(), gb);
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const bool rec = should_record({&a, &b});
  Tensor y = make_output(a.shape(), rec);
  for (std::size_t i = 0, n = a.numel(); i < n; ++i) y.ptr()[i] = a.ptr()[i] * b.ptr()[i];
  if (rec) {
    TensorImpl* ai = raw(a);
    TensorImpl* bi = raw(b);
    TensorImpl* yi = raw(y);
    record("mul", {&a, &b}, y, [ai, bi, yi] {
      const std::size_t n = yi->grad.size();
      if (float* ga = grad_of(ai)) {
        for (std::size_t i = 0; i < n; ++i) ga[i] += yi->grad[i] * bi->data[i];
      }
      if (float* gb = grad_of(bi)) {
        for (std::size_t i = 0; i < n; ++i) gb[i] += yi->grad[i] * ai->data[i];
      }
    });
  }
  return y;
}

Tensor affine(const Tensor& x, float scale, float shift) {
  Tensor y = unary(x, [scale, shift](float v) { return scale * v + shift; });
  if (y.requires_grad()) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("affine", {&x}, y, [xi, yi, scale] {
      if (float* gx = grad_of(xi)) simd::kernels().axpy(yi->grad.size(), scale, yi->grad.data(), gx);
    });
  }
  return y;
}

Tensor channel_affine(const Tensor& x, std::span<const float> scale, std::span<const float> shift) {
  const Shape& s = x.shape();
  if (scale.size() != static_cast<std::size_t>(s.c) || shift.size() != static_cast<std::size_t>(s.c)) {
    throw ShapeError("channel_affine: constants do not match channels of " + s.str());
  }
  const bool rec = should_record({&x});
  Tensor y = make_output(s, rec);
  std::vector<float> sc(scale.begin(), scale.end());
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) y.ptr()[off + i] = x.ptr()[off + i] * scale[c] + shift[c];
    }
  }
  if (rec) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("channel_affine", {&x}, y, [xi, yi, sc = std::move(sc)] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      const Shape& s = xi->shape;
      const std::size_t plane = s.plane();
      for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
          const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) gx[off + i] += yi->grad[off + i] * sc[c];
        }
      }
    });
  }
  return y;
}

Tensor abs(const Tensor& x) {
  Tensor y = unary(x, [](float v) { return std::fabs(v); });
  if (y.requires_grad()) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("abs", {&x}, y, [xi, yi] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      for (std::size_t i = 0, n = xi->data.size(); i < n; ++i) {
        const float v = xi->data[i];
        if (v > 0.0f) {
          gx[i] += yi->grad[i];
        } else if (v < 0.0f) {
          gx[i] -= yi->grad[i];
        }
      }
    });
  }
  return y;
}

Tensor square(const Tensor& x) {
  Tensor y = unary(x, [](float v) { return v * v; });
  if (y.requires_grad()) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("square", {&x}, y, [xi, yi] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      for (std::size_t i = 0, n = xi->data.size(); i < n; ++i) gx[i] += 2.0f * xi->data[i] * yi->grad[i];
    });
  }
  return y;
}

Tensor sqrt(const Tensor& x) {
  Tensor y = unary(x, [](float v) { return std::sqrt(v); });
  if (y.requires_grad()) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("sqrt", {&x}, y, [xi, yi] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      for (std::size_t i = 0, n = xi->data.size(); i < n; ++i) {
        const float r = yi->data[i];
        if (r > 0.0f) gx[i] += yi->grad[i] * 0.5f / r;
      }
    });
  }
  return y;
}

Tensor log(const Tensor& x) {
  Tensor y = unary(x, [](float v) { return std::log(v); });
  if (y.requires_grad()) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("log", {&x}, y, [xi, yi] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      for (std::size_t i = 0, n = xi->data.size(); i < n; ++i) gx[i] += yi->grad[i] / xi->data[i];
    });
  }
  return y;
}

Tensor clamp(const Tensor& x, float lo, float hi) {
  Tensor y = unary(x, [lo, hi](float v) { return std::clamp(v, lo, hi); });
  if (y.requires_grad()) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("clamp", {&x}, y, [xi, yi, lo, hi] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      for (std::size_t i = 0, n = xi->data.size(); i < n; ++i) {
        const float v = xi->data[i];
        if (v >= lo && v <= hi) gx[i] += yi->grad[i];
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  const bool rec = should_record({&x});
  Tensor y = make_output({1, 1, 1, 1}, rec);
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  y.ptr()[0] = static_cast<float>(acc);
  if (rec) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("sum", {&x}, y, [xi, yi] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      const float g = yi->grad[0];
      for (std::size_t i = 0, n = xi->data.size(); i < n; ++i) gx[i] += g;
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  const bool rec = should_record({&x});
  Tensor y = make_output({1, 1, 1, 1}, rec);
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  y.ptr()[0] = static_cast<float>(acc / static_cast<double>(x.numel()));
  if (rec) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("mean", {&x}, y, [xi, yi] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      const float g = static_cast<float>(yi->grad[0] / static_cast<double>(xi->data.size()));
      for (std::size_t i = 0, n = xi->data.size(); i < n; ++i) gx[i] += g;
    });
  }
  return y;
}

Tensor sum_per_sample(const Tensor& x) {
  const Shape& s = x.shape();
  const bool rec = should_record({&x});
  Tensor y = make_output({s.n, 1, 1, 1}, rec);
  const std::size_t len = s.sample();
  for (int n = 0; n < s.n; ++n) {
    double acc = 0.0;
    const float* src = x.ptr() + n * len;
    for (std::size_t i = 0; i < len; ++i) acc += src[i];
    y.ptr()[n] = static_cast<float>(acc);
  }
  if (rec) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("sum_per_sample", {&x}, y, [xi, yi] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      const std::size_t len = xi->shape.sample();
      for (int n = 0; n < xi->shape.n; ++n) {
        const float g = yi->grad[n];
        for (std::size_t i = 0; i < len; ++i) gx[n * len + i] += g;
      }
    });
  }
  return y;
}

Tensor diff_h(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.w < 2) throw ShapeError("diff_h: width of " + s.str() + " must be at least 2");
  const bool rec = should_record({&x});
  Tensor y = make_output({s.n, s.c, s.h, s.w - 1}, rec);
  const int rows = s.n * s.c * s.h;
  for (int r = 0; r < rows; ++r) {
    const float* src = x.ptr() + static_cast<std::size_t>(r) * s.w;
    float* dst = y.ptr() + static_cast<std::size_t>(r) * (s.w - 1);
    for (int i = 0; i + 1 < s.w; ++i) dst[i] = src[i + 1] - src[i];
  }
  if (rec) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("diff_h", {&x}, y, [xi, yi, rows] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      const int w = xi->shape.w;
      for (int r = 0; r < rows; ++r) {
        const float* gy = yi->grad.data() + static_cast<std::size_t>(r) * (w - 1);
        float* g = gx + static_cast<std::size_t>(r) * w;
        for (int i = 0; i + 1 < w; ++i) {
          g[i + 1] += gy[i];
          g[i] -= gy[i];
        }
      }
    });
  }
  return y;
}

Tensor diff_v(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.h < 2) throw ShapeError("diff_v: height of " + s.str() + " must be at least 2");
  const bool rec = should_record({&x});
  Tensor y = make_output({s.n, s.c, s.h - 1, s.w}, rec);
  const int planes = s.n * s.c;
  const std::size_t in_plane = s.plane();
  const std::size_t out_plane = static_cast<std::size_t>(s.h - 1) * s.w;
  for (int pl = 0; pl < planes; ++pl) {
    const float* src = x.ptr() + pl * in_plane;
    float* dst = y.ptr() + pl * out_plane;
    for (std::size_t i = 0; i < out_plane; ++i) dst[i] = src[i + s.w] - src[i];
  }
  if (rec) {
    TensorImpl* xi = raw(x);
    TensorImpl* yi = raw(y);
    record("diff_v", {&x}, y, [xi, yi, planes, in_plane, out_plane] {
      float* gx = grad_of(xi);
      if (gx == nullptr) return;
      const int w = xi->shape.w;
      for (int pl = 0; pl < planes; ++pl) {
        const float* gy = yi->grad.data() + pl * out_plane;
        float* g = gx + pl * in_plane;
        for (std::size_t i = 0; i < out_plane; ++i) {
          g[i + w] += gy[i];
          g[i] -= gy[i];
        }
      }
    });
  }
  return y;
}

}  // namespace degsr
