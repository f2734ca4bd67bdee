#include "prunescope/kernels.hpp"

#include <cmath>
#include <cstring>

namespace prunescope::kernels {

void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::int64_t>(i) * n;
    const float* arow = a + static_cast<std::int64_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av == 0.0f) continue;  // pruned weights
      const float* brow = b + static_cast<std::int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const float av = a[static_cast<std::int64_t>(p) * m + i];
      if (av == 0.0f) continue;
      const float* brow = b + static_cast<std::int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c) {
  constexpr int kLanes = 16;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::int64_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<std::int64_t>(j) * k;
      float lanes[kLanes] = {};
      int p = 0;
      for (; p + kLanes <= k; p += kLanes) {
        for (int l = 0; l < kLanes; ++l) lanes[l] += arow[p + l] * brow[p + l];
      }
      float tail = 0.0f;
      for (; p < k; ++p) tail += arow[p] * brow[p];
      float sum = 0.0f;
      for (int l = 0; l < kLanes; ++l) sum += lanes[l];
      c[static_cast<std::int64_t>(i) * n + j] += sum + tail;
    }
  }
}

void im2col(const ConvGeometry& g, const float* x, float* cols) {
  const int ho = g.out_height(), wo = g.out_width();
  const std::int64_t plane = static_cast<std::int64_t>(ho) * wo;
  const std::int64_t ncols = g.columns();
#pragma omp parallel for schedule(static)
  for (int row = 0; row < g.patch(); ++row) {
    const int c = row / (g.kernel * g.kernel);
    const int ky = (row / g.kernel) % g.kernel;
    const int kx = row % g.kernel;
    float* out = cols + row * ncols;
    for (int n = 0; n < g.batch; ++n) {
      const float* src = x + (static_cast<std::int64_t>(n) * g.channels + c) * g.height * g.width;
      float* dst = out + n * plane;
      for (int oy = 0; oy < ho; ++oy) {
        const int iy = oy * g.stride - g.pad + ky;
        float* drow = dst + static_cast<std::int64_t>(oy) * wo;
        if (iy < 0 || iy >= g.height) {
          std::memset(drow, 0, sizeof(float) * wo);
          continue;
        }
        const float* srow = src + static_cast<std::int64_t>(iy) * g.width;
        for (int ox = 0; ox < wo; ++ox) {
          const int ix = ox * g.stride - g.pad + kx;
          drow[ox] = (ix >= 0 && ix < g.width) ? srow[ix] : 0.0f;
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const float* cols, float* dx) {
  const int ho = g.out_height(), wo = g.out_width();
  const std::int64_t plane = static_cast<std::int64_t>(ho) * wo;
  const std::int64_t ncols = g.columns();
  const int kk = g.kernel * g.kernel;
  // parallel over (sample, channel) planes; each plane accumulates its kernel
  // offsets in a fixed order
#pragma omp parallel for schedule(static)
  for (int nc = 0; nc < g.batch * g.channels; ++nc) {
    const int n = nc / g.channels, c = nc % g.channels;
    float* dst = dx + static_cast<std::int64_t>(nc) * g.height * g.width;
    for (int r = 0; r < kk; ++r) {
      const int ky = r / g.kernel, kx = r % g.kernel;
      const float* src = cols + static_cast<std::int64_t>(c * kk + r) * ncols + n * plane;
      for (int oy = 0; oy < ho; ++oy) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.height) continue;
        float* drow = dst + static_cast<std::int64_t>(iy) * g.width;
        const float* srow = src + static_cast<std::int64_t>(oy) * wo;
        for (int ox = 0; ox < wo; ++ox) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix >= 0 && ix < g.width) drow[ix] += srow[ox];
        }
      }
    }
  }
}

}  // namespace prunescope::kernels

namespace prunescope {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& rng) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

}  // namespace prunescope
