#pragma once

#include <cstdint>
#include <random>

// Dense float kernels used by the convolution and linear layers. Every output
// element is produced by exactly one thread with a fixed summation order, so
// results are bit-identical for any OpenMP thread count.

namespace prunescope::kernels {

/// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c);
/// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c);
/// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c);

struct ConvGeometry {
  int batch, channels, height, width;
  int kernel, stride, pad;
  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  /// Rows of the column matrix: channels * kernel * kernel.
  int patch() const { return channels * kernel * kernel; }
  /// Columns of the column matrix: batch * out_height * out_width.
  std::int64_t columns() const { return static_cast<std::int64_t>(batch) * out_height() * out_width(); }
};

/// NCHW input -> column matrix [patch, batch * Ho * Wo].
void im2col(const ConvGeometry& g, const float* x, float* cols);
/// Scatter-add of a column matrix back into an NCHW gradient.
void col2im(const ConvGeometry& g, const float* cols, float* dx);

}  // namespace prunescope::kernels

namespace prunescope {

// Portable sampling on top of the raw 64-bit engine; the standard
// distributions are implementation-defined and would make checkpoints
// toolchain-dependent.
double uniform01(std::mt19937_64& rng);
double standard_normal(std::mt19937_64& rng);

}  // namespace prunescope
