#pragma once

// Raw convolution kernels on contiguous float64 buffers.
//
// The parallel path lowers each sample with im2col and runs a blocked GEMM
// whose OpenMP work split never crosses an output element, so every output
// is accumulated in the same order for any thread count. The serial
// reference namespace holds the direct nested-loop versions used by tests
// and benchmarks.

#include <cstdint>
#include <span>

namespace ldc::kernels {

struct ConvGeometry {
    std::int64_t batch = 1;
    std::int64_t in_channels = 1;
    std::int64_t height = 1;
    std::int64_t width = 1;
    std::int64_t out_channels = 1;
    int kernel = 1;
    int stride = 1;
    int padding = 0;

    std::int64_t out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
    std::int64_t out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
    std::int64_t patch() const { return in_channels * kernel * kernel; }
};

/// C[m x n] += A[m x k] * B[k x n], all row-major and densely packed.
void gemm_accumulate(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b,
                     double* c);

/// C[m x n] += A[m x k] * B^T with B given as a row-major n x k matrix.
void gemm_accumulate_bt(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* bt,
                        double* c);

/// y = conv(x, w) + bias. `bias` may be empty.
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);

/// gx += d(y)/d(x)^T gy.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> w, std::span<const double> gy,
                           std::span<double> gx);

/// gw += d(y)/d(w)^T gy and, when non-empty, gb += per-channel sums of gy.
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x, std::span<const double> gy,
                            std::span<double> gw, std::span<double> gb);

int max_threads();
void set_threads(int n);

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> w, std::span<const double> gy,
                           std::span<double> gx);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x, std::span<const double> gy,
                            std::span<double> gw, std::span<double> gb);

}  // namespace reference

}  // namespace ldc::kernels
