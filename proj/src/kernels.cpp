#include "ldc/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ldc::kernels {

namespace {

constexpr std::int64_t kMr = 8;
constexpr std::int64_t kNr = 16;
constexpr std::int64_t kNc = 256;
constexpr std::int64_t kKc = 256;

// Eight doubles; aligned(8) lets the packed buffers be loaded unaligned.
typedef double vec8 __attribute__((vector_size(64), aligned(8)));

// Copies a kc x cols block of B into kNr-wide column strips, each stored row
// by row and zero-padded to a full strip. Element (p, j) is b[p * rs + j * cs].
void pack_b(std::int64_t kc, std::int64_t cols, const double* b, std::int64_t rs, std::int64_t cs, double* out) {
    for (std::int64_t s = 0; s < cols; s += kNr) {
        const std::int64_t w = std::min(kNr, cols - s);
        if (cs == 1) {
            for (std::int64_t p = 0; p < kc; ++p) {
                const double* src = b + p * rs + s;
                std::int64_t j = 0;
                for (; j < w; ++j) out[j] = src[j];
                for (; j < kNr; ++j) out[j] = 0.0;
                out += kNr;
            }
            continue;
        }
        std::fill(out, out + kc * kNr, 0.0);
        for (std::int64_t j = 0; j < w; ++j) {
            const double* src = b + (s + j) * cs;
            for (std::int64_t p = 0; p < kc; ++p) out[p * kNr + j] = src[p * rs];
        }
        out += kc * kNr;
    }
}

// Copies A[mr x kc] column by column, zero-padded to kMr rows.
void pack_a(std::int64_t mr, std::int64_t kc, const double* a, std::int64_t lda, double* out) {
    for (std::int64_t p = 0; p < kc; ++p) {
        std::int64_t r = 0;
        for (; r < mr; ++r) out[r] = a[r * lda + p];
        for (; r < kMr; ++r) out[r] = 0.0;
        out += kMr;
    }
}

void micro_kernel(std::int64_t kc, const double* ap, const double* bp, double* c, std::int64_t ldc,
                  std::int64_t mr, std::int64_t nr) {
    vec8 acc0[kMr] = {};
    vec8 acc1[kMr] = {};
    for (std::int64_t p = 0; p < kc; ++p) {
        const vec8 b0 = *reinterpret_cast<const vec8*>(bp);
        const vec8 b1 = *reinterpret_cast<const vec8*>(bp + 8);
        for (std::int64_t r = 0; r < kMr; ++r) {
            acc0[r] += ap[r] * b0;
            acc1[r] += ap[r] * b1;
        }
        ap += kMr;
        bp += kNr;
    }
    if (mr == kMr && nr == kNr) {
        for (std::int64_t r = 0; r < kMr; ++r) {
            vec8* row = reinterpret_cast<vec8*>(c + r * ldc);
            row[0] += acc0[r];
            reinterpret_cast<vec8*>(c + r * ldc + 8)[0] += acc1[r];
        }
        return;
    }
    for (std::int64_t r = 0; r < mr; ++r) {
        for (std::int64_t j = 0; j < nr; ++j) c[r * ldc + j] += j < 8 ? acc0[r][j] : acc1[r][j - 8];
    }
}

// As micro_kernel, but row p of the B strip is read in place at
// base + offsets[p] (always a full kNr-wide, in-bounds run).
void micro_kernel_gather(std::int64_t kc, const double* ap, const double* base, const std::int64_t* offsets,
                         double* c, std::int64_t ldc, std::int64_t mr) {
    vec8 acc0[kMr] = {};
    vec8 acc1[kMr] = {};
    for (std::int64_t p = 0; p < kc; ++p) {
        const double* bp = base + offsets[p];
        const vec8 b0 = *reinterpret_cast<const vec8*>(bp);
        const vec8 b1 = *reinterpret_cast<const vec8*>(bp + 8);
        for (std::int64_t r = 0; r < kMr; ++r) {
            acc0[r] += ap[r] * b0;
            acc1[r] += ap[r] * b1;
        }
        ap += kMr;
    }
    for (std::int64_t r = 0; r < mr; ++r) {
        reinterpret_cast<vec8*>(c + r * ldc)[0] += acc0[r];
        reinterpret_cast<vec8*>(c + r * ldc + 8)[0] += acc1[r];
    }
}

// Scatter-add of a patch matrix back onto the image. Each input channel plane
// is owned by one thread and visited in a fixed (ky, kx, oy, ox) order.
void col2im(const ConvGeometry& g, const double* col, double* x) {
    const std::int64_t oh = g.out_height();
    const std::int64_t ow = g.out_width();
    const std::int64_t k = g.kernel;
#pragma omp parallel for schedule(static) if (g.in_channels * k * k * oh * ow > 32768)
    for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
        double* plane = x + ci * g.height * g.width;
        for (std::int64_t ky = 0; ky < k; ++ky) {
            for (std::int64_t kx = 0; kx < k; ++kx) {
                const double* src = col + ((ci * k + ky) * k + kx) * oh * ow;
                for (std::int64_t oy = 0; oy < oh; ++oy) {
                    const std::int64_t iy = oy * g.stride - g.padding + ky;
                    if (iy < 0 || iy >= g.height) continue;
                    for (std::int64_t ox = 0; ox < ow; ++ox) {
                        const std::int64_t ix = ox * g.stride - g.padding + kx;
                        if (ix >= 0 && ix < g.width) plane[iy * g.width + ix] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

namespace {

// C[m x n] += A[m x k] * B. `pack_lhs(i0, mr, p0, kc, out)` writes an mr x kc
// tile of A in the layout of pack_a; `pack(p0, kc, j0, cols, out)` writes the
// kc x cols block of B at (p0, j0) in the strip layout of pack_b.
template <typename PackA, typename PackB>
void gemm_driver(std::int64_t m, std::int64_t n, std::int64_t k, const PackA& pack_lhs, const PackB& pack,
                 double* c) {
    if (m == 0 || n == 0 || k == 0) return;
    const std::int64_t nblocks = (n + kNc - 1) / kNc;
    const std::int64_t mtiles = (m + kMr - 1) / kMr;
#pragma omp parallel if (m * n * k > 65536)
    {
        std::vector<double> bpack(static_cast<std::size_t>(kKc * kNc));
        std::vector<double> apack(static_cast<std::size_t>(kKc * kMr * mtiles));
#pragma omp for schedule(static)
        for (std::int64_t jb = 0; jb < nblocks; ++jb) {
            const std::int64_t j0 = jb * kNc;
            const std::int64_t cols = std::min(kNc, n - j0);
            for (std::int64_t p0 = 0; p0 < k; p0 += kKc) {
                const std::int64_t kc = std::min(kKc, k - p0);
                pack(p0, kc, j0, cols, bpack.data());
                for (std::int64_t t = 0; t < mtiles; ++t) {
                    pack_lhs(t * kMr, std::min(kMr, m - t * kMr), p0, kc, apack.data() + t * kMr * kc);
                }
                for (std::int64_t s = 0; s < cols; s += kNr) {
                    const double* strip = bpack.data() + s * kc;
                    for (std::int64_t t = 0; t < mtiles; ++t) {
                        micro_kernel(kc, apack.data() + t * kMr * kc, strip, c + t * kMr * n + j0 + s, n,
                                     std::min(kMr, m - t * kMr), std::min(kNr, cols - s));
                    }
                }
            }
        }
    }
}

auto dense_lhs(const double* a, std::int64_t k) {
    return [=](std::int64_t i0, std::int64_t mr, std::int64_t p0, std::int64_t kc, double* out) {
        pack_a(mr, kc, a + i0 * k + p0, k, out);
    };
}

void gemm_strided(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, std::int64_t rs,
                  std::int64_t cs, double* c) {
    gemm_driver(m, n, k, dense_lhs(a, k),
                [=](std::int64_t p0, std::int64_t kc, std::int64_t j0, std::int64_t cols, double* out) {
                    pack_b(kc, cols, b + p0 * rs + j0 * cs, rs, cs, out);
                },
                c);
}

// Packs a block of the implicit patch matrix of one image straight from the
// input planes: row p = (ci, ky, kx), column j = output pixel.
void pack_patches(const ConvGeometry& g, const double* x, std::int64_t p0, std::int64_t kc, std::int64_t j0,
                  std::int64_t cols, double* out) {
    const std::int64_t ow = g.out_width();
    const std::int64_t k = g.kernel;
    for (std::int64_t s = 0; s < cols; s += kNr) {
        const std::int64_t w = std::min(kNr, cols - s);
        std::int64_t iy0[kNr];
        std::int64_t ix0[kNr];
        for (std::int64_t jj = 0; jj < w; ++jj) {
            const std::int64_t j = j0 + s + jj;
            iy0[jj] = (j / ow) * g.stride - g.padding;
            ix0[jj] = (j % ow) * g.stride - g.padding;
        }
        // Whole strip on one output row with unit stride: a contiguous input run.
        const bool run = w == kNr && g.stride == 1 && iy0[0] == iy0[kNr - 1];
        std::int64_t ci = p0 / (k * k);
        std::int64_t ky = (p0 / k) % k;
        std::int64_t kx = p0 % k;
        for (std::int64_t p = 0; p < kc; ++p) {
            const double* plane = x + ci * g.height * g.width;
            double* dst = out + p * kNr;
            if (run) {
                const std::int64_t iy = iy0[0] + ky;
                const std::int64_t ix = ix0[0] + kx;
                if (iy < 0 || iy >= g.height) {
                    std::fill(dst, dst + kNr, 0.0);
                } else if (ix >= 0 && ix + kNr <= g.width) {
                    std::copy(plane + iy * g.width + ix, plane + iy * g.width + ix + kNr, dst);
                } else {
                    const double* row = plane + iy * g.width;
                    for (std::int64_t jj = 0; jj < kNr; ++jj) {
                        const std::int64_t c = ix + jj;
                        dst[jj] = (c >= 0 && c < g.width) ? row[c] : 0.0;
                    }
                }
            } else {
                std::int64_t jj = 0;
                for (; jj < w; ++jj) {
                    const std::int64_t iy = iy0[jj] + ky;
                    const std::int64_t ix = ix0[jj] + kx;
                    dst[jj] = (iy >= 0 && iy < g.height && ix >= 0 && ix < g.width) ? plane[iy * g.width + ix] : 0.0;
                }
                for (; jj < kNr; ++jj) dst[jj] = 0.0;
            }
            if (++kx == k) {
                kx = 0;
                if (++ky == k) {
                    ky = 0;
                    ++ci;
                }
            }
        }
        out += kc * kNr;
    }
}

// Packs rows i0 .. i0 + mr of the implicit patch matrix over output pixels
// p0 .. p0 + kc, zero-padding to kMr rows.
void pack_patch_rows(const ConvGeometry& g, const double* x, std::int64_t i0, std::int64_t mr, std::int64_t p0,
                     std::int64_t kc, double* out) {
    const std::int64_t ow = g.out_width();
    const std::int64_t k = g.kernel;
    if (mr < kMr) std::fill(out, out + kc * kMr, 0.0);
    for (std::int64_t rr = 0; rr < mr; ++rr) {
        const std::int64_t r = i0 + rr;
        const std::int64_t ci = r / (k * k);
        const std::int64_t ky = (r / k) % k;
        const std::int64_t kx = r % k;
        const double* plane = x + ci * g.height * g.width;
        std::int64_t p = 0;
        while (p < kc) {
            // One output-row segment of pixels.
            const std::int64_t j = p0 + p;
            const std::int64_t oy = j / ow;
            const std::int64_t ox0 = j % ow;
            const std::int64_t len = std::min(kc - p, ow - ox0);
            const std::int64_t iy = oy * g.stride - g.padding + ky;
            double* dst = out + p * kMr + rr;
            if (iy < 0 || iy >= g.height) {
                for (std::int64_t t = 0; t < len; ++t) dst[t * kMr] = 0.0;
            } else {
                const double* row = plane + iy * g.width;
                for (std::int64_t t = 0; t < len; ++t) {
                    const std::int64_t ix = (ox0 + t) * g.stride - g.padding + kx;
                    dst[t * kMr] = (ix >= 0 && ix < g.width) ? row[ix] : 0.0;
                }
            }
            p += len;
        }
    }
}

}  // namespace

void gemm_accumulate(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b,
                     double* c) {
    gemm_strided(m, n, k, a, b, n, 1, c);
}

void gemm_accumulate_bt(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* bt,
                        double* c) {
    gemm_strided(m, n, k, a, bt, 1, k, c);
}

namespace {

// Copies one image into a zero-bordered buffer of (H + 2p) x (W + 2p) planes.
void pad_image(const ConvGeometry& g, const double* x, double* padded) {
    const std::int64_t hp = g.height + 2 * g.padding;
    const std::int64_t wp = g.width + 2 * g.padding;
    for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
        for (std::int64_t iy = 0; iy < g.height; ++iy) {
            const double* src = x + (ci * g.height + iy) * g.width;
            std::copy(src, src + g.width, padded + (ci * hp + iy + g.padding) * wp + g.padding);
        }
    }
}

// Stride-1 weight gradient, transposed: gwt[r][o] += sum over pixels of
// patch(r, pixel) * gy[o][pixel], reading patch values in place.
void weight_grad_unit_stride(const ConvGeometry& g, const double* x, const double* gy, double* gwt) {
    const std::int64_t oh = g.out_height();
    const std::int64_t ow = g.out_width();
    const std::int64_t npix = oh * ow;
    const std::int64_t q = g.patch();
    const std::int64_t k = g.kernel;
    const std::int64_t hp = g.height + 2 * g.padding;
    const std::int64_t wp = g.width + 2 * g.padding;
    const std::int64_t co = g.out_channels;
    const std::int64_t ostrips = (co + kNr - 1) / kNr;
    const std::int64_t rtiles = (q + kMr - 1) / kMr;
    std::vector<std::int64_t> offsets(static_cast<std::size_t>(rtiles * kMr), 0);
    for (std::int64_t r = 0; r < q; ++r) offsets[r] = (r / (k * k)) * hp * wp + ((r / k) % k) * wp + r % k;
    std::vector<double> padded(static_cast<std::size_t>(g.in_channels * hp * wp), 0.0);
    // gy transposed into kNr-wide output-channel strips: [strip][pixel][kNr].
    std::vector<double> gyt(static_cast<std::size_t>(ostrips * npix * kNr));
    for (std::int64_t n = 0; n < g.batch; ++n) {
        pad_image(g, x + n * g.in_channels * g.height * g.width, padded.data());
        pack_b(npix, co, gy + n * co * npix, 1, npix, gyt.data());
#pragma omp parallel for schedule(static) if (q * co * npix > 65536)
        for (std::int64_t t = 0; t < rtiles; ++t) {
            const std::int64_t mr = std::min(kMr, q - t * kMr);
            const double* rows[kMr];
            for (std::int64_t rr = 0; rr < kMr; ++rr) {
                rows[rr] = padded.data() + (rr < mr ? offsets[t * kMr + rr] : 0);
            }
            for (std::int64_t os = 0; os < ostrips; ++os) {
                vec8 acc0[kMr] = {};
                vec8 acc1[kMr] = {};
                const double* bp = gyt.data() + os * npix * kNr;
                for (std::int64_t oy = 0; oy < oh; ++oy) {
                    const std::int64_t row_base = oy * wp;
                    for (std::int64_t ox = 0; ox < ow; ++ox) {
                        const vec8 b0 = *reinterpret_cast<const vec8*>(bp);
                        const vec8 b1 = *reinterpret_cast<const vec8*>(bp + 8);
                        const std::int64_t base = row_base + ox;
                        for (std::int64_t rr = 0; rr < kMr; ++rr) {
                            const double a = rows[rr][base];
                            acc0[rr] += a * b0;
                            acc1[rr] += a * b1;
                        }
                        bp += kNr;
                    }
                }
                const std::int64_t ow_cols = std::min(kNr, co - os * kNr);
                for (std::int64_t rr = 0; rr < mr; ++rr) {
                    double* dst = gwt + (t * kMr + rr) * co + os * kNr;
                    for (std::int64_t j = 0; j < ow_cols; ++j) dst[j] += j < 8 ? acc0[rr][j] : acc1[rr][j - 8];
                }
            }
        }
    }
}

// Stride-1 convolution with output rows a multiple of kNr wide: the input is
// zero-padded once and every B strip is a set of contiguous in-bounds runs.
void conv_unit_stride(const ConvGeometry& g, const double* x, const double* w, double* y) {
    const std::int64_t oh = g.out_height();
    const std::int64_t ow = g.out_width();
    const std::int64_t npix = oh * ow;
    const std::int64_t q = g.patch();
    const std::int64_t k = g.kernel;
    const std::int64_t hp = g.height + 2 * g.padding;
    const std::int64_t wp = g.width + 2 * g.padding;
    const std::int64_t m = g.out_channels;
    const std::int64_t mtiles = (m + kMr - 1) / kMr;
    std::vector<std::int64_t> offsets(static_cast<std::size_t>(q));
    for (std::int64_t r = 0; r < q; ++r) offsets[r] = (r / (k * k)) * hp * wp + ((r / k) % k) * wp + r % k;
    std::vector<double> padded(static_cast<std::size_t>(g.in_channels * hp * wp), 0.0);
    std::vector<double> apack(static_cast<std::size_t>(q * kMr * mtiles));
    for (std::int64_t t = 0; t < mtiles; ++t) {
        for (std::int64_t p0 = 0; p0 < q; p0 += kKc) {
            const std::int64_t kc = std::min(kKc, q - p0);
            pack_a(std::min(kMr, m - t * kMr), kc, w + t * kMr * q + p0, q, apack.data() + t * kMr * q + p0 * kMr);
        }
    }
    const std::int64_t strips = npix / kNr;
    for (std::int64_t n = 0; n < g.batch; ++n) {
        pad_image(g, x + n * g.in_channels * g.height * g.width, padded.data());
        double* yn = y + n * m * npix;
#pragma omp parallel for schedule(static) if (m * npix * q > 65536)
        for (std::int64_t st = 0; st < strips; ++st) {
            const std::int64_t j = st * kNr;
            const double* base = padded.data() + (j / ow) * wp + j % ow;
            for (std::int64_t p0 = 0; p0 < q; p0 += kKc) {
                const std::int64_t kc = std::min(kKc, q - p0);
                for (std::int64_t t = 0; t < mtiles; ++t) {
                    micro_kernel_gather(kc, apack.data() + t * kMr * q + p0 * kMr, base, offsets.data() + p0,
                                        yn + t * kMr * npix + j, npix, std::min(kMr, m - t * kMr));
                }
            }
        }
    }
}

// y += conv(x, w) for every image of the batch.
void conv_accumulate(const ConvGeometry& g, const double* x, const double* w, double* y) {
    const std::int64_t npix = g.out_height() * g.out_width();
    const std::int64_t q = g.patch();
    const std::int64_t in_size = g.in_channels * g.height * g.width;
    const std::int64_t out_size = g.out_channels * npix;
    const bool direct = g.kernel == 1 && g.stride == 1 && g.padding == 0;
    if (!direct && g.stride == 1 && g.out_width() % kNr == 0) {
        conv_unit_stride(g, x, w, y);
        return;
    }
    for (std::int64_t n = 0; n < g.batch; ++n) {
        const double* xn = x + n * in_size;
        if (direct) {
            gemm_accumulate(g.out_channels, npix, q, w, xn, y + n * out_size);
        } else {
            gemm_driver(g.out_channels, npix, q, dense_lhs(w, q),
                        [&](std::int64_t p0, std::int64_t kc, std::int64_t j0, std::int64_t cols, double* out) {
                            pack_patches(g, xn, p0, kc, j0, cols, out);
                        },
                        y + n * out_size);
        }
    }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
    const std::int64_t npix = g.out_height() * g.out_width();
    for (std::int64_t n = 0; n < g.batch; ++n) {
        for (std::int64_t o = 0; o < g.out_channels; ++o) {
            const double b0 = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
            double* plane = y.data() + (n * g.out_channels + o) * npix;
            std::fill(plane, plane + npix, b0);
        }
    }
    conv_accumulate(g, x.data(), w.data(), y.data());
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> w, std::span<const double> gy,
                           std::span<double> gx) {
    const std::int64_t k = g.kernel;
    const std::int64_t q = g.patch();
    if (g.stride == 1 && g.padding <= g.kernel - 1) {
        // Stride-1 input gradient is a convolution of gy with the spatially
        // flipped, channel-transposed kernel.
        std::vector<double> flipped(static_cast<std::size_t>(q * g.out_channels));
        for (std::int64_t o = 0; o < g.out_channels; ++o) {
            for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
                for (std::int64_t ky = 0; ky < k; ++ky) {
                    for (std::int64_t kx = 0; kx < k; ++kx) {
                        flipped[((ci * g.out_channels + o) * k + (k - 1 - ky)) * k + (k - 1 - kx)] =
                            w[((o * g.in_channels + ci) * k + ky) * k + kx];
                    }
                }
            }
        }
        ConvGeometry t;
        t.batch = g.batch;
        t.in_channels = g.out_channels;
        t.height = g.out_height();
        t.width = g.out_width();
        t.out_channels = g.in_channels;
        t.kernel = g.kernel;
        t.stride = 1;
        t.padding = g.kernel - 1 - g.padding;
        conv_accumulate(t, gy.data(), flipped.data(), gx.data());
        return;
    }

    const std::int64_t npix = g.out_height() * g.out_width();
    const std::int64_t in_size = g.in_channels * g.height * g.width;
    const std::int64_t out_size = g.out_channels * npix;
    std::vector<double> wt(static_cast<std::size_t>(q * g.out_channels));
    for (std::int64_t o = 0; o < g.out_channels; ++o) {
        for (std::int64_t r = 0; r < q; ++r) wt[r * g.out_channels + o] = w[o * q + r];
    }
    std::vector<double> dcol(static_cast<std::size_t>(q * npix));
    for (std::int64_t n = 0; n < g.batch; ++n) {
        std::fill(dcol.begin(), dcol.end(), 0.0);
        gemm_accumulate(q, npix, g.out_channels, wt.data(), gy.data() + n * out_size, dcol.data());
        col2im(g, dcol.data(), gx.data() + n * in_size);
    }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x, std::span<const double> gy,
                            std::span<double> gw, std::span<double> gb) {
    const std::int64_t npix = g.out_height() * g.out_width();
    const std::int64_t q = g.patch();
    const std::int64_t in_size = g.in_channels * g.height * g.width;
    const std::int64_t out_size = g.out_channels * npix;
    const std::int64_t co = g.out_channels;
    // Accumulated transposed: gw^T[q x co] += patches[q x npix] * gy^T.
    std::vector<double> gwt(static_cast<std::size_t>(q * co), 0.0);
    const bool direct = g.kernel == 1 && g.stride == 1 && g.padding == 0;
    if (g.stride == 1 && !direct) weight_grad_unit_stride(g, x.data(), gy.data(), gwt.data());
    for (std::int64_t n = 0; n < g.batch; ++n) {
        const double* xn = x.data() + n * in_size;
        const double* gyn = gy.data() + n * out_size;
        if (g.stride != 1 || direct) gemm_driver(q, co, npix,
                    [&](std::int64_t i0, std::int64_t mr, std::int64_t p0, std::int64_t kc, double* out) {
                        pack_patch_rows(g, xn, i0, mr, p0, kc, out);
                    },
                    [&](std::int64_t p0, std::int64_t kc, std::int64_t j0, std::int64_t cols, double* out) {
                        pack_b(kc, cols, gyn + p0 + j0 * npix, 1, npix, out);
                    },
                    gwt.data());
        if (!gb.empty()) {
            for (std::int64_t o = 0; o < co; ++o) {
                double s = 0.0;
                for (std::int64_t p = 0; p < npix; ++p) s += gyn[o * npix + p];
                gb[static_cast<std::size_t>(o)] += s;
            }
        }
    }
    for (std::int64_t o = 0; o < co; ++o) {
        for (std::int64_t r = 0; r < q; ++r) gw[static_cast<std::size_t>(o * q + r)] += gwt[static_cast<std::size_t>(r * co + o)];
    }
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
    omp_set_num_threads(std::max(1, n));
#else
    (void)n;
#endif
}

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
    const std::int64_t oh = g.out_height();
    const std::int64_t ow = g.out_width();
    const int k = g.kernel;
    for (std::int64_t n = 0; n < g.batch; ++n) {
        for (std::int64_t o = 0; o < g.out_channels; ++o) {
            for (std::int64_t oy = 0; oy < oh; ++oy) {
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    double s = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
                    for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
                        for (int ky = 0; ky < k; ++ky) {
                            const std::int64_t iy = oy * g.stride - g.padding + ky;
                            if (iy < 0 || iy >= g.height) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const std::int64_t ix = ox * g.stride - g.padding + kx;
                                if (ix < 0 || ix >= g.width) continue;
                                s += w[((o * g.in_channels + ci) * k + ky) * k + kx] *
                                     x[((n * g.in_channels + ci) * g.height + iy) * g.width + ix];
                            }
                        }
                    }
                    y[((n * g.out_channels + o) * oh + oy) * ow + ox] = s;
                }
            }
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> w, std::span<const double> gy,
                           std::span<double> gx) {
    const std::int64_t oh = g.out_height();
    const std::int64_t ow = g.out_width();
    const int k = g.kernel;
    for (std::int64_t n = 0; n < g.batch; ++n) {
        for (std::int64_t o = 0; o < g.out_channels; ++o) {
            for (std::int64_t oy = 0; oy < oh; ++oy) {
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    const double gv = gy[((n * g.out_channels + o) * oh + oy) * ow + ox];
                    for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
                        for (int ky = 0; ky < k; ++ky) {
                            const std::int64_t iy = oy * g.stride - g.padding + ky;
                            if (iy < 0 || iy >= g.height) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const std::int64_t ix = ox * g.stride - g.padding + kx;
                                if (ix < 0 || ix >= g.width) continue;
                                gx[((n * g.in_channels + ci) * g.height + iy) * g.width + ix] +=
                                    gv * w[((o * g.in_channels + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x, std::span<const double> gy,
                            std::span<double> gw, std::span<double> gb) {
    const std::int64_t oh = g.out_height();
    const std::int64_t ow = g.out_width();
    const int k = g.kernel;
    for (std::int64_t n = 0; n < g.batch; ++n) {
        for (std::int64_t o = 0; o < g.out_channels; ++o) {
            for (std::int64_t oy = 0; oy < oh; ++oy) {
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    const double gv = gy[((n * g.out_channels + o) * oh + oy) * ow + ox];
                    if (!gb.empty()) gb[static_cast<std::size_t>(o)] += gv;
                    for (std::int64_t ci = 0; ci < g.in_channels; ++ci) {
                        for (int ky = 0; ky < k; ++ky) {
                            const std::int64_t iy = oy * g.stride - g.padding + ky;
                            if (iy < 0 || iy >= g.height) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const std::int64_t ix = ox * g.stride - g.padding + kx;
                                if (ix < 0 || ix >= g.width) continue;
                                gw[((o * g.in_channels + ci) * k + ky) * k + kx] +=
                                    gv * x[((n * g.in_channels + ci) * g.height + iy) * g.width + ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace reference

}  // namespace ldc::kernels
