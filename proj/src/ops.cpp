#include "ldc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ldc/autograd.hpp"
#include "ldc/kernels.hpp"

namespace ldc {

namespace {

std::vector<double> copy_values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Unary map whose derivative is expressed through input value and output value.
template <class F, class D>
Tensor unary(const Tensor& a, F f, D dfdx) {
    const auto in = a.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    Tensor x = a;
    auto y_vals = std::make_shared<std::vector<double>>(out);
    return record(a.shape(), std::move(out), {a}, [x, y_vals, dfdx](std::span<const double> g, GradBuffers& gb) {
        auto gx = gb[0];
        const auto xv = x.data();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i], (*y_vals)[i]);
    });
}

thread_local KinkTrace* g_active_trace = nullptr;

}  // namespace

KinkTrace::KinkTrace() : previous_(g_active_trace) { g_active_trace = this; }
KinkTrace::~KinkTrace() { g_active_trace = previous_; }

bool KinkTrace::active() { return g_active_trace != nullptr; }

void KinkTrace::note(int side) {
    if (g_active_trace == nullptr) return;
    std::uint64_t& h = g_active_trace->hash_;
    h = (h ^ static_cast<std::uint64_t>(side + 1)) * 0x100000001b3ull;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out = copy_values(a);
    const auto bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return record(a.shape(), std::move(out), {a, b}, [](std::span<const double> g, GradBuffers& gb) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (!gb.wants(k)) continue;
            auto gk = gb[k];
            for (std::size_t i = 0; i < g.size(); ++i) gk[i] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out = copy_values(a);
    const auto bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return record(a.shape(), std::move(out), {a, b}, [](std::span<const double> g, GradBuffers& gb) {
        if (gb.wants(0)) {
            auto ga = gb[0];
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (gb.wants(1)) {
            auto gbv = gb[1];
            for (std::size_t i = 0; i < g.size(); ++i) gbv[i] -= g[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out = copy_values(a);
    const auto bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return record(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g, GradBuffers& gb) {
        const auto av = a.data();
        const auto bv = b.data();
        if (gb.wants(0)) {
            auto ga = gb[0];
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (gb.wants(1)) {
            auto gbv = gb[1];
            for (std::size_t i = 0; i < g.size(); ++i) gbv[i] += g[i] * av[i];
        }
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    std::vector<double> out = copy_values(a);
    const auto bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
    return record(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g, GradBuffers& gb) {
        const auto av = a.data();
        const auto bv = b.data();
        if (gb.wants(0)) {
            auto ga = gb[0];
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
        }
        if (gb.wants(1)) {
            auto gbv = gb[1];
            for (std::size_t i = 0; i < g.size(); ++i) gbv[i] -= g[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    return unary(a, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary(a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
    if (KinkTrace::active()) {
        for (double v : a.data()) KinkTrace::note(v > 0.0 ? 1 : 0);
    }
    return unary(a, [](double v) { return v > 0.0 ? v : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
    return unary(
        a, [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
        [](double x, double) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        });
}

Tensor square(const Tensor& a) {
    return unary(a, [](double v) { return v * v; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (KinkTrace::active()) {
        for (double v : a.data()) KinkTrace::note(v < lo ? 0 : (v > hi ? 2 : 1));
    }
    return unary(
        a, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const std::size_t n = a.data().size();
    return record(Shape{1, 1, 1, 1}, {s}, {a}, [n](std::span<const double> g, GradBuffers& gb) {
        auto ga = gb[0];
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Shape sa = a.shape();
    const Shape sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
        throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
    }
    const Shape so{sa.n, sa.c + sb.c, sa.h, sa.w};
    const std::int64_t pa = sa.c * sa.plane();
    const std::int64_t pb = sb.c * sb.plane();
    std::vector<double> out(static_cast<std::size_t>(so.numel()));
    for (std::int64_t n = 0; n < sa.n; ++n) {
        std::copy_n(a.data().begin() + n * pa, pa, out.begin() + n * (pa + pb));
        std::copy_n(b.data().begin() + n * pb, pb, out.begin() + n * (pa + pb) + pa);
    }
    return record(so, std::move(out), {a, b}, [sa, pa, pb](std::span<const double> g, GradBuffers& gb) {
        for (std::int64_t n = 0; n < sa.n; ++n) {
            if (gb.wants(0)) {
                auto ga = gb[0];
                for (std::int64_t i = 0; i < pa; ++i) ga[n * pa + i] += g[n * (pa + pb) + i];
            }
            if (gb.wants(1)) {
                auto gbv = gb[1];
                for (std::int64_t i = 0; i < pb; ++i) gbv[n * pb + i] += g[n * (pa + pb) + pa + i];
            }
        }
    });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding) {
    const Shape sx = x.shape();
    const Shape sw = weight.shape();
    if (sw.h != sw.w) throw ShapeError("conv2d: kernel must be square, got " + sw.str());
    if (sw.h % 2 == 0) throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(sw.h));
    if (sx.c != sw.c) {
        throw ShapeError("conv2d: input has " + std::to_string(sx.c) + " channels, kernel expects " +
                         std::to_string(sw.c));
    }
    if (stride < 1) throw ConfigError("conv2d: stride must be positive");
    if (padding < 0) throw ConfigError("conv2d: padding must be non-negative");
    if (bias.defined() && bias.numel() != sw.n) throw ShapeError("conv2d: bias length mismatch");

    kernels::ConvGeometry g;
    g.batch = sx.n;
    g.in_channels = sx.c;
    g.height = sx.h;
    g.width = sx.w;
    g.out_channels = sw.n;
    g.kernel = static_cast<int>(sw.h);
    g.stride = stride;
    g.padding = padding;
    if (sx.h + 2 * padding < sw.h || sx.w + 2 * padding < sw.h) {
        throw ShapeError("conv2d: kernel larger than padded input");
    }
    const Shape so{sx.n, sw.n, g.out_height(), g.out_width()};
    std::vector<double> out(static_cast<std::size_t>(so.numel()));
    kernels::conv2d_forward(g, x.data(), weight.data(), bias.defined() ? bias.data() : std::span<const double>{},
                            out);

    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return record(so, std::move(out), std::move(inputs),
                  [g, x, weight, has_bias = bias.defined()](std::span<const double> gy, GradBuffers& gb) {
                      if (gb.wants(0)) kernels::conv2d_backward_input(g, weight.data(), gy, gb[0]);
                      const bool want_w = gb.wants(1);
                      const bool want_b = has_bias && gb.wants(2);
                      if (want_w) {
                          kernels::conv2d_backward_weight(g, x.data(), gy, gb[1],
                                                          want_b ? gb[2] : std::span<double>{});
                      } else if (want_b) {
                          auto gbias = gb[2];
                          const std::int64_t npix = g.out_height() * g.out_width();
                          for (std::int64_t n = 0; n < g.batch; ++n) {
                              for (std::int64_t o = 0; o < g.out_channels; ++o) {
                                  double s = 0.0;
                                  for (std::int64_t p = 0; p < npix; ++p) {
                                      s += gy[(n * g.out_channels + o) * npix + p];
                                  }
                                  gbias[o] += s;
                              }
                          }
                      }
                  });
}

Tensor conv2d(const Tensor& x, const ConvKernel& kern, int stride, int padding) {
    kern.validate();
    return conv2d(x, kern.weight, kern.bias, stride, padding);
}

Tensor kernel_spatial_sum(const Tensor& weight) {
    const Shape s = weight.shape();
    const std::int64_t kk = s.h * s.w;
    std::vector<double> out(static_cast<std::size_t>(s.n * s.c));
    const auto wv = weight.data();
    for (std::int64_t i = 0; i < s.n * s.c; ++i) {
        double acc = 0.0;
        for (std::int64_t t = 0; t < kk; ++t) acc += wv[i * kk + t];
        out[i] = acc;
    }
    return record(Shape{s.n, s.c, 1, 1}, std::move(out), {weight}, [kk](std::span<const double> g, GradBuffers& gb) {
        auto gw = gb[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
            for (std::int64_t t = 0; t < kk; ++t) gw[i * kk + t] += g[i];
        }
    });
}

Tensor avg_downsample2(const Tensor& x) {
    const Shape s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("avg_downsample2 needs even extents, got " + s.str());
    const Shape so{s.n, s.c, s.h / 2, s.w / 2};
    std::vector<double> out(static_cast<std::size_t>(so.numel()));
    const auto xv = x.data();
    for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
        const double* src = xv.data() + nc * s.plane();
        double* dst = out.data() + nc * so.plane();
        for (std::int64_t y = 0; y < so.h; ++y) {
            for (std::int64_t xx = 0; xx < so.w; ++xx) {
                const double* p = src + 2 * y * s.w + 2 * xx;
                dst[y * so.w + xx] = 0.25 * (p[0] + p[1] + p[s.w] + p[s.w + 1]);
            }
        }
    }
    return record(so, std::move(out), {x}, [s, so](std::span<const double> g, GradBuffers& gb) {
        auto gx = gb[0];
        for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
            for (std::int64_t y = 0; y < so.h; ++y) {
                for (std::int64_t xx = 0; xx < so.w; ++xx) {
                    const double v = 0.25 * g[nc * so.plane() + y * so.w + xx];
                    double* p = gx.data() + nc * s.plane() + 2 * y * s.w + 2 * xx;
                    p[0] += v;
                    p[1] += v;
                    p[s.w] += v;
                    p[s.w + 1] += v;
                }
            }
        }
    });
}

namespace {

struct Tap {
    std::int64_t i0;
    std::int64_t i1;
    double t;
};

// Source taps for 2x upsampling along one axis of the given extent.
std::vector<Tap> upsample_taps(std::int64_t extent) {
    std::vector<Tap> taps(static_cast<std::size_t>(2 * extent));
    for (std::int64_t i = 0; i < 2 * extent; ++i) {
        double src = (static_cast<double>(i) + 0.5) / 2.0 - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(extent - 1));
        const auto i0 = static_cast<std::int64_t>(std::floor(src));
        const std::int64_t i1 = std::min(i0 + 1, extent - 1);
        taps[i] = {i0, i1, src - static_cast<double>(i0)};
    }
    return taps;
}

}  // namespace

Tensor upsample2_bilinear(const Tensor& x) {
    const Shape s = x.shape();
    const Shape so{s.n, s.c, 2 * s.h, 2 * s.w};
    const auto ty = upsample_taps(s.h);
    const auto tx = upsample_taps(s.w);
    std::vector<double> out(static_cast<std::size_t>(so.numel()));
    const auto xv = x.data();
    for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
        const double* src = xv.data() + nc * s.plane();
        double* dst = out.data() + nc * so.plane();
        for (std::int64_t y = 0; y < so.h; ++y) {
            const Tap& a = ty[y];
            for (std::int64_t xx = 0; xx < so.w; ++xx) {
                const Tap& b = tx[xx];
                const double top = (1.0 - b.t) * src[a.i0 * s.w + b.i0] + b.t * src[a.i0 * s.w + b.i1];
                const double bot = (1.0 - b.t) * src[a.i1 * s.w + b.i0] + b.t * src[a.i1 * s.w + b.i1];
                dst[y * so.w + xx] = (1.0 - a.t) * top + a.t * bot;
            }
        }
    }
    return record(so, std::move(out), {x}, [s, so, ty, tx](std::span<const double> g, GradBuffers& gb) {
        auto gx = gb[0];
        for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
            double* dst = gx.data() + nc * s.plane();
            const double* go = g.data() + nc * so.plane();
            for (std::int64_t y = 0; y < so.h; ++y) {
                const Tap& a = ty[y];
                for (std::int64_t xx = 0; xx < so.w; ++xx) {
                    const Tap& b = tx[xx];
                    const double v = go[y * so.w + xx];
                    dst[a.i0 * s.w + b.i0] += (1.0 - a.t) * (1.0 - b.t) * v;
                    dst[a.i0 * s.w + b.i1] += (1.0 - a.t) * b.t * v;
                    dst[a.i1 * s.w + b.i0] += a.t * (1.0 - b.t) * v;
                    dst[a.i1 * s.w + b.i1] += a.t * b.t * v;
                }
            }
        }
    });
}

BatchNormState BatchNormState::fresh(std::int64_t channels) {
    BatchNormState st;
    st.running_mean = Tensor::zeros({1, channels, 1, 1});
    st.running_var = Tensor::full({1, channels, 1, 1}, 1.0);
    return st;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, bool training,
                  bool update_stats) {
    const Shape s = x.shape();
    if (gamma.numel() != s.c || beta.numel() != s.c || state.running_mean.numel() != s.c ||
        state.running_var.numel() != s.c) {
        throw ShapeError("batch_norm: parameter length does not match " + std::to_string(s.c) + " channels");
    }
    const std::int64_t count = s.n * s.plane();
    if (training && count < 2) throw ShapeError("batch_norm: training needs more than one value per channel");

    const auto xv = x.data();
    std::vector<double> mean_c(static_cast<std::size_t>(s.c));
    std::vector<double> inv_std(static_cast<std::size_t>(s.c));
    for (std::int64_t c = 0; c < s.c; ++c) {
        double mu;
        double var;
        if (training) {
            double acc = 0.0;
            for (std::int64_t n = 0; n < s.n; ++n) {
                const double* p = xv.data() + (n * s.c + c) * s.plane();
                for (std::int64_t i = 0; i < s.plane(); ++i) acc += p[i];
            }
            mu = acc / static_cast<double>(count);
            double sq = 0.0;
            for (std::int64_t n = 0; n < s.n; ++n) {
                const double* p = xv.data() + (n * s.c + c) * s.plane();
                for (std::int64_t i = 0; i < s.plane(); ++i) sq += (p[i] - mu) * (p[i] - mu);
            }
            var = sq / static_cast<double>(count);
            if (update_stats) {
                auto rm = state.running_mean.mutable_data();
                auto rv = state.running_var.mutable_data();
                const double unbiased = sq / static_cast<double>(count - 1);
                rm[c] = (1.0 - state.momentum) * rm[c] + state.momentum * mu;
                rv[c] = (1.0 - state.momentum) * rv[c] + state.momentum * unbiased;
            }
        } else {
            mu = state.running_mean.data()[c];
            var = state.running_var.data()[c];
        }
        mean_c[c] = mu;
        inv_std[c] = 1.0 / std::sqrt(var + state.eps);
    }

    std::vector<double> xhat(xv.size());
    std::vector<double> out(xv.size());
    const auto gv = gamma.data();
    const auto bv = beta.data();
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
            const std::int64_t base = (n * s.c + c) * s.plane();
            for (std::int64_t i = 0; i < s.plane(); ++i) {
                const double h = (xv[base + i] - mean_c[c]) * inv_std[c];
                xhat[base + i] = h;
                out[base + i] = gv[c] * h + bv[c];
            }
        }
    }
    return record(s, std::move(out), {x, gamma, beta},
                  [s, count, training, gamma, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      std::span<const double> g, GradBuffers& gb) {
                      const auto gv = gamma.data();
                      for (std::int64_t c = 0; c < s.c; ++c) {
                          double sum_g = 0.0;
                          double sum_gx = 0.0;
                          for (std::int64_t n = 0; n < s.n; ++n) {
                              const std::int64_t base = (n * s.c + c) * s.plane();
                              for (std::int64_t i = 0; i < s.plane(); ++i) {
                                  sum_g += g[base + i];
                                  sum_gx += g[base + i] * xhat[base + i];
                              }
                          }
                          if (gb.wants(1)) gb[1][c] += sum_gx;
                          if (gb.wants(2)) gb[2][c] += sum_g;
                          if (!gb.wants(0)) continue;
                          auto gx = gb[0];
                          const double k = gv[c] * inv_std[c];
                          const double m = static_cast<double>(count);
                          for (std::int64_t n = 0; n < s.n; ++n) {
                              const std::int64_t base = (n * s.c + c) * s.plane();
                              for (std::int64_t i = 0; i < s.plane(); ++i) {
                                  if (training) {
                                      gx[base + i] += k * (g[base + i] - sum_g / m - xhat[base + i] * sum_gx / m);
                                  } else {
                                      gx[base + i] += k * g[base + i];
                                  }
                              }
                          }
                      }
                  });
}

}  // namespace ldc
