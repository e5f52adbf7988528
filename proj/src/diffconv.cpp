#include "ldc/diffconv.hpp"

#include <cmath>

#include "ldc/autograd.hpp"
#include "ldc/ops.hpp"

namespace ldc {

void CdcConfig::validate() const {
    if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("CDC theta must lie in [0, 1]");
}

void RicdConfig::validate() const {
    auto odd_size = [](int k) { return k >= 1 && k <= 7 && k % 2 == 1; };
    if (!odd_size(k_large) || !odd_size(k_small)) throw ConfigError("RICD kernel sizes must be odd and in [1, 7]");
    if (k_large <= k_small) throw ConfigError("RICD needs k_large > k_small");
    if (steps < 1) throw ConfigError("RICD needs at least one step");
    if (hidden_channels < 1) throw ConfigError("RICD hidden width must be positive");
}

const char* to_string(CenterMode mode) {
    return mode == CenterMode::literal ? "literal" : "window_renormalized";
}

CenterMode center_mode_from_string(const std::string& s) {
    if (s == "window_renormalized" || s == "renormalized") return CenterMode::window_renormalized;
    if (s == "literal") return CenterMode::literal;
    throw ConfigError("unknown IAICD center mode '" + s + "'");
}

namespace {

void check_same_padding_kernel(const Tensor& x, const ConvKernel& kern) {
    kern.validate();
    if (x.shape().c != kern.in_channels()) {
        throw ShapeError("kernel expects " + std::to_string(kern.in_channels()) + " input channels, got " +
                         std::to_string(x.shape().c));
    }
}

// Subtracts center * sum(w) from a vanilla convolution: the shared tail of
// CDC and IAICD.
Tensor difference_against(const Tensor& x, const ConvKernel& kern, const Tensor& center, double weight) {
    const int pad = (kern.size() - 1) / 2;
    Tensor vanilla = conv2d(x, kern.weight, kern.bias, 1, pad);
    if (weight == 0.0) return vanilla;
    Tensor correction = conv2d(center, kernel_spatial_sum(kern.weight), Tensor{}, 1, 0);
    if (weight != 1.0) correction = scale(correction, weight);
    return sub(vanilla, correction);
}

}  // namespace

Tensor cdc_forward(const Tensor& x, const ConvKernel& kern, const CdcConfig& cfg) {
    cfg.validate();
    check_same_padding_kernel(x, kern);
    return difference_against(x, kern, x, cfg.theta);
}

Tensor ricd_step(const Tensor& x, const ConvKernel& large, const ConvKernel& small) {
    large.validate();
    small.validate();
    if (large.in_channels() != small.in_channels() || large.out_channels() != small.out_channels()) {
        throw ShapeError("RICD kernels must share input and output channel counts");
    }
    check_same_padding_kernel(x, large);
    Tensor a = conv2d(x, large.weight, large.bias, 1, (large.size() - 1) / 2);
    Tensor b = conv2d(x, small.weight, small.bias, 1, (small.size() - 1) / 2);
    return sub(a, b);
}

NormalizedIllumination normalize_illumination(const Tensor& m, CenterMode mode) {
    const Shape s = m.shape();
    const auto mv = m.data();
    for (double v : mv) {
        if (!(v > 0.0)) throw DomainError("illumination must be strictly positive");
    }
    std::vector<double> denom(static_cast<std::size_t>(s.n * s.plane()), 0.0);
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
            for (std::int64_t i = 0; i < s.plane(); ++i) {
                denom[n * s.plane() + i] += std::abs(mv[(n * s.c + c) * s.plane() + i]);
            }
        }
    }
    std::vector<double> out(mv.size());
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
            for (std::int64_t i = 0; i < s.plane(); ++i) {
                const std::int64_t idx = (n * s.c + c) * s.plane() + i;
                out[idx] = mv[idx] / denom[n * s.plane() + i];
            }
        }
    }
    Tensor values = record(s, std::move(out), {m}, [m, s, denom](std::span<const double> g, GradBuffers& gb) {
        auto gm = gb[0];
        const auto mv = m.data();
        for (std::int64_t n = 0; n < s.n; ++n) {
            for (std::int64_t i = 0; i < s.plane(); ++i) {
                const double d = denom[n * s.plane() + i];
                double dot = 0.0;
                for (std::int64_t c = 0; c < s.c; ++c) {
                    const std::int64_t idx = (n * s.c + c) * s.plane() + i;
                    dot += g[idx] * mv[idx];
                }
                for (std::int64_t c = 0; c < s.c; ++c) {
                    const std::int64_t idx = (n * s.c + c) * s.plane() + i;
                    const double sign = mv[idx] > 0.0 ? 1.0 : -1.0;
                    gm[idx] += g[idx] / d - sign * dot / (d * d);
                }
            }
        }
    });
    return {values, mode};
}

Tensor window_weights(const NormalizedIllumination& m, int k) {
    if (k < 1 || k % 2 == 0) throw ConfigError("window size must be odd");
    const Tensor& src = m.values;
    const Shape s = src.shape();
    const bool renorm = m.mode == CenterMode::window_renormalized;
    const std::int64_t kk = static_cast<std::int64_t>(k) * k;
    const int r = (k - 1) / 2;
    const Shape so{s.n, s.c * kk, s.h, s.w};
    std::vector<double> raw(static_cast<std::size_t>(so.numel()), 0.0);
    const auto mv = src.data();
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t g = 0; g < s.c; ++g) {
            const double* plane = mv.data() + (n * s.c + g) * s.plane();
            for (std::int64_t t = 0; t < kk; ++t) {
                const std::int64_t dy = t / k - r;
                const std::int64_t dx = t % k - r;
                double* dst = raw.data() + (n * so.c + g * kk + t) * s.plane();
                for (std::int64_t y = 0; y < s.h; ++y) {
                    const std::int64_t yy = y + dy;
                    if (yy < 0 || yy >= s.h) continue;
                    for (std::int64_t x = 0; x < s.w; ++x) {
                        const std::int64_t xx = x + dx;
                        if (xx >= 0 && xx < s.w) dst[y * s.w + x] = plane[yy * s.w + xx];
                    }
                }
            }
        }
    }
    // Per-(n, g, pixel) window sums for renormalization.
    std::vector<double> sums;
    std::vector<double> out = raw;
    if (renorm) {
        sums.assign(static_cast<std::size_t>(s.n * s.c * s.plane()), 0.0);
        for (std::int64_t ng = 0; ng < s.n * s.c; ++ng) {
            for (std::int64_t t = 0; t < kk; ++t) {
                const double* src_t = raw.data() + (ng * kk + t) * s.plane();
                for (std::int64_t i = 0; i < s.plane(); ++i) sums[ng * s.plane() + i] += src_t[i];
            }
            for (std::int64_t t = 0; t < kk; ++t) {
                double* dst = out.data() + (ng * kk + t) * s.plane();
                for (std::int64_t i = 0; i < s.plane(); ++i) {
                    const double z = sums[ng * s.plane() + i];
                    dst[i] = z > 0.0 ? dst[i] / z : 0.0;
                }
            }
        }
    }
    return record(so, std::move(out), {src},
                  [s, k, kk, r, renorm, raw = std::move(raw), sums = std::move(sums)](std::span<const double> g,
                                                                                     GradBuffers& gb) {
                      auto gm = gb[0];
                      std::vector<double> graw(g.begin(), g.end());
                      if (renorm) {
                          for (std::int64_t ng = 0; ng < s.n * s.c; ++ng) {
                              for (std::int64_t i = 0; i < s.plane(); ++i) {
                                  const double z = sums[ng * s.plane() + i];
                                  if (!(z > 0.0)) {
                                      for (std::int64_t t = 0; t < kk; ++t) graw[(ng * kk + t) * s.plane() + i] = 0.0;
                                      continue;
                                  }
                                  double dot = 0.0;
                                  for (std::int64_t t = 0; t < kk; ++t) {
                                      const std::int64_t idx = (ng * kk + t) * s.plane() + i;
                                      dot += g[idx] * raw[idx];
                                  }
                                  for (std::int64_t t = 0; t < kk; ++t) {
                                      const std::int64_t idx = (ng * kk + t) * s.plane() + i;
                                      graw[idx] = g[idx] / z - dot / (z * z);
                                  }
                              }
                          }
                      }
                      for (std::int64_t ng = 0; ng < s.n * s.c; ++ng) {
                          double* plane = gm.data() + ng * s.plane();
                          for (std::int64_t t = 0; t < kk; ++t) {
                              const std::int64_t dy = t / k - r;
                              const std::int64_t dx = t % k - r;
                              const double* src_t = graw.data() + (ng * kk + t) * s.plane();
                              for (std::int64_t y = 0; y < s.h; ++y) {
                                  const std::int64_t yy = y + dy;
                                  if (yy < 0 || yy >= s.h) continue;
                                  for (std::int64_t x = 0; x < s.w; ++x) {
                                      const std::int64_t xx = x + dx;
                                      if (xx >= 0 && xx < s.w) plane[yy * s.w + xx] += src_t[y * s.w + x];
                                  }
                              }
                          }
                      }
                  });
}

Tensor window_center(const Tensor& x, const Tensor& weights, int k) {
    const Shape sx = x.shape();
    const Shape sw = weights.shape();
    const std::int64_t kk = static_cast<std::int64_t>(k) * k;
    if (sw.n != sx.n || sw.h != sx.h || sw.w != sx.w || sw.c % kk != 0 || sw.c == 0) {
        throw ShapeError("window weights " + sw.str() + " do not match features " + sx.str() + " for k=" +
                         std::to_string(k));
    }
    const std::int64_t groups = sw.c / kk;
    const int r = (k - 1) / 2;
    auto group_of = [groups, c_total = sx.c](std::int64_t c) { return c * groups / c_total; };

    std::vector<double> out(static_cast<std::size_t>(sx.numel()), 0.0);
    const auto xv = x.data();
    const auto wv = weights.data();
    for (std::int64_t n = 0; n < sx.n; ++n) {
        for (std::int64_t c = 0; c < sx.c; ++c) {
            const double* xp = xv.data() + (n * sx.c + c) * sx.plane();
            double* dst = out.data() + (n * sx.c + c) * sx.plane();
            const std::int64_t g = group_of(c);
            for (std::int64_t t = 0; t < kk; ++t) {
                const std::int64_t dy = t / k - r;
                const std::int64_t dx = t % k - r;
                const double* wp = wv.data() + (n * sw.c + g * kk + t) * sx.plane();
                for (std::int64_t y = 0; y < sx.h; ++y) {
                    const std::int64_t yy = y + dy;
                    if (yy < 0 || yy >= sx.h) continue;
                    for (std::int64_t xx = 0; xx < sx.w; ++xx) {
                        const std::int64_t xs = xx + dx;
                        if (xs >= 0 && xs < sx.w) dst[y * sx.w + xx] += wp[y * sx.w + xx] * xp[yy * sx.w + xs];
                    }
                }
            }
        }
    }
    return record(sx, std::move(out), {x, weights},
                  [x, weights, sx, sw, k, kk, r, group_of](std::span<const double> g, GradBuffers& gb) {
                      const auto xv = x.data();
                      const auto wv = weights.data();
                      const bool want_x = gb.wants(0);
                      const bool want_w = gb.wants(1);
                      for (std::int64_t n = 0; n < sx.n; ++n) {
                          for (std::int64_t c = 0; c < sx.c; ++c) {
                              const std::int64_t base = (n * sx.c + c) * sx.plane();
                              const std::int64_t grp = group_of(c);
                              for (std::int64_t t = 0; t < kk; ++t) {
                                  const std::int64_t dy = t / k - r;
                                  const std::int64_t dx = t % k - r;
                                  const std::int64_t wbase = (n * sw.c + grp * kk + t) * sx.plane();
                                  for (std::int64_t y = 0; y < sx.h; ++y) {
                                      const std::int64_t yy = y + dy;
                                      if (yy < 0 || yy >= sx.h) continue;
                                      for (std::int64_t xx = 0; xx < sx.w; ++xx) {
                                          const std::int64_t xs = xx + dx;
                                          if (xs < 0 || xs >= sx.w) continue;
                                          const double go = g[base + y * sx.w + xx];
                                          if (want_x) gb[0][base + yy * sx.w + xs] += go * wv[wbase + y * sx.w + xx];
                                          if (want_w) gb[1][wbase + y * sx.w + xx] += go * xv[base + yy * sx.w + xs];
                                      }
                                  }
                              }
                          }
                      }
                  });
}

Tensor iaicd_with_weights(const Tensor& x, const ConvKernel& kern, const Tensor& weights) {
    check_same_padding_kernel(x, kern);
    Tensor center = window_center(x, weights, kern.size());
    return difference_against(x, kern, center, 1.0);
}

Tensor iaicd_forward(const Tensor& x, const ConvKernel& kern, const NormalizedIllumination& m) {
    check_same_padding_kernel(x, kern);
    if (m.values.shape().n != x.shape().n || m.values.shape().h != x.shape().h ||
        m.values.shape().w != x.shape().w) {
        throw ShapeError("illumination " + m.values.shape().str() + " does not spatially match features " +
                         x.shape().str());
    }
    return iaicd_with_weights(x, kern, window_weights(m, kern.size()));
}

Tensor iaicd_forward(const Tensor& x, const ConvKernel& kern, const Tensor& m, CenterMode mode) {
    if (m.shape().n != x.shape().n || m.shape().h != x.shape().h || m.shape().w != x.shape().w) {
        throw ShapeError("illumination " + m.shape().str() + " does not spatially match features " +
                         x.shape().str());
    }
    return iaicd_forward(x, kern, normalize_illumination(m, mode));
}

}  // namespace ldc
