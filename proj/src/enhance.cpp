#include "ldc/enhance.hpp"

#include <cmath>

#include "ldc/autograd.hpp"
#include "ldc/ops.hpp"

namespace ldc {

namespace {
constexpr int kSmoothRadius = 2;
constexpr double kSmoothSigma = 1.0;
}  // namespace

void EnhanceHead::validate() const {
    ricd.validate();
    if (static_cast<int>(steps.size()) != ricd.steps) {
        throw ConfigError("enhance head has " + std::to_string(steps.size()) + " kernel pairs for " +
                          std::to_string(ricd.steps) + " steps");
    }
    if (!(floor > 0.0 && floor < 1.0)) throw ConfigError("illumination floor must lie in (0, 1)");
}

IlluminationMap estimate_illumination(const Tensor& x, const EnhanceHead& head) {
    if (x.shape().c != 3) throw ShapeError("illumination estimation needs a 3-channel image, got " + x.shape().str());
    Tensor f = conv2d(x, head.project_in, 1, (head.project_in.size() - 1) / 2);
    for (const RicdPair& pair : head.steps) {
        if (head.use_ricd) {
            f = relu(ricd_step(f, pair.large, pair.small));
        } else {
            f = relu(conv2d(f, pair.small, 1, (pair.small.size() - 1) / 2));
        }
    }
    Tensor s = sigmoid(conv2d(f, head.project_out, 1, 0));
    // floor + (1 - floor) * s written as 1 - (1 - floor)(1 - s) so that s == 1 gives exactly 1.
    Tensor m = add_scalar(scale(add_scalar(s, -1.0), 1.0 - head.floor), 1.0);
    return {m, head.floor};
}

Tensor retinex_enhance(const Tensor& x, const IlluminationMap& m) {
    require_same_shape(x, m.values, "retinex_enhance");
    const double tol = 1e-12;
    if (m.values.min() < m.floor - tol) throw DomainError("illumination below its floor");
    return clamp(div(x, m.values), 0.0, 1.0);
}

Tensor fidelity_loss(const IlluminationMap& m, const Tensor& x) {
    require_same_shape(m.values, x, "fidelity_loss");
    if (x.numel() == 0) throw DomainError("fidelity loss of an empty map");
    return mean(square(sub(m.values, x)));
}

double smoothness_gaussian(int dy, int dx) {
    return std::exp(-static_cast<double>(dy * dy + dx * dx) / (2.0 * kSmoothSigma * kSmoothSigma));
}

Tensor smoothness_loss(const IlluminationMap& m) {
    const Tensor& v = m.values;
    const Shape s = v.shape();
    const int win = 2 * kSmoothRadius + 1;
    if (s.h < win || s.w < win) throw DomainError("smoothness loss needs at least a 5x5 map, got " + s.str());

    // Per-pixel normalizer over in-image neighbors (same for every channel).
    std::vector<double> norm(static_cast<std::size_t>(s.plane()), 0.0);
    for (std::int64_t y = 0; y < s.h; ++y) {
        for (std::int64_t x = 0; x < s.w; ++x) {
            double z = 0.0;
            for (int dy = -kSmoothRadius; dy <= kSmoothRadius; ++dy) {
                for (int dx = -kSmoothRadius; dx <= kSmoothRadius; ++dx) {
                    const std::int64_t yy = y + dy;
                    const std::int64_t xx = x + dx;
                    if (yy >= 0 && yy < s.h && xx >= 0 && xx < s.w) z += smoothness_gaussian(dy, dx);
                }
            }
            norm[y * s.w + x] = z;
        }
    }

    const auto mv = v.data();
    const bool tracing = KinkTrace::active();
    double total = 0.0;
    for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
        const double* p = mv.data() + nc * s.plane();
        for (std::int64_t y = 0; y < s.h; ++y) {
            for (std::int64_t x = 0; x < s.w; ++x) {
                const double mi = p[y * s.w + x];
                const double z = norm[y * s.w + x];
                for (int dy = -kSmoothRadius; dy <= kSmoothRadius; ++dy) {
                    for (int dx = -kSmoothRadius; dx <= kSmoothRadius; ++dx) {
                        const std::int64_t yy = y + dy;
                        const std::int64_t xx = x + dx;
                        if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
                        const double d = mi - p[yy * s.w + xx];
                        if (tracing) KinkTrace::note(d > 0.0 ? 1 : (d < 0.0 ? 2 : 0));
                        total += smoothness_gaussian(dy, dx) / z * std::abs(d);
                    }
                }
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(s.numel());
    return record(Shape{1, 1, 1, 1}, {total * inv_n}, {v}, [v, s, norm, inv_n](std::span<const double> g, GradBuffers& gb) {
        auto gm = gb[0];
        const auto mv = v.data();
        const double go = g[0] * inv_n;
        for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
            const double* p = mv.data() + nc * s.plane();
            double* gp = gm.data() + nc * s.plane();
            for (std::int64_t y = 0; y < s.h; ++y) {
                for (std::int64_t x = 0; x < s.w; ++x) {
                    const double mi = p[y * s.w + x];
                    const double z = norm[y * s.w + x];
                    for (int dy = -kSmoothRadius; dy <= kSmoothRadius; ++dy) {
                        for (int dx = -kSmoothRadius; dx <= kSmoothRadius; ++dx) {
                            const std::int64_t yy = y + dy;
                            const std::int64_t xx = x + dx;
                            if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
                            const double d = mi - p[yy * s.w + xx];
                            const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                            const double w = go * smoothness_gaussian(dy, dx) / z * sign;
                            gp[y * s.w + x] += w;
                            gp[yy * s.w + xx] -= w;
                        }
                    }
                }
            }
        }
    });
}

}  // namespace ldc
