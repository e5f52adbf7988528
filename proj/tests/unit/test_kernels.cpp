#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "ldc/kernels.hpp"
#include "ldc/random.hpp"

using namespace ldc;
using kernels::ConvGeometry;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& e : v) e = rng.uniform(-1.0, 1.0);
    return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

struct Case {
    ConvGeometry g;
    std::vector<double> x, w, b, gy;

    Case(ConvGeometry geom, std::uint64_t seed) : g(geom) {
        Rng rng(seed);
        x = random_values(static_cast<std::size_t>(g.batch * g.in_channels * g.height * g.width), rng);
        w = random_values(static_cast<std::size_t>(g.out_channels * g.patch()), rng);
        b = random_values(static_cast<std::size_t>(g.out_channels), rng);
        gy = random_values(out_size(), rng);
    }
    std::size_t out_size() const {
        return static_cast<std::size_t>(g.batch * g.out_channels * g.out_height() * g.out_width());
    }
};

std::vector<ConvGeometry> geometries() {
    std::vector<ConvGeometry> gs;
    for (int k : {1, 3, 5, 7})
        for (int stride : {1, 2})
            for (std::int64_t width : {16, 13, 32}) {
                const int pad = stride == 1 ? k / 2 : (k - 1) / 2;
                gs.push_back(ConvGeometry{2, 5, 11, width, 19, k, stride, pad});
            }
    gs.push_back(ConvGeometry{1, 3, 8, 8, 4, 3, 1, 0});
    gs.push_back(ConvGeometry{1, 3, 8, 8, 4, 3, 1, 2});
    gs.push_back(ConvGeometry{3, 17, 16, 16, 9, 3, 1, 1});
    return gs;
}

}  // namespace

TEST_SUITE("kernels") {
    TEST_CASE("gemm matches naive products") {
        Rng rng(1);
        for (auto [m, n, k] : {std::array<std::int64_t, 3>{1, 1, 1}, {7, 19, 5}, {33, 300, 270}, {16, 16, 16}}) {
            const auto a = random_values(static_cast<std::size_t>(m * k), rng);
            const auto b = random_values(static_cast<std::size_t>(k * n), rng);
            std::vector<double> c(static_cast<std::size_t>(m * n), 0.5), ct = c, ref = c;
            std::vector<double> bt(b.size());
            for (std::int64_t p = 0; p < k; ++p)
                for (std::int64_t j = 0; j < n; ++j) bt[static_cast<std::size_t>(j * k + p)] = b[static_cast<std::size_t>(p * n + j)];
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t j = 0; j < n; ++j)
                    for (std::int64_t p = 0; p < k; ++p)
                        ref[static_cast<std::size_t>(i * n + j)] +=
                            a[static_cast<std::size_t>(i * k + p)] * b[static_cast<std::size_t>(p * n + j)];
            kernels::gemm_accumulate(m, n, k, a.data(), b.data(), c.data());
            kernels::gemm_accumulate_bt(m, n, k, a.data(), bt.data(), ct.data());
            CHECK(max_diff(c, ref) < 1e-11);
            CHECK(max_diff(ct, ref) < 1e-11);
        }
    }

    TEST_CASE("blocked convolution matches the serial reference") {
        std::uint64_t seed = 100;
        for (const ConvGeometry& g : geometries()) {
            Case c(g, seed++);
            CAPTURE(g.kernel);
            CAPTURE(g.stride);
            CAPTURE(g.padding);
            CAPTURE(g.width);
            std::vector<double> y(c.out_size()), yr(c.out_size());
            kernels::conv2d_forward(g, c.x, c.w, c.b, y);
            kernels::reference::conv2d_forward(g, c.x, c.w, c.b, yr);
            CHECK(max_diff(y, yr) < 1e-11);

            std::vector<double> gx(c.x.size(), 0.25), gxr = gx;
            kernels::conv2d_backward_input(g, c.w, c.gy, gx);
            kernels::reference::conv2d_backward_input(g, c.w, c.gy, gxr);
            CHECK(max_diff(gx, gxr) < 1e-11);

            std::vector<double> gw(c.w.size(), -0.5), gwr = gw, gb(c.b.size(), 1.0), gbr = gb;
            kernels::conv2d_backward_weight(g, c.x, c.gy, gw, gb);
            kernels::reference::conv2d_backward_weight(g, c.x, c.gy, gwr, gbr);
            CHECK(max_diff(gw, gwr) < 1e-10);
            CHECK(max_diff(gb, gbr) < 1e-12);
        }
    }

    TEST_CASE("results are bit-identical across thread counts") {
        const int saved = kernels::max_threads();
        for (const ConvGeometry& g : {ConvGeometry{2, 16, 32, 32, 16, 3, 1, 1}, ConvGeometry{2, 8, 17, 17, 12, 5, 2, 2}}) {
            Case c(g, 7);
            std::vector<std::vector<double>> outputs;
            for (int threads : {1, 2, 3, 4}) {
                kernels::set_threads(threads);
                std::vector<double> y(c.out_size()), gx(c.x.size()), gw(c.w.size()), gb(c.b.size());
                kernels::conv2d_forward(g, c.x, c.w, c.b, y);
                kernels::conv2d_backward_input(g, c.w, c.gy, gx);
                kernels::conv2d_backward_weight(g, c.x, c.gy, gw, gb);
                y.insert(y.end(), gx.begin(), gx.end());
                y.insert(y.end(), gw.begin(), gw.end());
                y.insert(y.end(), gb.begin(), gb.end());
                outputs.push_back(std::move(y));
            }
            for (std::size_t i = 1; i < outputs.size(); ++i) CHECK(outputs[i] == outputs[0]);
        }
        kernels::set_threads(saved);
    }
}
