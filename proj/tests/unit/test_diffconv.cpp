#include <doctest.h>

#include "ldc/diffconv.hpp"
#include "ldc/ops.hpp"
#include "oracles.hpp"

using namespace ldc;

namespace {

ConvKernel random_kernel(std::int64_t out, std::int64_t in, int k, Rng& rng, bool with_bias = false) {
    ConvKernel kern;
    kern.weight = oracle::random_tensor(Shape{out, in, k, k}, rng);
    if (with_bias) kern.bias = oracle::random_tensor(Shape{1, out, 1, 1}, rng);
    return kern;
}

ConvKernel delta_kernel(std::int64_t channels, int k) {
    ConvKernel kern = ConvKernel::zeros(channels, channels, k, false);
    for (std::int64_t c = 0; c < channels; ++c) kern.weight.at(c, c, k / 2, k / 2) = 1.0;
    return kern;
}

Tensor one_hot_center_weights(Shape x, std::int64_t groups, int k) {
    Tensor w(Shape{x.n, groups * k * k, x.h, x.w});
    for (std::int64_t n = 0; n < x.n; ++n)
        for (std::int64_t g = 0; g < groups; ++g)
            for (std::int64_t i = 0; i < x.h; ++i)
                for (std::int64_t j = 0; j < x.w; ++j) w.at(n, g * k * k + (k * k) / 2, i, j) = 1.0;
    return w;
}

// Largest |y| over pixels whose whole window lies inside the image.
double interior_peak(const Tensor& y, std::int64_t radius) {
    double peak = 0.0;
    const Shape s = y.shape();
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t i = radius; i < s.h - radius; ++i)
                for (std::int64_t j = radius; j < s.w - radius; ++j) peak = std::max(peak, std::abs(y.at(n, c, i, j)));
    return peak;
}

}  // namespace

TEST_SUITE("diffconv") {
    TEST_CASE("config validation") {
        CHECK_THROWS_AS((CdcConfig{1.5}.validate()), ConfigError);
        CHECK_THROWS_AS((CdcConfig{-0.1}.validate()), ConfigError);
        CHECK_NOTHROW((CdcConfig{0.0}.validate()));
        CHECK_THROWS_AS((RicdConfig{3, 3, 1, 4}.validate()), ConfigError);
        CHECK_THROWS_AS((RicdConfig{5, 3, 0, 4}.validate()), ConfigError);
        CHECK(center_mode_from_string(to_string(CenterMode::literal)) == CenterMode::literal);
        CHECK_THROWS_AS(center_mode_from_string("spatial"), ConfigError);
    }

    TEST_CASE("cdc on a constant input with theta 1 is zero away from the border") {
        Rng rng(1);
        const Tensor x(Shape{1, 2, 6, 6}, 0.8);
        const ConvKernel k = random_kernel(3, 2, 3, rng);
        const Tensor y = cdc_forward(x, k, CdcConfig{1.0});
        CHECK(interior_peak(y, 1) < 1e-15);
        CHECK(oracle::max_abs_diff(y, oracle::cdc_literal(x, k.weight, Tensor())) < 1e-14);
    }

    TEST_CASE("cdc with theta 0 is the vanilla convolution") {
        Rng rng(2);
        const Tensor x = oracle::random_tensor(Shape{2, 3, 7, 5}, rng);
        const ConvKernel k = random_kernel(4, 3, 3, rng, true);
        CHECK(oracle::max_abs_diff(cdc_forward(x, k, CdcConfig{0.0}), conv2d(x, k, 1, 1)) == 0.0);
    }

    TEST_CASE("cdc matches the literal mixture oracle") {
        Rng rng(3);
        const Tensor x = oracle::random_tensor(Shape{1, 2, 5, 5}, rng);
        const ConvKernel k = random_kernel(3, 2, 3, rng, true);
        CHECK(oracle::max_abs_diff(cdc_forward(x, k, CdcConfig{0.7}), oracle::cdc_mixture(x, k.weight, k.bias, 0.7)) <
              1e-9);
    }

    TEST_CASE("cdc is shift-equivariant on interiors") {
        Rng rng(4);
        const Tensor x = oracle::random_tensor(Shape{1, 1, 10, 10}, rng);
        Tensor shifted(x.shape());
        for (std::int64_t i = 0; i < 10; ++i)
            for (std::int64_t j = 1; j < 10; ++j) shifted.at(0, 0, i, j) = x.at(0, 0, i, j - 1);
        const ConvKernel k = random_kernel(2, 1, 3, rng);
        const Tensor a = cdc_forward(x, k, CdcConfig{0.6});
        const Tensor b = cdc_forward(shifted, k, CdcConfig{0.6});
        for (std::int64_t o = 0; o < 2; ++o)
            for (std::int64_t i = 1; i < 9; ++i)
                for (std::int64_t j = 2; j < 9; ++j) CHECK(b.at(0, o, i, j + 0) == doctest::Approx(a.at(0, o, i, j - 1)));
    }

    TEST_CASE("ricd with matching delta kernels is zero") {
        Rng rng(5);
        const Tensor x = oracle::random_tensor(Shape{1, 3, 6, 6}, rng);
        const Tensor y = ricd_step(x, delta_kernel(3, 3), delta_kernel(3, 1));
        CHECK(y.min() == 0.0);
        CHECK(y.max() == 0.0);
    }

    TEST_CASE("ricd with a zero small kernel is the large convolution") {
        Rng rng(6);
        const Tensor x = oracle::random_tensor(Shape{1, 3, 6, 6}, rng);
        const ConvKernel large = random_kernel(3, 3, 5, rng, true);
        const Tensor y = ricd_step(x, large, ConvKernel::zeros(3, 3, 3, true));
        CHECK(oracle::max_abs_diff(y, conv2d(x, large, 1, 2)) == 0.0);
    }

    TEST_CASE("ricd matches the difference of two oracle convolutions") {
        Rng rng(7);
        const Tensor x = oracle::random_tensor(Shape{1, 4, 8, 8}, rng);
        const ConvKernel large = random_kernel(4, 4, 5, rng, true);
        const ConvKernel small = random_kernel(4, 4, 3, rng, true);
        const Tensor a = oracle::conv(x, large.weight, large.bias, 1, 2);
        const Tensor b = oracle::conv(x, small.weight, small.bias, 1, 1);
        Tensor expected(a.shape());
        for (std::int64_t i = 0; i < a.numel(); ++i) expected.mutable_data()[static_cast<std::size_t>(i)] = a[i] - b[i];
        CHECK(oracle::max_abs_diff(ricd_step(x, large, small), expected) < 1e-9);
        CHECK_THROWS_AS(ricd_step(x, large, random_kernel(3, 4, 3, rng)), ShapeError);
    }

    TEST_CASE("ricd is linear in the input and in each kernel") {
        Rng rng(8);
        const Tensor x = oracle::random_tensor(Shape{1, 2, 6, 6}, rng);
        const Tensor z = oracle::random_tensor(Shape{1, 2, 6, 6}, rng);
        const ConvKernel l1 = random_kernel(2, 2, 5, rng), l2 = random_kernel(2, 2, 5, rng);
        const ConvKernel s1 = random_kernel(2, 2, 3, rng), s2 = random_kernel(2, 2, 3, rng);
        const double a = 0.7, b = -1.3;
        const Tensor xin = ricd_step(add(scale(x, a), scale(z, b)), l1, s1);
        const Tensor xsum = add(scale(ricd_step(x, l1, s1), a), scale(ricd_step(z, l1, s1), b));
        CHECK(oracle::max_abs_diff(xin, xsum) < 1e-12);
        const ConvKernel lmix{add(scale(l1.weight, a), scale(l2.weight, b)), Tensor()};
        const Tensor lin = ricd_step(x, lmix, ConvKernel::zeros(2, 2, 3, false));
        const Tensor lsum = add(scale(ricd_step(x, l1, ConvKernel::zeros(2, 2, 3, false)), a),
                                scale(ricd_step(x, l2, ConvKernel::zeros(2, 2, 3, false)), b));
        CHECK(oracle::max_abs_diff(lin, lsum) < 1e-12);
        const ConvKernel smix{add(scale(s1.weight, a), scale(s2.weight, b)), Tensor()};
        const ConvKernel zl = ConvKernel::zeros(2, 2, 5, false);
        const Tensor sin = ricd_step(x, zl, smix);
        const Tensor ssum = add(scale(ricd_step(x, zl, s1), a), scale(ricd_step(x, zl, s2), b));
        CHECK(oracle::max_abs_diff(sin, ssum) < 1e-12);
    }

    TEST_CASE("normalize_illumination") {
        Rng rng(9);
        const Tensor single = oracle::random_tensor(Shape{1, 1, 4, 4}, rng, 0.1, 1.0);
        const Tensor unit = normalize_illumination(single).values;
        for (double v : unit.data()) CHECK(v == 1.0);
        const Tensor thirds = normalize_illumination(Tensor(Shape{1, 3, 4, 4}, 0.4)).values;
        for (double v : thirds.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        const Tensor m = oracle::random_tensor(Shape{1, 3, 4, 4}, rng, 0.01, 1.0);
        const Tensor norm = normalize_illumination(m).values;
        for (std::int64_t i = 0; i < 4; ++i)
            for (std::int64_t j = 0; j < 4; ++j) {
                const double total = m.at(0, 0, i, j) + m.at(0, 1, i, j) + m.at(0, 2, i, j);
                double s = 0.0;
                for (std::int64_t c = 0; c < 3; ++c) {
                    CHECK(norm.at(0, c, i, j) == doctest::Approx(m.at(0, c, i, j) / total).epsilon(1e-14));
                    s += norm.at(0, c, i, j);
                }
                CHECK(std::abs(s - 1.0) < 1e-12);
            }
        Tensor bad = m.clone();
        bad.mutable_data()[5] = 0.0;
        CHECK_THROWS_AS(normalize_illumination(bad), DomainError);
    }

    TEST_CASE("iaicd with one-hot center weights equals cdc") {
        Rng rng(10);
        for (int k : {3, 5}) {
            const Tensor x = oracle::random_tensor(Shape{2, 4, 6, 7}, rng);
            const ConvKernel kern = random_kernel(3, 4, k, rng, true);
            const Tensor w = one_hot_center_weights(x.shape(), 2, k);
            CHECK(oracle::max_abs_diff(iaicd_with_weights(x, kern, w), cdc_forward(x, kern, CdcConfig{1.0})) < 1e-9);
        }
    }

    TEST_CASE("iaicd on a constant input is zero away from the border") {
        Rng rng(11);
        const Tensor x(Shape{1, 6, 5, 5}, 2.5);
        const Tensor m = oracle::random_tensor(Shape{1, 3, 5, 5}, rng, 0.05, 1.0);
        const ConvKernel k = random_kernel(2, 6, 3, rng);
        const Tensor y = iaicd_forward(x, k, m, CenterMode::window_renormalized);
        CHECK(interior_peak(y, 1) < 1e-12);
        CHECK(oracle::max_abs_diff(y, oracle::iaicd_literal(x, k.weight, Tensor(), m, true)) < 1e-12);
    }

    TEST_CASE("iaicd is invariant to a constant offset") {
        Rng rng(12);
        const Tensor x = oracle::random_tensor(Shape{1, 3, 8, 8}, rng);
        const Tensor m = oracle::random_tensor(Shape{1, 3, 8, 8}, rng, 0.05, 1.0);
        const ConvKernel kern = random_kernel(2, 3, 3, rng);
        const Tensor a = iaicd_forward(x, kern, m, CenterMode::window_renormalized);
        const Tensor b = iaicd_forward(add_scalar(x, 3.7), kern, m, CenterMode::window_renormalized);
        for (std::int64_t o = 0; o < 2; ++o)
            for (std::int64_t i = 1; i < 7; ++i)
                for (std::int64_t j = 1; j < 7; ++j) CHECK(std::abs(a.at(0, o, i, j) - b.at(0, o, i, j)) < 1e-9);
    }

    TEST_CASE("iaicd matches the nested-loop oracle in both modes") {
        Rng rng(13);
        for (CenterMode mode : {CenterMode::window_renormalized, CenterMode::literal}) {
            const Tensor x = oracle::random_tensor(Shape{1, 1, 5, 5}, rng);
            const Tensor m = oracle::random_tensor(Shape{1, 3, 5, 5}, rng, 0.05, 1.0);
            const ConvKernel kern = random_kernel(2, 1, 3, rng, true);
            const Tensor expected =
                oracle::iaicd_literal(x, kern.weight, kern.bias, m, mode == CenterMode::window_renormalized);
            CHECK(oracle::max_abs_diff(iaicd_forward(x, kern, m, mode), expected) < 1e-9);
        }
        const Tensor x = oracle::random_tensor(Shape{2, 6, 6, 6}, rng);
        const Tensor m = oracle::random_tensor(Shape{2, 3, 6, 6}, rng, 0.05, 1.0);
        const ConvKernel kern = random_kernel(4, 6, 5, rng, true);
        for (CenterMode mode : {CenterMode::window_renormalized, CenterMode::literal}) {
            const Tensor expected =
                oracle::iaicd_literal(x, kern.weight, kern.bias, m, mode == CenterMode::window_renormalized);
            CHECK(oracle::max_abs_diff(iaicd_forward(x, kern, m, mode), expected) < 1e-9);
        }
        CHECK_THROWS_AS(iaicd_forward(x, kern, Tensor(Shape{2, 3, 5, 6}, 0.5), CenterMode::literal), ShapeError);
    }

    TEST_CASE("differencing operators pass the finite-difference check") {
        Rng rng(14);
        Tensor x = oracle::random_tensor(Shape{2, 2, 5, 5}, rng);
        Tensor m = oracle::random_tensor(Shape{2, 3, 5, 5}, rng, 0.1, 1.0);
        ConvKernel k3 = random_kernel(2, 2, 3, rng, true);
        ConvKernel k5 = random_kernel(2, 2, 5, rng, true);
        const Tensor probe = oracle::random_tensor(Shape{2, 2, 5, 5}, rng);
        std::vector<Tensor*> leaves{&x, &m, &k3.weight, &k3.bias, &k5.weight, &k5.bias};
        for (int op = 0; op < 4; ++op) {
            auto loss = [&] {
                Tensor y;
                switch (op) {
                    case 0: y = cdc_forward(x, k3, CdcConfig{0.6}); break;
                    case 1: y = ricd_step(x, k5, k3); break;
                    case 2: y = iaicd_forward(x, k3, m, CenterMode::window_renormalized); break;
                    default: y = iaicd_forward(x, k5, m, CenterMode::literal); break;
                }
                return sum(mul(y, probe));
            };
            for (Tensor* t : leaves) {
                t->set_requires_grad(true);
                t->clear_grad();
            }
            backward(loss());
            NoGradGuard guard;
            for (Tensor* t : leaves) {
                const std::vector<double> numeric = oracle::numeric_grad(*t, [&] { return loss().item(); });
                for (std::size_t i = 0; i < numeric.size(); ++i) {
                    const double a = t->has_grad() ? t->grad()[i] : 0.0;
                    if (std::abs(a) < 1e-8 && std::abs(numeric[i]) < 1e-8) continue;
                    CAPTURE(op);
                    CHECK(oracle::rel_error(a, numeric[i]) < 1e-4);
                }
            }
        }
    }
}
