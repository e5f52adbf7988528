#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ldc/errors.hpp"

namespace ldc {

/// Extents of an N x C x H x W tensor.
struct Shape {
    std::int64_t n = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    constexpr std::int64_t numel() const { return n * c * h * w; }
    constexpr std::int64_t plane() const { return h * w; }
    constexpr bool operator==(const Shape&) const = default;

    /// Row-major flat index: ((n*C + c)*H + h)*W + w.
    constexpr std::int64_t index(std::int64_t in, std::int64_t ic, std::int64_t ih,
                                 std::int64_t iw) const {
        return ((in * c + ic) * h + ih) * w + iw;
    }

    std::string str() const;
};

namespace detail {
struct TensorImpl;
}

/// Dense float64 tensor handle.
///
/// Copies share storage (and gradient buffer); use clone() for a deep copy.
/// When gradient recording is enabled and any input of an operation requires
/// grad, the result remembers how it was produced so that backward() can
/// propagate through it.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
    static Tensor full(Shape shape, double v) { return Tensor(shape, v); }
    static Tensor scalar(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const;
    std::int64_t numel() const { return shape().numel(); }

    std::span<const double> data() const;
    /// Writable view of the values. Mutating a tensor that already feeds a
    /// recorded graph invalidates that graph.
    std::span<double> mutable_data();

    double at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;
    double& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w);
    double operator[](std::int64_t i) const { return data()[static_cast<std::size_t>(i)]; }
    /// Value of a one-element tensor.
    double item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool has_grad() const;
    /// Accumulated gradient; empty span when none has been produced.
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();
    void clear_grad();

    /// Copy of the values, detached from any graph.
    Tensor clone() const;

    double min() const;
    double max() const;
    double sum_value() const;
    double mean_value() const;
    bool all_finite() const;

    detail::TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Convolution weights C_out x C_in x k x k with an optional 1 x C_out x 1 x 1 bias.
struct ConvKernel {
    Tensor weight;
    Tensor bias;

    int size() const { return static_cast<int>(weight.shape().h); }
    std::int64_t out_channels() const { return weight.shape().n; }
    std::int64_t in_channels() const { return weight.shape().c; }

    /// Throws ConfigError unless k is odd and in {1,3,5,7}; ShapeError on a
    /// non-square weight or a bias of the wrong length.
    void validate() const;

    static ConvKernel zeros(std::int64_t c_out, std::int64_t c_in, int k, bool with_bias);
};

/// Reverse-mode pass from a one-element tensor. Leaf tensors that require grad
/// accumulate d(loss)/d(leaf) into their grad buffer.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph recording for its lifetime (thread-local).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace ldc
