#pragma once

// Building blocks for differentiable operations. Higher modules define their
// own fused ops (losses, IAICD windows) on top of record().

#include <functional>
#include <span>
#include <vector>

#include "ldc/tensor.hpp"

namespace ldc {

namespace detail {

struct Node;

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::shared_ptr<Node> node;
};

}  // namespace detail

/// Gradient buffers of an op's inputs during one backward pass.
class GradBuffers {
public:
    /// True when input i needs a gradient.
    bool wants(std::size_t i) const { return i < slots_.size() && slots_[i] != nullptr; }
    /// Buffer to accumulate d(loss)/d(input i) into. Only valid if wants(i).
    std::span<double> operator[](std::size_t i) { return *slots_[i]; }

private:
    friend void backward(const Tensor& loss);
    std::vector<std::vector<double>*> slots_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, GradBuffers& grads)>;

namespace detail {
struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    BackwardFn backward;
};
}  // namespace detail

/// Wraps freshly computed values as an op result. When recording is on and
/// any input requires grad, the result requires grad and `fn` is called during
/// backward with the result's gradient.
Tensor record(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardFn fn);

}  // namespace ldc
