#include "ldc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "ldc/autograd.hpp"

namespace ldc {

namespace {
thread_local bool g_grad_enabled = true;

std::size_t checked_size(const Shape& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
        throw ShapeError("negative extent in shape " + s.str());
    }
    return static_cast<std::size_t>(s.numel());
}
}  // namespace

std::string Shape::str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
    impl_->shape = shape;
    impl_->data.assign(checked_size(shape), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<detail::TensorImpl>()) {
    if (values.size() != checked_size(shape)) {
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape.str());
    }
    impl_->shape = shape;
    impl_->data = std::move(values);
}

const Shape& Tensor::shape() const {
    static const Shape empty{};
    return impl_ ? impl_->shape : empty;
}

std::span<const double> Tensor::data() const {
    if (!impl_) return {};
    return impl_->data;
}

std::span<double> Tensor::mutable_data() {
    if (!impl_) return {};
    return impl_->data;
}

double Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return impl_->data[static_cast<std::size_t>(impl_->shape.index(n, c, h, w))];
}

double& Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return impl_->data[static_cast<std::size_t>(impl_->shape.index(n, c, h, w))];
}

double Tensor::item() const {
    if (!impl_ || impl_->data.size() != 1) {
        throw ShapeError("item() needs a one-element tensor, got " + shape().str());
    }
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!impl_) return {};
    return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
    if (!impl_) return {};
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.assign(impl_->data.size(), 0.0);
}

void Tensor::clear_grad() {
    if (impl_) {
        impl_->grad.clear();
        impl_->grad.shrink_to_fit();
    }
}

Tensor Tensor::clone() const {
    if (!impl_) return {};
    return Tensor(impl_->shape, impl_->data);
}

double Tensor::min() const { return *std::min_element(impl_->data.begin(), impl_->data.end()); }
double Tensor::max() const { return *std::max_element(impl_->data.begin(), impl_->data.end()); }

double Tensor::sum_value() const {
    return std::accumulate(impl_->data.begin(), impl_->data.end(), 0.0);
}

double Tensor::mean_value() const {
    return impl_->data.empty() ? 0.0 : sum_value() / static_cast<double>(impl_->data.size());
}

bool Tensor::all_finite() const {
    return std::all_of(impl_->data.begin(), impl_->data.end(), [](double v) { return std::isfinite(v); });
}

void ConvKernel::validate() const {
    if (!weight.defined()) throw ConfigError("convolution kernel has no weights");
    const Shape& s = weight.shape();
    if (s.h != s.w) throw ShapeError("convolution kernel must be square, got " + s.str());
    if (s.h % 2 == 0) throw ConfigError("convolution kernel size must be odd, got " + std::to_string(s.h));
    if (s.h < 1 || s.h > 7) throw ConfigError("convolution kernel size must be in {1,3,5,7}");
    if (bias.defined() && bias.shape() != Shape{1, s.n, 1, 1}) {
        throw ShapeError("bias shape " + bias.shape().str() + " does not match " + std::to_string(s.n) +
                         " output channels");
    }
}

ConvKernel ConvKernel::zeros(std::int64_t c_out, std::int64_t c_in, int k, bool with_bias) {
    ConvKernel kern;
    kern.weight = Tensor::zeros({c_out, c_in, k, k});
    if (with_bias) kern.bias = Tensor::zeros({1, c_out, 1, 1});
    return kern;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    }
}

Tensor record(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardFn fn) {
    Tensor out(shape, std::move(values));
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    auto node = std::make_shared<detail::Node>();
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.requires_grad() ? in.impl_ptr() : nullptr);
    node->backward = std::move(fn);
    out.impl()->requires_grad = true;
    out.impl()->node = std::move(node);
    return out;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError("backward() needs a scalar loss, got " + loss.shape().str());
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order (inputs before users).
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> seen;
    std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
    stack.emplace_back(loss.impl(), 0);
    seen.insert(loss.impl());
    while (!stack.empty()) {
        auto& [impl, next] = stack.back();
        const auto* node = impl->node.get();
        if (node && next < node->inputs.size()) {
            detail::TensorImpl* child = node->inputs[next++].get();
            if (child && seen.insert(child).second) stack.emplace_back(child, 0);
            continue;
        }
        order.push_back(impl);
        stack.pop_back();
    }

    std::unordered_map<detail::TensorImpl*, std::vector<double>> grads;
    grads[loss.impl()] = {1.0};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorImpl* impl = *it;
        auto found = grads.find(impl);
        if (found == grads.end()) continue;
        if (impl->node) {
            GradBuffers buffers;
            buffers.slots_.resize(impl->node->inputs.size(), nullptr);
            for (std::size_t i = 0; i < impl->node->inputs.size(); ++i) {
                detail::TensorImpl* in = impl->node->inputs[i].get();
                if (!in) continue;
                auto& g = grads[in];
                if (g.empty()) g.assign(in->data.size(), 0.0);
                buffers.slots_[i] = &g;
            }
            // re-lookup: inserting into the map above does not move existing values
            impl->node->backward(grads[impl], buffers);
            grads.erase(impl);
        } else if (impl->requires_grad) {
            auto& g = found->second;
            if (impl->grad.empty()) {
                impl->grad = std::move(g);
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) impl->grad[i] += g[i];
            }
            grads.erase(impl);
        }
    }
}

}  // namespace ldc
