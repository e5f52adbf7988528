#pragma once

// Differentiable tensor operations. Every function is pure; when gradient
// recording is enabled the result carries its backward rule.

#include <cstdint>

#include "ldc/tensor.hpp"

namespace ldc {

// Elementwise, operands of identical shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// log(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
/// Gradient passes where lo <= a <= hi, zero elsewhere.
Tensor clamp(const Tensor& a, double lo, double hi);

/// Sum of all elements as a 1x1x1x1 tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Stacks along the channel axis; batch and spatial extents must agree.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Zero-padded cross-correlation. `bias` may be undefined.
/// Output extent: floor((H + 2*padding - k) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding);
Tensor conv2d(const Tensor& x, const ConvKernel& kern, int stride, int padding);

/// Collapses a C_out x C_in x k x k weight to C_out x C_in x 1 x 1 by summing
/// each spatial window.
Tensor kernel_spatial_sum(const Tensor& weight);

/// Mean of each 2x2 block. Throws ShapeError on odd extents.
Tensor avg_downsample2(const Tensor& x);

/// Bilinear 2x upsampling. Output pixel i samples source coordinate
/// (i + 0.5) / 2 - 0.5, clamped to [0, extent - 1].
Tensor upsample2_bilinear(const Tensor& x);

/// Per-channel running statistics owned by the caller.
struct BatchNormState {
    Tensor running_mean;  // 1 x C x 1 x 1
    Tensor running_var;   // 1 x C x 1 x 1
    double momentum = 0.1;
    double eps = 1e-5;

    static BatchNormState fresh(std::int64_t channels);
};

/// Per-channel batch normalization with affine gamma/beta (1 x C x 1 x 1).
/// In training mode batch statistics are used and, if `update_stats`, the
/// running statistics are blended in. Otherwise the running statistics are used.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training, bool update_stats = true);

/// While alive, fingerprints which side of every kink (relu at zero, clamp
/// bounds, absolute value at zero) the ops on this thread land on. Two
/// evaluations with equal signatures sit on the same smooth piece of a
/// piecewise-smooth function. Traces nest; the innermost one records.
class KinkTrace {
public:
    KinkTrace();
    ~KinkTrace();
    KinkTrace(const KinkTrace&) = delete;
    KinkTrace& operator=(const KinkTrace&) = delete;

    std::uint64_t signature() const { return hash_; }

    static bool active();
    /// Folds one branch choice into the active trace.
    static void note(int side);

private:
    KinkTrace* previous_;
    std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

}  // namespace ldc
