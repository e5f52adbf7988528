#pragma once

// Retinex enhancement head: recurrent RICD illumination estimation, pixel-wise
// division by the illumination, and the self-supervised fidelity/smoothness
// losses.

#include <vector>

#include "ldc/diffconv.hpp"
#include "ldc/tensor.hpp"

namespace ldc {

inline constexpr double kIlluminationFloor = 0.01;

/// Illumination m in [floor, 1], one value per color channel and pixel.
struct IlluminationMap {
    Tensor values;
    double floor = kIlluminationFloor;
};

struct RicdPair {
    ConvKernel large;
    ConvKernel small;
};

struct EnhanceHead {
    RicdConfig ricd;
    /// When false each recurrent step is a single vanilla k_small convolution
    /// (stored in `steps[t].small`) instead of a large-minus-small difference.
    bool use_ricd = true;
    ConvKernel project_in;   // hidden x 3 x 3 x 3
    std::vector<RicdPair> steps;
    ConvKernel project_out;  // 3 x hidden x 1 x 1
    double floor = kIlluminationFloor;

    void validate() const;
};

/// f0 = project_in(x); f_t = relu(ricd_step(f_{t-1})); m = floor + (1 - floor) * sigmoid(project_out(f_T)).
IlluminationMap estimate_illumination(const Tensor& x, const EnhanceHead& head);

/// clamp(x / m, 0, 1). Throws DomainError if m drops below its floor.
Tensor retinex_enhance(const Tensor& x, const IlluminationMap& m);

/// mean((m - x)^2).
Tensor fidelity_loss(const IlluminationMap& m, const Tensor& x);

/// 5x5 window Gaussian weights (sigma = 1) before per-pixel normalization.
double smoothness_gaussian(int dy, int dx);

/// (1/n) sum_i sum_{j in 5x5(i)} G_ij |m_i - m_j| per channel, where G is the
/// Gaussian renormalized over in-image neighbors of i.
Tensor smoothness_loss(const IlluminationMap& m);

}  // namespace ldc
