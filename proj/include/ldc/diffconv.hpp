#pragma once

// Differencing convolutions: central differencing (CDC), recurrent
// inter-convolution differencing (RICD) and illumination-affinitive
// intra-convolution differencing (IAICD). All run stride 1 with "same"
// zero padding (k - 1) / 2.

#include <string>

#include "ldc/tensor.hpp"

namespace ldc {

struct CdcConfig {
    double theta = 1.0;

    void validate() const;
};

struct RicdConfig {
    int k_large = 5;
    int k_small = 3;
    int steps = 3;
    int hidden_channels = 16;

    void validate() const;
};

enum class CenterMode {
    /// Window weights rescaled to sum to one, making the center a convex
    /// combination of in-image neighbors.
    window_renormalized,
    /// Channel-normalized illumination used as-is inside the window.
    literal,
};

const char* to_string(CenterMode mode);
CenterMode center_mode_from_string(const std::string& s);

/// Channel-normalized illumination M^c = m^c / sum_v |m^v|.
struct NormalizedIllumination {
    Tensor values;
    CenterMode mode = CenterMode::window_renormalized;
};

/// theta * CDC(x) + (1 - theta) * conv(x), evaluated as
/// conv(x) - theta * x[p0] * sum(w).
Tensor cdc_forward(const Tensor& x, const ConvKernel& kern, const CdcConfig& cfg);

/// conv(x, large) - conv(x, small), both "same"-padded around the same center.
Tensor ricd_step(const Tensor& x, const ConvKernel& large, const ConvKernel& small);

/// Throws DomainError unless m > 0 everywhere.
NormalizedIllumination normalize_illumination(const Tensor& m, CenterMode mode = CenterMode::window_renormalized);

/// Per-pixel window weights, shape N x (G*k*k) x H x W for a G-channel map.
/// Entry (g*k*k + t) at p0 is M_g at the t-th window offset around p0, zero
/// outside the image. In window_renormalized mode each k*k group is divided
/// by its sum (all-zero groups stay zero).
Tensor window_weights(const NormalizedIllumination& m, int k);

/// Differencing centers: for feature channel c in illumination group
/// g = c * G / C, center(p0) = sum_t W[g, t, p0] * x[c, p0 + offset_t].
Tensor window_center(const Tensor& x, const Tensor& weights, int k);

/// conv(x) - center(p0) * sum(w): differencing against an arbitrary
/// per-pixel window weighting.
Tensor iaicd_with_weights(const Tensor& x, const ConvKernel& kern, const Tensor& weights);

Tensor iaicd_forward(const Tensor& x, const ConvKernel& kern, const NormalizedIllumination& m);
/// Normalizes the raw illumination m first.
Tensor iaicd_forward(const Tensor& x, const ConvKernel& kern, const Tensor& m, CenterMode mode);

}  // namespace ldc
