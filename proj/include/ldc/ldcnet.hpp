#pragma once

// Dual-branch depth completion network.
//
// Image guidance branch: RICD enhancement head -> 5-scale image encoder ->
// per-scale IAICD guidance driven by the (downsampled) illumination map.
// Depth branch: 5-scale encoder over [sparse depth, validity], fused with the
// guidance as relu(conv(g * f + f)) at every scale, then a U-Net decoder with
// skip connections and a softplus output head.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ldc/diffconv.hpp"
#include "ldc/enhance.hpp"
#include "ldc/ops.hpp"
#include "ldc/tensor.hpp"

namespace ldc {

inline constexpr int kScales = 5;

struct NetConfig {
    RicdConfig ricd;
    CenterMode center_mode = CenterMode::window_renormalized;
    std::array<int, kScales> widths{16, 32, 64, 128, 256};
    /// Ablation switches: vanilla-conv illumination estimator / vanilla-conv guidance.
    bool use_ricd = true;
    bool use_iaicd = true;
    /// Stride of the first encoder layers; 2 gives the halved variant.
    int first_stride = 1;
    /// Sparse depth is divided by this before encoding; the head output is multiplied by it.
    double depth_scale = 10.0;
    /// Added to the positive head output, keeps depth strictly positive.
    double min_depth = 1e-3;
    double illumination_floor = kIlluminationFloor;

    void validate() const;
    /// Spatial extents must be multiples of this.
    int divisor() const { return 16 * first_stride; }
};

/// Ordered name -> tensor registry. Entries alias the tensors held by the
/// structured model fields.
class ParamStore {
public:
    Tensor& add(std::string name, Tensor t);
    bool contains(const std::string& name) const;
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::int64_t scalar_count() const;

    void zero_grad();
    void clear_grad();

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

struct ConvBnLayer {
    ConvKernel conv;  // no bias: the normalization shift takes that role
    Tensor gamma;
    Tensor beta;
    BatchNormState bn;
    int stride = 1;
};

struct ScaleGuidance {
    ConvKernel guide;  // IAICD (or vanilla, when ablated) kernel, C_s -> C_s
    ConvKernel fuse;   // 3x3 fusion conv after g * f + f
};

struct ModelParams {
    NetConfig config;
    EnhanceHead enhance;
    std::array<ConvBnLayer, kScales> image_encoder;
    std::array<ConvBnLayer, kScales> depth_encoder;
    std::array<ScaleGuidance, kScales> guidance;
    /// decoder[s] produces the scale-s feature from scale s + 1 and skip s.
    std::array<ConvBnLayer, kScales - 1> decoder;
    ConvKernel head;

    ParamStore params;   // learnable
    ParamStore buffers;  // normalization running statistics
};

/// Builds a model with weights uniform in +-sqrt(6 / fan_in), zero biases,
/// unit gamma and zero beta. Fully determined by (config, seed).
ModelParams make_model(const NetConfig& config, std::uint64_t seed);

struct ForwardOptions {
    bool training = false;
    /// Blend batch statistics into the running statistics (training only).
    bool update_stats = true;
};

struct ForwardOutput {
    Tensor depth;
    IlluminationMap illumination;
    Tensor enhanced;
};

using Pyramid = std::vector<Tensor>;

/// Five features at scales 1/1 .. 1/16 (times first_stride) of the input.
Pyramid encode_image(const Tensor& x_enh, ModelParams& model, const ForwardOptions& opt);

/// Average-downsamples the illumination to each feature's resolution and
/// applies the scale's IAICD kernel (vanilla conv when IAICD is ablated).
Pyramid guide_features(const Pyramid& image_features, const IlluminationMap& m, const ModelParams& model);

/// Full forward pass. `valid` is 1 where `sparse` carries a measurement.
ForwardOutput complete_depth(const Tensor& rgb, const Tensor& sparse, const Tensor& valid, ModelParams& model,
                             const ForwardOptions& opt);

/// Validity mask (1 where depth > 0, else 0).
Tensor validity_mask(const Tensor& depth);

// Checkpoint container. Layout (all integers little-endian):
//   "LDCN" magic, 1 version byte, u32 record count, then per record:
//   u32 name length, name bytes, 4 x i64 shape (N, C, H, W),
//   N*C*H*W IEEE-754 float64 values.
// Records named "meta.*" hold the architecture, the rest are parameters and
// normalization buffers by path name.
inline constexpr std::uint8_t kCheckpointVersion = 1;

void save_checkpoint(const ModelParams& model, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace ldc
