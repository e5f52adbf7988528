#pragma once

// Synthetic nighttime RGB-D scenes, LiDAR-like sparsification and the
// on-disk dataset layout described by a JSON manifest.

#include <cstdint>
#include <string>
#include <vector>

#include "ldc/tensor.hpp"

namespace ldc {

struct SceneConfig {
    int height = 64;
    int width = 64;
    double d_min = 2.0;
    double d_max = 20.0;
    int primitives = 6;
    /// Fraction of pixels with valid ground truth.
    double gt_valid_fraction = 0.8;
    /// Kept fraction of the ground-truth valid pixels in the sparse input.
    double sparse_density = 0.04;
    // Night illumination field.
    int light_blobs = 3;
    double ambient = 0.12;
    /// Slope of the sigmoid edge of each light pool (per pool radius).
    double terminator_sharpness = 12.0;
    double noise = 0.01;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SceneImage {
    Tensor rgb;    // 1 x 3 x H x W in [0, 1]
    Tensor depth;  // 1 x 1 x H x W meters, 0 = invalid
};

/// Colored rectangles and ellipses at random depths over a ground plane whose
/// inverse depth grows linearly from the top row (d_max) to the bottom row
/// (d_min). A gt_valid_fraction subset of pixels keeps its depth.
SceneImage generate_scene(const SceneConfig& cfg);

/// Ground-plane depth for `row` of an image with `height` rows.
double ground_depth(const SceneConfig& cfg, int row);

/// Multiplicative light field in (0, 1]: ambient plus light pools with
/// Gaussian falloff and sigmoid terminator edges, capped at 1.
Tensor illumination_field(const SceneConfig& cfg);

struct NightImage {
    Tensor rgb;    // clamp(field * rgb + noise, 0, 1)
    Tensor field;  // 1 x 1 x H x W
};
NightImage apply_night(const Tensor& rgb, const SceneConfig& cfg);

/// Keeps round(density * valid) ground-truth pixels chosen by weighted
/// sampling without replacement, weights favoring periodic scanline bands.
Tensor sparsify(const Tensor& gt_depth, double density, std::uint64_t seed);

struct RgbdSample {
    std::string id;
    std::string split;
    std::uint64_t seed = 0;
    Tensor rgb;           // low-light input
    Tensor sparse_depth;
    Tensor gt_depth;
    Tensor clean_rgb;     // diagnostics only
    Tensor field;         // diagnostics only
};

/// Generates sample `index` of a dataset: pure function of (cfg, index).
RgbdSample make_sample(const SceneConfig& cfg, int index);

struct ManifestEntry {
    std::string id;
    std::string split;
    std::uint64_t seed = 0;
    std::string rgb;
    std::string sparse;
    std::string gt;
    std::string clean;
    std::string illumination;

    bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
    /// Directory holding the manifest; entry paths are relative to it.
    std::string root;
    SceneConfig scene;
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> split(const std::string& name) const;
};

/// Number of test samples for a dataset of `count`: floor(count / 10), at least 1.
int test_count(int count);

/// Writes `count` samples under out_dir plus out_dir/manifest.json.
Manifest build_dataset(const SceneConfig& cfg, int count, const std::string& out_dir);

std::string manifest_to_json(const Manifest& m);
void write_manifest(const Manifest& m, const std::string& path);
Manifest read_manifest(const std::string& path);

/// Loads the files referenced by an entry.
RgbdSample load_sample(const Manifest& m, const ManifestEntry& e);
std::vector<RgbdSample> load_split(const Manifest& m, const std::string& split);

}  // namespace ldc
