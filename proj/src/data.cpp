#include "ldc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "ldc/image_io.hpp"
#include "ldc/random.hpp"

namespace ldc {

namespace fs = std::filesystem;

void SceneConfig::validate() const {
    if (height < 32 || width < 32) throw ConfigError("scene extents must be at least 32");
    if (height % 16 != 0 || width % 16 != 0) throw ConfigError("scene extents must be multiples of 16");
    if (!(d_min > 0.0) || !(d_max > d_min)) throw ConfigError("scene needs 0 < d_min < d_max");
    if (primitives < 0 || light_blobs < 0) throw ConfigError("scene counts must be non-negative");
    if (!(gt_valid_fraction > 0.0 && gt_valid_fraction <= 1.0)) throw ConfigError("gt_valid_fraction must lie in (0, 1]");
    if (!(sparse_density > 0.0 && sparse_density <= 1.0)) throw ConfigError("sparse_density must lie in (0, 1]");
    if (!(ambient > 0.0 && ambient <= 1.0)) throw ConfigError("ambient light must lie in (0, 1]");
    if (!(terminator_sharpness > 0.0)) throw ConfigError("terminator_sharpness must be positive");
    if (!(noise >= 0.0)) throw ConfigError("noise must be non-negative");
}

double ground_depth(const SceneConfig& cfg, int row) {
    const double t = cfg.height > 1 ? static_cast<double>(row) / (cfg.height - 1) : 1.0;
    const double inv = 1.0 / cfg.d_max + (1.0 / cfg.d_min - 1.0 / cfg.d_max) * t;
    return 1.0 / inv;
}

namespace {

// Row whose ground depth equals d (inverse of ground_depth), fractional.
double ground_row(const SceneConfig& cfg, double d) {
    return (cfg.height - 1) * (1.0 / d - 1.0 / cfg.d_max) / (1.0 / cfg.d_min - 1.0 / cfg.d_max);
}

// Indices of the `keep` largest keys; ties resolved by lower index.
std::vector<std::size_t> top_keys(const std::vector<double>& keys, std::size_t keep) {
    std::vector<std::size_t> order(keys.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] > keys[b]; });
    order.resize(std::min(keep, order.size()));
    return order;
}

}  // namespace

SceneImage generate_scene(const SceneConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int H = cfg.height;
    const int W = cfg.width;
    Tensor rgb(Shape{1, 3, H, W});
    Tensor depth(Shape{1, 1, H, W});

    // Ground: dark asphalt with a perspective checker.
    const double base[3] = {rng.uniform(0.25, 0.4), rng.uniform(0.25, 0.4), rng.uniform(0.25, 0.45)};
    for (int y = 0; y < H; ++y) {
        const double d = ground_depth(cfg, y);
        for (int x = 0; x < W; ++x) {
            const double lateral = (x - 0.5 * W) * d / W;
            const long cell = static_cast<long>(std::floor(d / 2.0)) + static_cast<long>(std::floor(lateral / 1.5));
            const double shade = (cell % 2 == 0) ? 1.0 : 0.75;
            for (int c = 0; c < 3; ++c) rgb.at(0, c, y, x) = base[c] * shade;
            depth.at(0, 0, y, x) = d;
        }
    }

    const double focal = 0.8 * W;
    for (int p = 0; p < cfg.primitives; ++p) {
        const bool ellipse = rng.uniform() < 0.5;
        const double d = rng.uniform(cfg.d_min + 0.1 * (cfg.d_max - cfg.d_min), cfg.d_min + 0.7 * (cfg.d_max - cfg.d_min));
        const double half_w = 0.5 * focal * rng.uniform(0.8, 2.5) / d;
        const double tall = focal * rng.uniform(0.8, 2.5) / d;
        const double cx = rng.uniform(0.0, W);
        const double bottom = ground_row(cfg, d);
        const double top = bottom - tall;
        const double color[3] = {rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)};
        const double cy = 0.5 * (top + bottom);
        const double half_h = 0.5 * tall;
        for (int y = std::max(0, static_cast<int>(std::floor(top))); y <= std::min(H - 1, static_cast<int>(std::ceil(bottom))); ++y) {
            for (int x = std::max(0, static_cast<int>(std::floor(cx - half_w))); x <= std::min(W - 1, static_cast<int>(std::ceil(cx + half_w))); ++x) {
                const double u = (x + 0.5 - cx) / half_w;
                const double v = (y + 0.5 - cy) / half_h;
                const bool inside = ellipse ? (u * u + v * v <= 1.0) : (std::abs(u) <= 1.0 && std::abs(v) <= 1.0);
                if (!inside || d >= depth.at(0, 0, y, x)) continue;
                depth.at(0, 0, y, x) = d;
                // Mild vertical gradient so surfaces are not perfectly flat in color.
                const double shade = 0.85 + 0.15 * (1.0 - std::abs(v));
                for (int c = 0; c < 3; ++c) rgb.at(0, c, y, x) = color[c] * shade;
            }
        }
    }

    // Invalid ground truth: an exact-size random subset of pixels.
    const std::size_t npix = static_cast<std::size_t>(H) * W;
    const auto invalid = static_cast<std::size_t>(std::llround((1.0 - cfg.gt_valid_fraction) * static_cast<double>(npix)));
    if (invalid > 0) {
        std::vector<double> keys(npix);
        for (double& k : keys) k = rng.uniform();
        for (std::size_t i : top_keys(keys, invalid)) depth.mutable_data()[i] = 0.0;
    }
    return {rgb, depth};
}

Tensor illumination_field(const SceneConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, 0x11u));
    const int H = cfg.height;
    const int W = cfg.width;
    struct Light {
        double cx, cy, radius, amp;
    };
    std::vector<Light> lights;
    for (int b = 0; b < cfg.light_blobs; ++b) {
        Light l;
        l.cx = rng.uniform(0.0, W);
        l.cy = rng.uniform(0.0, H);
        l.radius = rng.uniform(0.12, 0.3) * std::min(H, W);
        l.amp = rng.uniform(0.6, 1.0);
        lights.push_back(l);
    }
    Tensor field(Shape{1, 1, H, W});
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double v = cfg.ambient;
            for (const Light& l : lights) {
                const double dist = std::hypot(x + 0.5 - l.cx, y + 0.5 - l.cy);
                const double falloff = std::exp(-dist * dist / (2.0 * l.radius * l.radius));
                const double edge = 1.0 / (1.0 + std::exp(-cfg.terminator_sharpness * (1.0 - dist / l.radius)));
                v += l.amp * falloff * edge;
            }
            field.at(0, 0, y, x) = std::min(1.0, v);
        }
    }
    return field;
}

NightImage apply_night(const Tensor& rgb, const SceneConfig& cfg) {
    const Shape s = rgb.shape();
    if (s.n != 1 || s.c != 3 || s.h != cfg.height || s.w != cfg.width) {
        throw ShapeError("night conversion expects 1x3x" + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                         ", got " + s.str());
    }
    Tensor field = illumination_field(cfg);
    Rng rng(derive_seed(cfg.seed, 0x22u));
    Tensor out(s);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < s.h; ++y) {
            for (int x = 0; x < s.w; ++x) {
                double v = field.at(0, 0, y, x) * rgb.at(0, c, y, x);
                if (cfg.noise > 0.0) v += cfg.noise * rng.normal();
                out.at(0, c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return {out, field};
}

Tensor sparsify(const Tensor& gt_depth, double density, std::uint64_t seed) {
    if (!(density > 0.0 && density <= 1.0)) throw ConfigError("sparsify density must lie in (0, 1]");
    const Shape s = gt_depth.shape();
    if (s.c != 1) throw ShapeError("sparsify expects single-channel depth, got " + s.str());
    const auto gv = gt_depth.data();
    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < gv.size(); ++i) {
        if (gv[i] > 0.0) valid.push_back(i);
    }
    Tensor out(s);
    if (density == 1.0) return gt_depth.clone();
    const auto keep = static_cast<std::size_t>(std::llround(density * static_cast<double>(valid.size())));
    Rng rng(seed);
    constexpr std::int64_t kBandPeriod = 4;
    std::vector<double> keys(valid.size());
    for (std::size_t k = 0; k < valid.size(); ++k) {
        const std::int64_t row = (static_cast<std::int64_t>(valid[k]) / s.w) % s.h;
        const double weight = row % kBandPeriod == 0 ? 1.0 : 0.15;
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        keys[k] = std::log(u) / weight;  // Efraimidis-Spirakis key, log form
    }
    auto od = out.mutable_data();
    for (std::size_t k : top_keys(keys, keep)) od[valid[k]] = gv[valid[k]];
    return out;
}

RgbdSample make_sample(const SceneConfig& cfg, int index) {
    SceneConfig s = cfg;
    s.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(index));
    SceneImage scene = generate_scene(s);
    NightImage night = apply_night(scene.rgb, s);
    RgbdSample sample;
    char id[16];
    std::snprintf(id, sizeof(id), "%06d", index);
    sample.id = id;
    sample.seed = s.seed;
    sample.rgb = night.rgb;
    sample.gt_depth = scene.depth;
    sample.sparse_depth = sparsify(scene.depth, cfg.sparse_density, derive_seed(s.seed, 0x33u));
    sample.clean_rgb = scene.rgb;
    sample.field = night.field;
    return sample;
}

std::vector<ManifestEntry> Manifest::split(const std::string& name) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries) {
        if (e.split == name) out.push_back(e);
    }
    return out;
}

int test_count(int count) { return std::max(1, count / 10); }

namespace {

nlohmann::ordered_json scene_to_json(const SceneConfig& c) {
    return {{"height", c.height},
            {"width", c.width},
            {"d_min", c.d_min},
            {"d_max", c.d_max},
            {"primitives", c.primitives},
            {"gt_valid_fraction", c.gt_valid_fraction},
            {"sparse_density", c.sparse_density},
            {"light_blobs", c.light_blobs},
            {"ambient", c.ambient},
            {"terminator_sharpness", c.terminator_sharpness},
            {"noise", c.noise},
            {"seed", c.seed}};
}

SceneConfig scene_from_json(const nlohmann::json& j) {
    SceneConfig c;
    c.height = j.at("height").get<int>();
    c.width = j.at("width").get<int>();
    c.d_min = j.at("d_min").get<double>();
    c.d_max = j.at("d_max").get<double>();
    c.primitives = j.at("primitives").get<int>();
    c.gt_valid_fraction = j.at("gt_valid_fraction").get<double>();
    c.sparse_density = j.at("sparse_density").get<double>();
    c.light_blobs = j.at("light_blobs").get<int>();
    c.ambient = j.at("ambient").get<double>();
    c.terminator_sharpness = j.at("terminator_sharpness").get<double>();
    c.noise = j.at("noise").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

std::string manifest_to_json(const Manifest& m) {
    nlohmann::ordered_json j;
    j["format"] = "ldcnet-rgbd";
    j["version"] = 1;
    j["scene"] = scene_to_json(m.scene);
    j["count"] = m.entries.size();
    auto samples = nlohmann::ordered_json::array();
    for (const auto& e : m.entries) {
        samples.push_back({{"id", e.id},
                           {"split", e.split},
                           {"seed", e.seed},
                           {"rgb", e.rgb},
                           {"sparse", e.sparse},
                           {"gt", e.gt},
                           {"clean", e.clean},
                           {"illumination", e.illumination}});
    }
    j["samples"] = std::move(samples);
    return j.dump(2) + "\n";
}

void write_manifest(const Manifest& m, const std::string& path) { write_file(path, manifest_to_json(m)); }

Manifest read_manifest(const std::string& path) {
    const std::string text = read_file(path);
    Manifest m;
    m.root = fs::path(path).parent_path().string();
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format").get<std::string>() != "ldcnet-rgbd") throw FormatError("unknown manifest format");
        if (j.at("version").get<int>() != 1) throw FormatError("unsupported manifest version");
        m.scene = scene_from_json(j.at("scene"));
        for (const auto& s : j.at("samples")) {
            ManifestEntry e;
            e.id = s.at("id").get<std::string>();
            e.split = s.at("split").get<std::string>();
            e.seed = s.at("seed").get<std::uint64_t>();
            e.rgb = s.at("rgb").get<std::string>();
            e.sparse = s.at("sparse").get<std::string>();
            e.gt = s.at("gt").get<std::string>();
            e.clean = s.value("clean", "");
            e.illumination = s.value("illumination", "");
            m.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

Manifest build_dataset(const SceneConfig& cfg, int count, const std::string& out_dir) {
    cfg.validate();
    if (count < 2) throw ConfigError("a dataset needs at least 2 samples");
    std::error_code ec;
    for (const char* sub : {"rgb", "sparse", "gt", "clean", "illum"}) {
        fs::create_directories(fs::path(out_dir) / sub, ec);
        if (ec) throw IoError("cannot create " + (fs::path(out_dir) / sub).string() + ": " + ec.message());
    }

    std::vector<RgbdSample> samples(static_cast<std::size_t>(count));
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
        try {
            samples[i] = make_sample(cfg, i);
        } catch (...) {
#pragma omp critical
            failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    Manifest m;
    m.root = out_dir;
    m.scene = cfg;
    const int first_test = count - test_count(count);
    for (int i = 0; i < count; ++i) {
        const RgbdSample& s = samples[i];
        ManifestEntry e;
        e.id = s.id;
        e.split = i < first_test ? "train" : "test";
        e.seed = s.seed;
        e.rgb = "rgb/" + s.id + ".ppm";
        e.sparse = "sparse/" + s.id + ".pfm";
        e.gt = "gt/" + s.id + ".pfm";
        e.clean = "clean/" + s.id + ".ppm";
        e.illumination = "illum/" + s.id + ".pfm";
        const fs::path root(out_dir);
        write_ppm((root / e.rgb).string(), s.rgb);
        write_pfm((root / e.sparse).string(), s.sparse_depth);
        write_pfm((root / e.gt).string(), s.gt_depth);
        write_ppm((root / e.clean).string(), s.clean_rgb);
        write_pfm((root / e.illumination).string(), s.field);
        m.entries.push_back(std::move(e));
    }
    write_manifest(m, (fs::path(out_dir) / "manifest.json").string());
    return m;
}

RgbdSample load_sample(const Manifest& m, const ManifestEntry& e) {
    const fs::path root(m.root);
    RgbdSample s;
    s.id = e.id;
    s.split = e.split;
    s.seed = e.seed;
    s.rgb = read_ppm((root / e.rgb).string());
    s.sparse_depth = read_pfm((root / e.sparse).string());
    s.gt_depth = read_pfm((root / e.gt).string());
    if (s.sparse_depth.shape() != s.gt_depth.shape() || s.sparse_depth.shape().c != 1 ||
        s.rgb.shape().h != s.gt_depth.shape().h || s.rgb.shape().w != s.gt_depth.shape().w) {
        throw DataError("sample " + e.id + " has inconsistent extents");
    }
    return s;
}

std::vector<RgbdSample> load_split(const Manifest& m, const std::string& split) {
    std::vector<RgbdSample> out;
    for (const auto& e : m.split(split)) out.push_back(load_sample(m, e));
    return out;
}

}  // namespace ldc
