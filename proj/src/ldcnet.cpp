#include "ldc/ldcnet.hpp"

#include <cmath>

#include "ldc/random.hpp"

namespace ldc {

void NetConfig::validate() const {
    ricd.validate();
    for (int w : widths) {
        if (w < 1) throw ConfigError("channel widths must be positive");
    }
    if (first_stride != 1 && first_stride != 2) throw ConfigError("first_stride must be 1 or 2");
    if (!(depth_scale > 0.0)) throw ConfigError("depth_scale must be positive");
    if (!(min_depth > 0.0)) throw ConfigError("min_depth must be positive");
    if (!(illumination_floor > 0.0 && illumination_floor < 1.0)) {
        throw ConfigError("illumination floor must lie in (0, 1)");
    }
}

Tensor& ParamStore::add(std::string name, Tensor t) {
    if (contains(name)) throw ConfigError("duplicate parameter name " + name);
    entries_.emplace_back(std::move(name), std::move(t));
    return entries_.back().second;
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
        if (n == name) return true;
    }
    return false;
}

Tensor& ParamStore::get(const std::string& name) {
    for (auto& [n, t] : entries_) {
        if (n == name) return t;
    }
    throw ConfigError("unknown parameter " + name);
}

const Tensor& ParamStore::get(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
        if (n == name) return t;
    }
    throw ConfigError("unknown parameter " + name);
}

std::int64_t ParamStore::scalar_count() const {
    std::int64_t total = 0;
    for (const auto& [n, t] : entries_) total += t.numel();
    return total;
}

void ParamStore::zero_grad() {
    for (auto& [n, t] : entries_) t.zero_grad();
}

void ParamStore::clear_grad() {
    for (auto& [n, t] : entries_) t.clear_grad();
}

namespace {

class Builder {
public:
    Builder(ModelParams& model, std::uint64_t seed) : model_(model), rng_(seed) {}

    ConvKernel conv(const std::string& name, std::int64_t c_out, std::int64_t c_in, int k, bool bias) {
        ConvKernel kern = ConvKernel::zeros(c_out, c_in, k, bias);
        const double bound = std::sqrt(6.0 / static_cast<double>(c_in * k * k));
        for (double& v : kern.weight.mutable_data()) v = rng_.uniform(-bound, bound);
        kern.weight.set_requires_grad(true);
        model_.params.add(name + ".weight", kern.weight);
        if (bias) {
            kern.bias.set_requires_grad(true);
            model_.params.add(name + ".bias", kern.bias);
        }
        return kern;
    }

    ConvBnLayer conv_bn(const std::string& name, std::int64_t c_out, std::int64_t c_in, int stride) {
        ConvBnLayer layer;
        layer.conv = conv(name + ".conv", c_out, c_in, 3, false);
        layer.gamma = Tensor::full({1, c_out, 1, 1}, 1.0).set_requires_grad(true);
        layer.beta = Tensor::zeros({1, c_out, 1, 1}).set_requires_grad(true);
        model_.params.add(name + ".bn.gamma", layer.gamma);
        model_.params.add(name + ".bn.beta", layer.beta);
        layer.bn = BatchNormState::fresh(c_out);
        model_.buffers.add(name + ".bn.running_mean", layer.bn.running_mean);
        model_.buffers.add(name + ".bn.running_var", layer.bn.running_var);
        layer.stride = stride;
        return layer;
    }

private:
    ModelParams& model_;
    Rng rng_;
};

Tensor apply(const ConvBnLayer& layer, const Tensor& x, BatchNormState& bn, const ForwardOptions& opt) {
    Tensor y = conv2d(x, layer.conv, layer.stride, 1);
    return relu(batch_norm(y, layer.gamma, layer.beta, bn, opt.training, opt.update_stats));
}

void check_extents(const Tensor& t, const NetConfig& cfg, const char* what) {
    const int div = cfg.divisor();
    if (t.shape().h % div != 0 || t.shape().w % div != 0 || t.shape().h == 0 || t.shape().w == 0) {
        throw ShapeError(std::string(what) + " extents " + t.shape().str() + " must be multiples of " +
                         std::to_string(div));
    }
}

}  // namespace

ModelParams make_model(const NetConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams model;
    model.config = config;
    Builder b(model, seed);
    const int hidden = config.ricd.hidden_channels;

    EnhanceHead& head = model.enhance;
    head.ricd = config.ricd;
    head.use_ricd = config.use_ricd;
    head.floor = config.illumination_floor;
    head.project_in = b.conv("enhance.in", hidden, 3, 3, true);
    for (int t = 0; t < config.ricd.steps; ++t) {
        const std::string prefix = "enhance.step" + std::to_string(t);
        RicdPair pair;
        if (config.use_ricd) pair.large = b.conv(prefix + ".large", hidden, hidden, config.ricd.k_large, true);
        pair.small = b.conv(prefix + ".small", hidden, hidden, config.ricd.k_small, true);
        head.steps.push_back(std::move(pair));
    }
    head.project_out = b.conv("enhance.out", 3, hidden, 1, true);

    const auto& w = config.widths;
    for (int s = 0; s < kScales; ++s) {
        const int stride = s == 0 ? config.first_stride : 2;
        const std::int64_t in_c = s == 0 ? 3 : w[s - 1];
        model.image_encoder[s] = b.conv_bn("image_enc." + std::to_string(s), w[s], in_c, stride);
    }
    for (int s = 0; s < kScales; ++s) {
        const std::string prefix = "guide." + std::to_string(s);
        model.guidance[s].guide = b.conv(prefix + (config.use_iaicd ? ".iaicd" : ".conv"), w[s], w[s], 3, true);
    }
    for (int s = 0; s < kScales; ++s) {
        const int stride = s == 0 ? config.first_stride : 2;
        const std::int64_t in_c = s == 0 ? 2 : w[s - 1];
        model.depth_encoder[s] = b.conv_bn("depth_enc." + std::to_string(s), w[s], in_c, stride);
        model.guidance[s].fuse = b.conv("fuse." + std::to_string(s), w[s], w[s], 3, true);
    }
    for (int s = kScales - 2; s >= 0; --s) {
        model.decoder[s] = b.conv_bn("decoder." + std::to_string(s), w[s], w[s + 1] + w[s], 1);
    }
    model.head = b.conv("head", 1, w[0], 3, true);
    return model;
}

Pyramid encode_image(const Tensor& x_enh, ModelParams& model, const ForwardOptions& opt) {
    check_extents(x_enh, model.config, "image");
    Pyramid feats;
    Tensor f = x_enh;
    for (int s = 0; s < kScales; ++s) {
        f = apply(model.image_encoder[s], f, model.image_encoder[s].bn, opt);
        feats.push_back(f);
    }
    return feats;
}

Pyramid guide_features(const Pyramid& image_features, const IlluminationMap& m, const ModelParams& model) {
    if (static_cast<int>(image_features.size()) != kScales) throw ShapeError("expected a 5-scale pyramid");
    Pyramid out;
    Tensor m_s = m.values;
    for (int s = 0; s < kScales; ++s) {
        const Tensor& f = image_features[s];
        const ConvKernel& kern = model.guidance[s].guide;
        if (!model.config.use_iaicd) {
            out.push_back(conv2d(f, kern, 1, (kern.size() - 1) / 2));
            continue;
        }
        while (m_s.shape().h > f.shape().h) m_s = avg_downsample2(m_s);
        if (m_s.shape().h != f.shape().h || m_s.shape().w != f.shape().w) {
            throw ShapeError("illumination " + m_s.shape().str() + " cannot be brought to feature size " +
                             f.shape().str());
        }
        out.push_back(iaicd_forward(f, kern, m_s, model.config.center_mode));
    }
    return out;
}

Tensor validity_mask(const Tensor& depth) {
    Tensor mask(depth.shape());
    auto mv = mask.mutable_data();
    const auto dv = depth.data();
    for (std::size_t i = 0; i < dv.size(); ++i) mv[i] = dv[i] > 0.0 ? 1.0 : 0.0;
    return mask;
}

ForwardOutput complete_depth(const Tensor& rgb, const Tensor& sparse, const Tensor& valid, ModelParams& model,
                             const ForwardOptions& opt) {
    const Shape sr = rgb.shape();
    if (sr.c != 3) throw ShapeError("rgb input must have 3 channels, got " + sr.str());
    if (sparse.shape() != Shape{sr.n, 1, sr.h, sr.w}) {
        throw ShapeError("sparse depth " + sparse.shape().str() + " does not match rgb " + sr.str());
    }
    require_same_shape(sparse, valid, "validity mask");
    check_extents(rgb, model.config, "input");
    for (double v : sparse.data()) {
        if (v < 0.0 || !std::isfinite(v)) throw DomainError("sparse depth must be finite and non-negative");
    }

    ForwardOutput out;
    out.illumination = estimate_illumination(rgb, model.enhance);
    out.enhanced = retinex_enhance(rgb, out.illumination);
    const Pyramid image_feats = encode_image(out.enhanced, model, opt);
    const Pyramid guides = guide_features(image_feats, out.illumination, model);

    Tensor f = concat_channels(scale(sparse, 1.0 / model.config.depth_scale), valid);
    Pyramid skips;
    for (int s = 0; s < kScales; ++s) {
        f = apply(model.depth_encoder[s], f, model.depth_encoder[s].bn, opt);
        Tensor mixed = add(mul(guides[s], f), f);
        f = relu(conv2d(mixed, model.guidance[s].fuse, 1, 1));
        skips.push_back(f);
    }
    Tensor dec = skips[kScales - 1];
    for (int s = kScales - 2; s >= 0; --s) {
        Tensor up = upsample2_bilinear(dec);
        dec = apply(model.decoder[s], concat_channels(up, skips[s]), model.decoder[s].bn, opt);
    }
    if (model.config.first_stride == 2) dec = upsample2_bilinear(dec);
    Tensor z = conv2d(dec, model.head, 1, 1);
    out.depth = add_scalar(scale(softplus(z), model.config.depth_scale), model.config.min_depth);
    return out;
}

}  // namespace ldc
