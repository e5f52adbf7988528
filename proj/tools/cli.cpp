#include "cli.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ldc/config.hpp"
#include "ldc/data.hpp"
#include "ldc/enhance.hpp"
#include "ldc/errors.hpp"
#include "ldc/image_io.hpp"
#include "ldc/kernels.hpp"
#include "ldc/ldcnet.hpp"
#include "ldc/metrics.hpp"
#include "ldc/train.hpp"

namespace ldc::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

json scene_json(const SceneConfig& c) {
    return json{{"height", c.height},
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

json net_json(const NetConfig& c) {
    return json{{"ricd.k1", c.ricd.k_large},
                {"ricd.k2", c.ricd.k_small},
                {"ricd.steps", c.ricd.steps},
                {"ricd.hidden", c.ricd.hidden_channels},
                {"iaicd.mode", to_string(c.center_mode)},
                {"use_ricd", c.use_ricd},
                {"use_iaicd", c.use_iaicd},
                {"first_stride", c.first_stride},
                {"depth_scale", c.depth_scale},
                {"min_depth", c.min_depth},
                {"widths", c.widths}};
}

json train_json(const TrainConfig& c) {
    return json{{"seed", c.seed},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"lr", c.lr},
                {"alpha", c.weights.alpha},
                {"beta", c.weights.beta},
                {"data.manifest", c.manifest},
                {"out.dir", c.out_dir},
                {"checkpoint_every_epoch", c.checkpoint_every_epoch},
                {"net", net_json(c.net)}};
}

void emit(std::ostream& out, const std::string& event, json body) {
    json line{{"event", event}};
    for (auto& [k, v] : body.items()) line[k] = v;
    out << line.dump() << '\n';
}

/// Config file, then individual flags, then --set pairs, in increasing precedence.
struct ConfigSources {
    std::string path;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;

    KeyValueConfig resolve() const {
        KeyValueConfig kv = path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
        for (const auto& [k, v] : flags) kv.set(k, v);
        for (const std::string& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
            kv.set(s.substr(0, eq), s.substr(eq + 1));
        }
        kv.require_known(known_config_keys());
        return kv;
    }
};

void add_config_options(CLI::App* cmd, ConfigSources& src) {
    cmd->add_option("-c,--config", src.path, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", src.sets, "Override a config key (key=value); repeatable");
}

template <typename T>
void bind_flag(CLI::App* cmd, ConfigSources& src, const std::string& flag, const std::string& key,
               const std::string& help) {
    cmd->add_option_function<T>(
        flag, [&src, key](const T& v) {
            if constexpr (std::is_same_v<T, std::string>) {
                src.flags[key] = v;
            } else {
                src.flags[key] = CLI::detail::to_string(v);
            }
        },
        help + " (config key " + key + ")");
}

int gen_data(const KeyValueConfig& kv, std::ostream& out, std::ostream& err) {
    const SceneConfig scene = scene_config_from(kv);
    const std::int64_t count = kv.get_int("data.count", 100);
    const std::string dir = kv.get_string("out.dir", "");
    if (dir.empty()) throw ConfigError("gen-data needs an output directory (--out or out.dir)");
    if (count < 2) throw ConfigError("data.count must be at least 2");
    emit(out, "config", json{{"command", "gen-data"}, {"data.count", count}, {"out.dir", dir}, {"scene", scene_json(scene)}});
    const Manifest m = build_dataset(scene, static_cast<int>(count), dir);
    const auto n_test = m.split("test").size();
    emit(out, "dataset", json{{"manifest", (fs::path(dir) / "manifest.json").string()},
                              {"train", m.entries.size() - n_test},
                              {"test", n_test}});
    err << "wrote " << m.entries.size() << " samples to " << dir << '\n';
    return kOk;
}

int train_cmd(const KeyValueConfig& kv, std::ostream& out, std::ostream& err) {
    const TrainConfig cfg = train_config_from(kv);
    if (cfg.manifest.empty()) throw ConfigError("train needs a manifest (--manifest or data.manifest)");
    if (cfg.out_dir.empty()) throw ConfigError("train needs an output directory (--out or out.dir)");
    emit(out, "config", json{{"command", "train"}, {"train", train_json(cfg)}});
    const Manifest m = read_manifest(cfg.manifest);
    err << "training on " << m.split("train").size() << " samples for " << cfg.epochs << " epochs\n";
    const TrainResult r = train(cfg, m, &out);
    emit(out, "done", json{{"checkpoint", (fs::path(cfg.out_dir) / "model.bin").string()},
                           {"initial_loss", r.initial_loss},
                           {"final_loss", r.final_loss}});
    return kOk;
}

int enhance_cmd(const std::string& ckpt, const std::string& in, const std::string& out_path,
                const std::string& illum_path, std::ostream& out, std::ostream& err) {
    ModelParams model = load_checkpoint(ckpt);
    emit(out, "config", json{{"command", "enhance"}, {"ckpt", ckpt}, {"in", in}, {"out", out_path},
                             {"illum", illum_path}, {"net", net_json(model.config)}});
    const Tensor x = read_ppm(in);
    NoGradGuard no_grad;
    const IlluminationMap m = estimate_illumination(x, model.enhance);
    const Tensor y = retinex_enhance(x, m);
    write_ppm(out_path, y);
    if (!illum_path.empty()) write_pfm(illum_path, m.values);
    emit(out, "enhanced", json{{"de_input", discrete_entropy(x)}, {"de_output", discrete_entropy(y)},
                               {"mean_input", x.mean_value()}, {"mean_output", y.mean_value()}});
    err << "wrote " << out_path << '\n';
    return kOk;
}

Tensor predict(ModelParams& model, const Tensor& rgb, const Tensor& sparse) {
    NoGradGuard no_grad;
    return complete_depth(rgb, sparse, validity_mask(sparse), model, ForwardOptions{false, false}).depth;
}

int complete_cmd(const std::string& ckpt, const std::string& rgb, const std::string& sparse,
                 const std::string& out_path, const std::string& manifest, const std::string& split,
                 const std::string& out_dir, std::ostream& out, std::ostream& err) {
    ModelParams model = load_checkpoint(ckpt);
    emit(out, "config", json{{"command", "complete"}, {"ckpt", ckpt}, {"rgb", rgb}, {"sparse", sparse},
                             {"out", out_path}, {"manifest", manifest}, {"split", split},
                             {"out_dir", out_dir}, {"net", net_json(model.config)}});
    if (!manifest.empty()) {
        if (out_dir.empty()) throw ConfigError("--manifest needs --out-dir");
        const Manifest m = read_manifest(manifest);
        fs::create_directories(out_dir);
        std::size_t n = 0;
        for (const ManifestEntry& e : m.split(split)) {
            const RgbdSample s = load_sample(m, e);
            write_pfm((fs::path(out_dir) / (e.id + ".pfm")).string(), predict(model, s.rgb, s.sparse_depth));
            ++n;
        }
        emit(out, "completed", json{{"count", n}, {"out_dir", out_dir}});
        err << "wrote " << n << " predictions to " << out_dir << '\n';
        return kOk;
    }
    if (rgb.empty() || sparse.empty() || out_path.empty()) {
        throw ConfigError("complete needs --rgb, --sparse and --out (or --manifest and --out-dir)");
    }
    const Tensor depth = predict(model, read_ppm(rgb), read_pfm(sparse));
    write_pfm(out_path, depth);
    emit(out, "completed", json{{"count", 1}, {"out", out_path}});
    err << "wrote " << out_path << '\n';
    return kOk;
}

int eval_cmd(const std::string& pred_dir, const std::string& manifest, const std::string& split, std::ostream& out,
             std::ostream& err) {
    emit(out, "config", json{{"command", "eval"}, {"pred_dir", pred_dir}, {"manifest", manifest}, {"split", split}});
    const Manifest m = read_manifest(manifest);
    const auto entries = m.split(split);
    if (entries.empty()) throw DataError("split '" + split + "' is empty");
    std::vector<double> pred;
    std::vector<double> gt;
    for (const ManifestEntry& e : entries) {
        const Tensor p = read_pfm((fs::path(pred_dir) / (e.id + ".pfm")).string());
        const Tensor g = read_pfm((fs::path(m.root) / e.gt).string());
        if (p.shape() != g.shape()) throw DataError("prediction " + e.id + " has shape " + p.shape().str());
        pred.insert(pred.end(), p.data().begin(), p.data().end());
        gt.insert(gt.end(), g.data().begin(), g.data().end());
    }
    const auto n = static_cast<std::int64_t>(pred.size());
    const Tensor p(Shape{1, 1, 1, n}, std::move(pred));
    const Tensor g(Shape{1, 1, 1, n}, std::move(gt));
    const MetricReport r = completion_metrics(p, g, validity_mask(g));
    emit(out, "metrics", json{{"split", split}, {"samples", entries.size()}, {"metrics", json::parse(r.to_json())}});
    err << "rmse " << r["rmse"] << " m, mae " << r["mae"] << " m\n";
    return kOk;
}

int gradcheck_cmd(const KeyValueConfig& kv, int size, int samples, const GradcheckOptions& opt, std::ostream& out,
                  std::ostream& err) {
    NetConfig net = net_config_from(kv);
    SceneConfig scene = scene_config_from(kv);
    scene.height = size;
    scene.width = size;
    scene.validate();
    if (samples < 1) throw ConfigError("--samples must be >= 1");
    LossWeights w;
    w.alpha = kv.get_double("alpha", w.alpha);
    w.beta = kv.get_double("beta", w.beta);
    w.validate();
    emit(out, "config", json{{"command", "gradcheck"}, {"seed", opt.seed}, {"size", size}, {"samples", samples},
                             {"h", opt.h}, {"tolerance", opt.tolerance}, {"per_tensor", opt.per_tensor},
                             {"prefix", opt.prefix}, {"net", net_json(net)}, {"scene", scene_json(scene)}});
    std::vector<RgbdSample> data;
    std::vector<std::size_t> idx;
    for (int i = 0; i < samples; ++i) {
        data.push_back(make_sample(scene, i));
        idx.push_back(static_cast<std::size_t>(i));
    }
    ModelParams model = make_model(net, opt.seed);
    const GradcheckReport r = gradcheck_model(model, make_batch(data, idx), w, opt);
    emit(out, "gradcheck", json::parse(r.to_json()));
    err << (r.pass ? "gradcheck passed" : "gradcheck FAILED") << ": " << r.entries.size()
        << " scalars, max relative error " << r.max_rel_error << '\n';
    return r.pass ? kOk : kCheckFailed;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Low-light depth completion: data generation, training, enhancement, completion, evaluation"};
    app.name("ldcnet");
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads for the kernels (0 = runtime default)")
        ->check(CLI::NonNegativeNumber);

    ConfigSources gen_src;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic night RGB-D dataset");
    add_config_options(gen, gen_src);
    bind_flag<std::string>(gen, gen_src, "-o,--out", "out.dir", "Dataset directory");
    bind_flag<std::int64_t>(gen, gen_src, "--count", "data.count", "Number of samples");
    bind_flag<std::uint64_t>(gen, gen_src, "--seed", "seed", "Base seed");

    ConfigSources train_src;
    auto* tr = app.add_subcommand("train", "Train the network and write checkpoints plus a metric log");
    add_config_options(tr, train_src);
    bind_flag<std::string>(tr, train_src, "-m,--manifest", "data.manifest", "Dataset manifest");
    bind_flag<std::string>(tr, train_src, "-o,--out", "out.dir", "Output directory");
    bind_flag<std::uint64_t>(tr, train_src, "--seed", "seed", "Seed");
    bind_flag<std::int64_t>(tr, train_src, "--epochs", "epochs", "Epochs");
    bind_flag<std::int64_t>(tr, train_src, "--batch-size", "batch_size", "Batch size");
    bind_flag<double>(tr, train_src, "--lr", "lr", "Initial learning rate");

    std::string ckpt, in, out_path, illum;
    auto* en = app.add_subcommand("enhance", "Brighten a PPM image with a trained illumination estimator");
    en->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    en->add_option("--in", in, "Input PPM")->required()->check(CLI::ExistingFile);
    en->add_option("--out", out_path, "Enhanced PPM")->required();
    en->add_option("--illum", illum, "Illumination map PFM (3 channels)");

    std::string rgb, sparse, manifest, split = "test", out_dir;
    auto* co = app.add_subcommand("complete", "Predict dense depth for one sample or a manifest split");
    co->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    co->add_option("--rgb", rgb, "Input PPM")->check(CLI::ExistingFile);
    co->add_option("--sparse", sparse, "Sparse depth PFM")->check(CLI::ExistingFile);
    co->add_option("--out", out_path, "Output depth PFM");
    co->add_option("--manifest", manifest, "Predict every sample of a split instead")->check(CLI::ExistingFile);
    co->add_option("--split", split, "Split used with --manifest")->capture_default_str();
    co->add_option("--out-dir", out_dir, "Directory for <id>.pfm predictions");

    std::string pred_dir;
    auto* ev = app.add_subcommand("eval", "Score <id>.pfm predictions against a manifest split");
    ev->add_option("--pred-dir", pred_dir, "Prediction directory")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    ev->add_option("--split", split, "Split to score")->capture_default_str();

    ConfigSources gc_src;
    GradcheckOptions gc_opt;
    int gc_size = 32;
    int gc_samples = 2;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full training loss gradient");
    add_config_options(gc, gc_src);
    gc->add_option("--seed", gc_opt.seed, "Model, data and sampling seed")->capture_default_str();
    gc->add_option("--size", gc_size, "Image height and width")->capture_default_str();
    gc->add_option("--samples", gc_samples, "Batch size")->capture_default_str();
    gc->add_option("--per-tensor", gc_opt.per_tensor, "Scalars sampled per parameter tensor")->capture_default_str();
    gc->add_option("--step", gc_opt.h, "Finite-difference step")->capture_default_str();
    gc->add_option("--tolerance", gc_opt.tolerance, "Maximum relative error")->capture_default_str();
    gc->add_option("--prefix", gc_opt.prefix, "Only parameters whose name starts with this");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    if (threads > 0) kernels::set_threads(threads);
    try {
        if (*gen) return gen_data(gen_src.resolve(), out, err);
        if (*tr) return train_cmd(train_src.resolve(), out, err);
        if (*en) return enhance_cmd(ckpt, in, out_path, illum, out, err);
        if (*co) return complete_cmd(ckpt, rgb, sparse, out_path, manifest, split, out_dir, out, err);
        if (*ev) return eval_cmd(pred_dir, manifest, split, out, err);
        if (*gc) {
            KeyValueConfig kv = gc_src.resolve();
            if (!kv.has("seed")) kv.set("seed", std::to_string(gc_opt.seed));
            return gradcheck_cmd(kv, gc_size, gc_samples, gc_opt, out, err);
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}

}  // namespace ldc::cli
