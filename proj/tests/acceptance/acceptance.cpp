// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on stderr.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli.hpp"
#include "ldc/data.hpp"
#include "ldc/diffconv.hpp"
#include "ldc/enhance.hpp"
#include "ldc/image_io.hpp"
#include "ldc/kernels.hpp"
#include "ldc/metrics.hpp"
#include "ldc/ops.hpp"
#include "ldc/train.hpp"
#include "oracles.hpp"

using namespace ldc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

ConvKernel random_kernel(std::int64_t out, std::int64_t in, int k, Rng& rng, bool bias) {
    ConvKernel kern;
    kern.weight = oracle::random_tensor(Shape{out, in, k, k}, rng);
    if (bias) kern.bias = oracle::random_tensor(Shape{1, out, 1, 1}, rng);
    return kern;
}

Shape random_feature_shape(Rng& rng) {
    return Shape{1 + static_cast<std::int64_t>(rng.below(2)), 1 + static_cast<std::int64_t>(rng.below(4)),
                 3 + static_cast<std::int64_t>(rng.below(6)), 3 + static_cast<std::int64_t>(rng.below(6))};
}

int random_odd_size(Rng& rng) { return 1 + 2 * static_cast<int>(rng.below(3)); }

// --- 1: two-form equivalence of central differencing ---
Outcome identity_suite() {
    const auto t0 = Clock::now();
    Rng rng(101);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Shape s = random_feature_shape(rng);
        const Tensor x = oracle::random_tensor(s, rng);
        const ConvKernel kern = random_kernel(1 + static_cast<std::int64_t>(rng.below(3)), s.c, random_odd_size(rng),
                                              rng, rng.uniform() < 0.5);
        const double theta = rng.uniform();
        worst = std::max(worst, oracle::max_abs_diff(cdc_forward(x, kern, CdcConfig{theta}),
                                                     oracle::cdc_mixture(x, kern.weight, kern.bias, theta)));
    }
    const double t = seconds_since(t0);
    return {worst < 1e-9 && t < 30.0, "1000 cases, max abs error " + fmt(worst) + ", " + fmt(t) + " s"};
}

// --- 2: degenerate cases ---
Outcome degeneration_suite() {
    Rng rng(202);
    double iaicd_err = 0.0, cdc_err = 0.0, ricd_max = 0.0;
    for (int i = 0; i < 200; ++i) {
        const Shape s = random_feature_shape(rng);
        const Tensor x = oracle::random_tensor(s, rng);
        const int k = 1 + 2 * static_cast<int>(1 + rng.below(2));
        const ConvKernel kern = random_kernel(1 + static_cast<std::int64_t>(rng.below(3)), s.c, k, rng, true);
        const std::int64_t groups = 1 + static_cast<std::int64_t>(rng.below(3));
        Tensor w(Shape{s.n, groups * k * k, s.h, s.w});
        for (std::int64_t n = 0; n < s.n; ++n)
            for (std::int64_t g = 0; g < groups; ++g)
                for (std::int64_t y = 0; y < s.h; ++y)
                    for (std::int64_t xx = 0; xx < s.w; ++xx) w.at(n, g * k * k + (k * k) / 2, y, xx) = 1.0;
        iaicd_err = std::max(iaicd_err,
                             oracle::max_abs_diff(iaicd_with_weights(x, kern, w), cdc_forward(x, kern, CdcConfig{1.0})));
    }
    for (int i = 0; i < 200; ++i) {
        const Shape s = random_feature_shape(rng);
        const Tensor x = oracle::random_tensor(s, rng);
        const ConvKernel kern = random_kernel(1 + static_cast<std::int64_t>(rng.below(3)), s.c, random_odd_size(rng),
                                              rng, true);
        cdc_err = std::max(cdc_err, oracle::max_abs_diff(cdc_forward(x, kern, CdcConfig{0.0}),
                                                         conv2d(x, kern, 1, (kern.size() - 1) / 2)));
    }
    for (int i = 0; i < 200; ++i) {
        const Shape s = random_feature_shape(rng);
        const Tensor x = oracle::random_tensor(s, rng);
        const int k_small = 1 + 2 * static_cast<int>(rng.below(2));
        const int k_large = k_small + 2 + 2 * static_cast<int>(rng.below(2));
        ConvKernel large = ConvKernel::zeros(s.c, s.c, k_large, true);
        ConvKernel small = ConvKernel::zeros(s.c, s.c, k_small, true);
        for (std::int64_t c = 0; c < s.c; ++c) {
            large.weight.at(c, c, k_large / 2, k_large / 2) = 1.0;
            small.weight.at(c, c, k_small / 2, k_small / 2) = 1.0;
        }
        const Tensor y = ricd_step(x, large, small);
        ricd_max = std::max({ricd_max, std::abs(y.min()), std::abs(y.max())});
    }
    const bool pass = iaicd_err < 1e-9 && cdc_err < 1e-12 && ricd_max == 0.0;
    return {pass, "200 cases each; one-hot differencing vs central " + fmt(iaicd_err) + ", theta 0 vs plain conv " +
                      fmt(cdc_err) + ", matched deltas max |y| " + fmt(ricd_max)};
}

// --- 3: full-model gradient check ---
Outcome gradient_suite() {
    const auto t0 = Clock::now();
    SceneConfig scene;
    scene.height = 32;
    scene.width = 32;
    scene.seed = 303;
    std::vector<RgbdSample> samples{make_sample(scene, 0), make_sample(scene, 1)};
    const Batch batch = make_batch(samples, {0, 1});
    ModelParams model = make_model(NetConfig{}, 303);
    GradcheckOptions opt;
    opt.per_tensor = 12;
    opt.seed = 303;
    const GradcheckReport r = gradcheck_model(model, batch, LossWeights{}, opt);
    const double t = seconds_since(t0);
    for (const GradcheckEntry& e : r.entries) {
        if (!e.pass)
            std::cerr << "  mismatch " << e.name << "[" << e.index << "] analytic " << e.analytic << " numeric "
                      << e.numeric << "\n";
    }
    const bool pass = r.entries.size() >= 500 && r.max_rel_error < 1e-4 && t < 600.0;
    return {pass, std::to_string(r.entries.size()) + " parameters, max relative error " + fmt(r.max_rel_error) + ", " +
                      std::to_string(r.kink_skipped) + " kink-straddling draws replaced, " + fmt(t) + " s"};
}

// --- 4: loss sanity ---
Outcome loss_suite() {
    Rng rng(404);
    const Tensor x = oracle::random_tensor(Shape{2, 3, 8, 8}, rng, 0, 1);
    const double lf = fidelity_loss(IlluminationMap{x.clone(), kIlluminationFloor}, x).item();
    const double ls = smoothness_loss(IlluminationMap{Tensor(x.shape(), 0.37), kIlluminationFloor}).item();
    const Tensor d = oracle::random_tensor(Shape{2, 1, 8, 8}, rng, 1, 20);
    const double l2 = l2_depth_loss(d.clone(), d, validity_mask(d)).item();
    const double total = total_loss(1.0, 2.0, 3.0, LossWeights{});
    const bool pass = std::abs(lf) <= 1e-12 && std::abs(ls) <= 1e-12 && std::abs(l2) <= 1e-12 &&
                      std::abs(total - 2.2) <= 1e-12;
    return {pass, "fidelity " + fmt(lf) + ", smoothness " + fmt(ls) + ", depth " + fmt(l2) + ", total(1,2,3) " +
                      fmt(total)};
}

// --- 5: metric oracles ---
Outcome metric_suite() {
    Rng rng(505);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Shape s{1, 1, 4 + static_cast<std::int64_t>(rng.below(8)), 4 + static_cast<std::int64_t>(rng.below(8))};
        const Tensor o = oracle::random_tensor(s, rng, 0.5, 40.0);
        const Tensor d = oracle::random_tensor(s, rng, 0.5, 40.0);
        Tensor valid(s);
        for (double& v : valid.mutable_data()) v = rng.uniform() < 0.6 ? 1.0 : 0.0;
        valid.mutable_data()[0] = 1.0;
        double se = 0, ae = 0, ise = 0, iae = 0, ar = 0, sr = 0, sle = 0, n = 0, h1 = 0, h2 = 0, h3 = 0;
        for (std::int64_t i = 0; i < s.numel(); ++i) {
            if (valid[i] == 0.0) continue;
            const double e = o[i] - d[i];
            const double ie = 1000.0 / o[i] - 1000.0 / d[i];
            const double le = std::log(o[i]) - std::log(d[i]);
            const double ratio = std::max(o[i] / d[i], d[i] / o[i]);
            se += e * e;
            ae += std::abs(e);
            ise += ie * ie;
            iae += std::abs(ie);
            ar += std::abs(e) / d[i];
            sr += e * e / d[i];
            sle += le * le;
            h1 += ratio < 1.25;
            h2 += ratio < 1.25 * 1.25;
            h3 += ratio < 1.25 * 1.25 * 1.25;
            n += 1;
        }
        const MetricReport c = completion_metrics(o, d, valid);
        const MetricReport e = estimation_metrics(o, d, valid);
        auto rel = [](double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); };
        worst = std::max({worst, rel(c["rmse"], std::sqrt(se / n)), rel(c["mae"], ae / n),
                          rel(c["irmse"], std::sqrt(ise / n)), rel(c["imae"], iae / n), rel(e["abs_rel"], ar / n),
                          rel(e["sq_rel"], sr / n), rel(e["rmse"], std::sqrt(se / n)),
                          rel(e["rmse_log"], std::sqrt(sle / n)), rel(e["delta1"], h1 / n),
                          rel(e["delta2"], h2 / n), rel(e["delta3"], h3 / n)});
    }
    const Tensor one(Shape{1, 1, 1, 1}, 1.0);
    const double imae = completion_metrics(Tensor(Shape{1, 1, 1, 1}, 4.0), Tensor(Shape{1, 1, 1, 1}, 2.0), one)["imae"];
    return {worst < 1e-12 && imae == 250.0,
            "100 random masked pairs, max deviation " + fmt(worst) + "; iMAE(D=2, o=4) = " + fmt(imae) + " /km"};
}

// --- 6 and 7: ablation ordering and enhancement direction ---
struct AblationSettings {
    int epochs = 6;
    int batch_size = 4;
    int count = 222;
};

struct AblationResult {
    Outcome ablation;
    Outcome enhancement;
};

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

AblationResult ablation_suite(const fs::path& work, const AblationSettings& settings) {
    const auto t0 = Clock::now();
    SceneConfig scene;
    scene.seed = 606;
    const fs::path data = work / "ablation_data";
    fs::remove_all(data);
    const Manifest built = build_dataset(scene, settings.count, data.string());
    const Manifest m = read_manifest((data / "manifest.json").string());
    const std::vector<RgbdSample> train_set = load_split(m, "train");
    const std::vector<RgbdSample> test_set = load_split(m, "test");
    std::cerr << "  dataset: " << train_set.size() << " train / " << test_set.size() << " test, "
              << scene.height << "x" << scene.width << '\n';

    const char* names[] = {"full", "no-ricd", "no-iaicd"};
    std::vector<double> rmse[3];
    std::vector<ModelParams> full_models;
    for (std::uint64_t seed : {1, 2, 3}) {
        for (int v = 0; v < 3; ++v) {
            TrainConfig cfg;
            cfg.seed = seed;
            cfg.epochs = settings.epochs;
            cfg.batch_size = settings.batch_size;
            cfg.net.use_ricd = v != 1;
            cfg.net.use_iaicd = v != 2;
            TrainResult r = train(cfg, train_set, test_set);
            double last = 0.0;
            for (const LogRecord& rec : r.log)
                if (rec.split == "test" && rec.metric == "rmse") last = rec.value;
            rmse[v].push_back(last);
            std::cerr << "  seed " << seed << " " << names[v] << ": test rmse " << last << " m (" << fmt(seconds_since(t0))
                      << " s elapsed)\n";
            if (v == 0) full_models.push_back(std::move(r.model));
        }
    }
    const double full = median3(rmse[0]), no_ricd = median3(rmse[1]), no_iaicd = median3(rmse[2]);
    const double t = seconds_since(t0);
    AblationResult out;
    out.ablation.pass = full < no_ricd && full < no_iaicd && t < 45 * 60;
    out.ablation.detail = "median test RMSE over 3 seeds: full " + fmt(full) + " m, no-RICD " + fmt(no_ricd) +
                          " m, no-IAICD " + fmt(no_iaicd) + " m; " + std::to_string(settings.epochs) + " epochs, " +
                          fmt(t / 60.0) + " min";

    double de_in = 0, de_out = 0, mean_in = 0, mean_out = 0, count = 0;
    NoGradGuard no_grad;
    for (ModelParams& model : full_models) {
        for (const RgbdSample& s : test_set) {
            const Tensor enhanced = retinex_enhance(s.rgb, estimate_illumination(s.rgb, model.enhance));
            de_in += discrete_entropy(s.rgb);
            de_out += discrete_entropy(enhanced);
            mean_in += s.rgb.mean_value();
            mean_out += enhanced.mean_value();
            count += 1;
        }
    }
    de_in /= count;
    de_out /= count;
    mean_in /= count;
    mean_out /= count;
    out.enhancement.pass = de_out > de_in && mean_out >= mean_in;
    out.enhancement.detail = "mean DE " + fmt(de_in) + " -> " + fmt(de_out) + " bits, mean brightness " +
                             fmt(mean_in) + " -> " + fmt(mean_out) + " over " + std::to_string(static_cast<int>(count)) +
                             " enhanced test images";
    (void)built;
    return out;
}

// --- 8: determinism ---
int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "ldcnet");
    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) std::cerr << err.str();
    return code;
}

std::vector<std::pair<std::string, std::string>> tree_bytes(const fs::path& root) {
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& f : fs::recursive_directory_iterator(root)) {
        if (f.is_regular_file()) files.emplace_back(fs::relative(f.path(), root).string(), read_file(f.path().string()));
    }
    std::sort(files.begin(), files.end());
    return files;
}

Outcome determinism_suite(const fs::path& work) {
    const fs::path root = work / "determinism";
    fs::remove_all(root);
    std::vector<std::vector<std::pair<std::string, std::string>>> trees;
    std::size_t files = 0;
    for (int threads : {1, 1, 2, 4}) {
        const fs::path dir = root / ("run" + std::to_string(trees.size()));
        const std::string t = std::to_string(threads);
        if (run_cli({"--threads", t, "gen-data", "-o", (dir / "data").string(), "--count", "8", "--seed", "808",
                     "--set", "scene.height=32", "--set", "scene.width=32"}) != 0 ||
            run_cli({"--threads", t, "train", "-m", (dir / "data" / "manifest.json").string(), "-o",
                     (dir / "run").string(), "--epochs", "2", "--batch-size", "3", "--seed", "808"}) != 0) {
            return {false, "pipeline run failed with " + t + " threads"};
        }
        trees.push_back(tree_bytes(dir));
        files = trees.back().size();
    }
    bool same = true;
    for (std::size_t i = 1; i < trees.size(); ++i) same = same && trees[i] == trees[0];
    std::set<std::string> kinds;
    for (const auto& [name, bytes] : trees[0]) kinds.insert(fs::path(name).extension().string());
    const bool covers = kinds.count(".bin") && kinds.count(".jsonl") && kinds.count(".ppm") && kinds.count(".pfm") &&
                        kinds.count(".json");
    return {same && covers, std::to_string(files) +
                                " files (dataset, checkpoints, metric log) byte-identical across 2 runs and 1/2/4 threads"};
}

// --- 9: file formats ---
Outcome format_suite(const fs::path& work) {
    Rng rng(909);
    const fs::path dir = work / "formats";
    fs::create_directories(dir);
    bool pfm_ok = true;
    for (std::int64_t c : {1, 3}) {
        const Tensor x = oracle::random_tensor(Shape{1, c, 13, 17}, rng, -50, 50);
        const std::string path = (dir / ("x" + std::to_string(c) + ".pfm")).string();
        write_pfm(path, x);
        const Tensor y = read_pfm(path);
        pfm_ok = pfm_ok && y.shape() == x.shape();
        for (std::int64_t i = 0; pfm_ok && i < x.numel(); ++i) {
            pfm_ok = y[i] == static_cast<double>(static_cast<float>(x[i]));
        }
    }
    pfm_ok = pfm_ok && encode_pfm(Tensor(Shape{1, 1, 2, 3})).substr(0, 12) == "Pf\n3 2\n-1.0\n";

    double ppm_worst = 0.0;
    Tensor levels(Shape{1, 3, 16, 16});
    for (std::int64_t i = 0; i < levels.numel(); ++i) {
        const double level = static_cast<double>(i % 256) / 255.0;
        const double jitter = (static_cast<double>((i / 256) % 3) - 1.0) * (0.5 / 255.0 - 1e-9);
        levels.mutable_data()[static_cast<std::size_t>(i)] = std::clamp(level + jitter, 0.0, 1.0);
    }
    const Tensor photo = oracle::random_tensor(Shape{1, 3, 21, 19}, rng, 0, 1);
    for (const Tensor& x : {levels, photo}) {
        const std::string path = (dir / "x.ppm").string();
        write_ppm(path, x);
        ppm_worst = std::max(ppm_worst, oracle::max_abs_diff(read_ppm(path), x));
    }

    auto be = [](float f) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        std::string s(4, '\0');
        for (int i = 0; i < 4; ++i) s[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (24 - 8 * i)) & 0xff);
        return s;
    };
    std::string fixture = "PF\n1 2\n1.0\n";
    for (float f : {0.5f, -2.0f, 3.25f, 1e-4f, 7.0f, 1024.5f}) fixture += be(f);
    write_file((dir / "be.pfm").string(), fixture);
    const Tensor t = read_pfm((dir / "be.pfm").string());
    const bool be_ok = t.shape() == Shape{1, 3, 2, 1} && t.at(0, 0, 1, 0) == 0.5 && t.at(0, 1, 1, 0) == -2.0 &&
                       t.at(0, 2, 1, 0) == 3.25 && t.at(0, 0, 0, 0) == static_cast<double>(1e-4f) &&
                       t.at(0, 1, 0, 0) == 7.0 && t.at(0, 2, 0, 0) == 1024.5;
    const bool pass = pfm_ok && ppm_worst <= 1.0 / 510.0 && be_ok;
    return {pass, std::string("PFM float32-exact ") + (pfm_ok ? "yes" : "no") + ", PPM max error " + fmt(ppm_worst) +
                      " (bound " + fmt(1.0 / 510.0) + "), big-endian fixture " + (be_ok ? "ok" : "wrong")};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::string work = (fs::temp_directory_path() / "ldc_acceptance").string();
    std::vector<int> only;
    AblationSettings ablation;
    app.add_option("--work-dir", work, "Scratch directory")->capture_default_str();
    app.add_option("--only", only, "Run only these criteria (1-9)");
    app.add_option("--epochs", ablation.epochs, "Epochs per ablation run (at most 10)")->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    if (ablation.epochs > 10) {
        std::cerr << "the ablation criterion allows at most 10 epochs\n";
        return 1;
    }
    fs::create_directories(work);
    kernels::set_threads(1);

    auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
    int failed = 0;
    auto report = [&](int id, const char* title, const Outcome& o) {
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << title << "): " << o.detail
                  << std::endl;
        failed += o.pass ? 0 : 1;
    };
    auto guarded = [&](int id, const char* title, const std::function<Outcome()>& fn) {
        if (!wanted(id)) return;
        std::cerr << "running criterion " << id << " ...\n";
        try {
            report(id, title, fn());
        } catch (const std::exception& e) {
            report(id, title, Outcome{false, std::string("error: ") + e.what()});
        }
    };

    guarded(1, "central differencing two-form identity", identity_suite);
    guarded(2, "degenerate operator cases", degeneration_suite);
    guarded(3, "full-model gradient check", gradient_suite);
    guarded(4, "loss sanity", loss_suite);
    guarded(5, "metric oracles", metric_suite);
    if (wanted(6) || wanted(7)) {
        std::cerr << "running criteria 6 and 7 ...\n";
        AblationResult r;
        try {
            r = ablation_suite(work, ablation);
        } catch (const std::exception& e) {
            r.ablation = r.enhancement = Outcome{false, std::string("error: ") + e.what()};
        }
        if (wanted(6)) report(6, "ablation direction", r.ablation);
        if (wanted(7)) report(7, "enhancement direction", r.enhancement);
    }
    guarded(8, "determinism", [&] { return determinism_suite(work); });
    guarded(9, "format round trips", [&] { return format_suite(work); });
    return failed == 0 ? 0 : 1;
}
