#include "ldc/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "ldc/autograd.hpp"
#include "ldc/ops.hpp"
#include "ldc/random.hpp"

namespace ldc {

void LossWeights::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("loss weights must be non-negative");
}

Tensor l2_depth_loss(const Tensor& pred, const Tensor& gt, const Tensor& valid) {
    require_same_shape(pred, gt, "l2_depth_loss");
    require_same_shape(pred, valid, "l2_depth_loss mask");
    const auto pv = pred.data();
    const auto gv = gt.data();
    const auto mv = valid.data();
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        if (mv[i] == 0.0) continue;
        const double e = gv[i] - pv[i];
        acc += e * e;
        ++n;
    }
    if (n == 0) throw NoValidPixels("depth loss over an empty mask");
    const double inv_n = 1.0 / static_cast<double>(n);
    return record(Shape{1, 1, 1, 1}, {acc * inv_n}, {pred, gt},
                  [pred, gt, valid, inv_n](std::span<const double> g, GradBuffers& gb) {
                      const auto pv = pred.data();
                      const auto gv = gt.data();
                      const auto mv = valid.data();
                      for (std::size_t i = 0; i < pv.size(); ++i) {
                          if (mv[i] == 0.0) continue;
                          const double d = 2.0 * (pv[i] - gv[i]) * inv_n * g[0];
                          if (gb.wants(0)) gb[0][i] += d;
                          if (gb.wants(1)) gb[1][i] -= d;
                      }
                  });
}

double total_loss(double l2, double lf, double ls, const LossWeights& w) { return l2 + w.alpha * lf + w.beta * ls; }

Tensor total_loss(const Tensor& l2, const Tensor& lf, const Tensor& ls, const LossWeights& w) {
    return add(add(l2, scale(lf, w.alpha)), scale(ls, w.beta));
}

Batch make_batch(const std::vector<RgbdSample>& samples, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw DataError("empty batch");
    const Shape s0 = samples.at(indices[0]).rgb.shape();
    const auto n = static_cast<std::int64_t>(indices.size());
    Batch b;
    b.rgb = Tensor(Shape{n, 3, s0.h, s0.w});
    b.sparse = Tensor(Shape{n, 1, s0.h, s0.w});
    b.gt = Tensor(Shape{n, 1, s0.h, s0.w});
    const std::int64_t plane = s0.h * s0.w;
    for (std::int64_t i = 0; i < n; ++i) {
        const RgbdSample& s = samples.at(indices[i]);
        if (s.rgb.shape() != s0 || s.sparse_depth.shape() != Shape{1, 1, s0.h, s0.w} ||
            s.gt_depth.shape() != Shape{1, 1, s0.h, s0.w}) {
            throw DataError("sample " + s.id + " does not match the batch extents");
        }
        std::copy(s.rgb.data().begin(), s.rgb.data().end(), b.rgb.mutable_data().begin() + i * 3 * plane);
        std::copy(s.sparse_depth.data().begin(), s.sparse_depth.data().end(), b.sparse.mutable_data().begin() + i * plane);
        std::copy(s.gt_depth.data().begin(), s.gt_depth.data().end(), b.gt.mutable_data().begin() + i * plane);
    }
    b.valid_in = validity_mask(b.sparse);
    b.valid_gt = validity_mask(b.gt);
    return b;
}

LossBreakdown joint_loss(const ForwardOutput& out, const Batch& batch, const LossWeights& w) {
    Tensor l2 = l2_depth_loss(out.depth, batch.gt, batch.valid_gt);
    Tensor lf = fidelity_loss(out.illumination, batch.rgb);
    Tensor ls = smoothness_loss(out.illumination);
    LossBreakdown r;
    r.total = total_loss(l2, lf, ls, w);
    r.l2 = l2.item();
    r.fidelity = lf.item();
    r.smoothness = ls.item();
    return r;
}

void adam_step(ParamStore& params, OptimState& state) {
    if (!(state.lr > 0.0)) throw OptimError("learning rate must be positive");
    for (auto& [name, p] : params.entries()) {
        if (!p.has_grad()) throw OptimError("parameter " + name + " has no gradient");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params.entries()) {
        auto& m = state.first_moment[name];
        auto& v = state.second_moment[name];
        const std::size_t n = static_cast<std::size_t>(p.numel());
        if (m.size() != n) m.assign(n, 0.0);
        if (v.size() != n) v.assign(n, 0.0);
        auto data = p.mutable_data();
        const auto grad = p.grad();
        for (std::size_t i = 0; i < n; ++i) {
            const double g = grad[i] + state.weight_decay * data[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double lr_schedule(double initial_lr, int epoch) {
    if (epoch < 0) throw ConfigError("epoch must be non-negative");
    return initial_lr * std::pow(0.5, static_cast<double>(epoch / 5));
}

std::string LogRecord::to_json() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["split"] = split;
    j["metric"] = metric;
    j["value"] = value;
    return j.dump();
}

int records_per_epoch(bool has_test) { return has_test ? 9 : 5; }

MetricReport evaluate(ModelParams& model, const std::vector<RgbdSample>& samples) {
    if (samples.empty()) throw DataError("nothing to evaluate");
    NoGradGuard no_grad;
    std::vector<double> pred;
    std::vector<double> gt;
    for (const RgbdSample& s : samples) {
        const Tensor valid = validity_mask(s.sparse_depth);
        ForwardOutput out = complete_depth(s.rgb, s.sparse_depth, valid, model, ForwardOptions{false, false});
        pred.insert(pred.end(), out.depth.data().begin(), out.depth.data().end());
        gt.insert(gt.end(), s.gt_depth.data().begin(), s.gt_depth.data().end());
    }
    const auto n = static_cast<std::int64_t>(pred.size());
    Tensor p(Shape{1, 1, 1, n}, std::move(pred));
    Tensor g(Shape{1, 1, 1, n}, std::move(gt));
    return completion_metrics(p, g, validity_mask(g));
}

TrainResult train(const TrainConfig& cfg, const Manifest& manifest, std::ostream* log) {
    std::vector<RgbdSample> train_set = load_split(manifest, "train");
    if (train_set.empty()) throw DataError("manifest has no training samples");
    std::vector<RgbdSample> test_set = load_split(manifest, "test");
    return train(cfg, train_set, test_set, log);
}

TrainResult train(const TrainConfig& cfg, const std::vector<RgbdSample>& train_set,
                  const std::vector<RgbdSample>& test_set, std::ostream* log) {
    if (train_set.empty()) throw DataError("no training samples");
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("epochs and batch_size must be positive");
    cfg.weights.validate();

    namespace fs = std::filesystem;
    std::ofstream metrics_file;
    if (!cfg.out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(cfg.out_dir, ec);
        if (ec) throw IoError("cannot create " + cfg.out_dir + ": " + ec.message());
        metrics_file.open(fs::path(cfg.out_dir) / "metrics.jsonl", std::ios::trunc);
        if (!metrics_file) throw IoError("cannot write metrics log in " + cfg.out_dir);
    }

    TrainResult result;
    result.model = make_model(cfg.net, derive_seed(cfg.seed, 1));
    ModelParams& model = result.model;
    OptimState state;
    state.lr = cfg.lr;

    auto emit = [&](int epoch, const char* split, const std::string& metric, double value) {
        LogRecord r{epoch, split, metric, value};
        const std::string line = r.to_json();
        if (metrics_file.is_open()) metrics_file << line << '\n';
        if (log) *log << line << '\n';
        result.log.push_back(std::move(r));
    };

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::size_t> first_batch;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        state.epoch = epoch;
        state.lr = lr_schedule(cfg.lr, epoch);
        Rng shuffle(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double sum_total = 0.0, sum_l2 = 0.0, sum_f = 0.0, sum_s = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
            const Batch batch = make_batch(train_set, idx);
            model.params.clear_grad();
            ForwardOutput out = complete_depth(batch.rgb, batch.sparse, batch.valid_in, model, ForwardOptions{true, true});
            LossBreakdown loss = joint_loss(out, batch, cfg.weights);
            if (first_batch.empty()) {
                first_batch = idx;
                result.initial_loss = loss.total.item();
            }
            backward(loss.total);
            adam_step(model.params, state);

            const double w = static_cast<double>(idx.size());
            sum_total += w * loss.total.item();
            sum_l2 += w * loss.l2;
            sum_f += w * loss.fidelity;
            sum_s += w * loss.smoothness;
            seen += idx.size();
        }
        model.params.clear_grad();
        const double inv = 1.0 / static_cast<double>(seen);
        emit(epoch, "train", "loss_total", sum_total * inv);
        emit(epoch, "train", "loss_l2", sum_l2 * inv);
        emit(epoch, "train", "loss_f", sum_f * inv);
        emit(epoch, "train", "loss_s", sum_s * inv);
        emit(epoch, "train", "lr", state.lr);
        if (!test_set.empty()) {
            const MetricReport r = evaluate(model, test_set);
            for (const char* name : {"rmse", "mae", "irmse", "imae"}) emit(epoch, "test", name, r[name]);
        }
        if (!cfg.out_dir.empty() && cfg.checkpoint_every_epoch) {
            char file[32];
            std::snprintf(file, sizeof(file), "ckpt_epoch%03d.bin", epoch);
            save_checkpoint(model, (fs::path(cfg.out_dir) / file).string());
        }
    }
    {
        NoGradGuard no_grad;
        const Batch batch = make_batch(train_set, first_batch);
        ForwardOutput out = complete_depth(batch.rgb, batch.sparse, batch.valid_in, model, ForwardOptions{true, false});
        result.final_loss = joint_loss(out, batch, cfg.weights).total.item();
    }
    if (!cfg.out_dir.empty()) save_checkpoint(model, (fs::path(cfg.out_dir) / "model.bin").string());
    return result;
}

}  // namespace ldc
