#pragma once

// Depth and joint losses, Adam with step-decayed learning rate, the training
// loop and finite-difference gradient checking.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ldc/data.hpp"
#include "ldc/ldcnet.hpp"
#include "ldc/metrics.hpp"
#include "ldc/tensor.hpp"

namespace ldc {

struct LossWeights {
    double alpha = 0.15;
    double beta = 0.3;

    void validate() const;
};

/// mean over valid pixels of (D - o)^2. Throws NoValidPixels on an empty mask.
Tensor l2_depth_loss(const Tensor& pred, const Tensor& gt, const Tensor& valid);

/// l2 + alpha * lf + beta * ls.
double total_loss(double l2, double lf, double ls, const LossWeights& w);
Tensor total_loss(const Tensor& l2, const Tensor& lf, const Tensor& ls, const LossWeights& w);

struct Batch {
    Tensor rgb;       // N x 3 x H x W
    Tensor sparse;    // N x 1 x H x W
    Tensor valid_in;  // sparse > 0
    Tensor gt;        // N x 1 x H x W
    Tensor valid_gt;  // gt > 0
};

Batch make_batch(const std::vector<RgbdSample>& samples, const std::vector<std::size_t>& indices);

struct LossBreakdown {
    Tensor total;
    double l2 = 0.0;
    double fidelity = 0.0;
    double smoothness = 0.0;
};

LossBreakdown joint_loss(const ForwardOutput& out, const Batch& batch, const LossWeights& w);

struct OptimState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-6;
    double eps = 1e-8;
    std::int64_t step = 0;
    int epoch = 0;
    std::map<std::string, std::vector<double>> first_moment;
    std::map<std::string, std::vector<double>> second_moment;
};

/// One Adam update over every parameter, with weight decay added to the
/// gradient before the moment updates. Throws OptimError if a parameter has
/// no gradient.
void adam_step(ParamStore& params, OptimState& state);

/// initial_lr * 0.5^floor(epoch / 5).
double lr_schedule(double initial_lr, int epoch);

struct TrainConfig {
    std::uint64_t seed = 1;
    int epochs = 20;
    int batch_size = 12;
    double lr = 1e-3;
    LossWeights weights;
    NetConfig net;
    std::string manifest;
    std::string out_dir;
    /// Write ckpt_epochNNN.bin after every epoch (model.bin is always written).
    bool checkpoint_every_epoch = true;
};

struct LogRecord {
    int epoch = 0;
    std::string split;
    std::string metric;
    double value = 0.0;

    std::string to_json() const;
};

/// Records written per epoch: loss_total, loss_l2, loss_f, loss_s, lr on the
/// train split, plus rmse, mae, irmse, imae on the test split when it is non-empty.
int records_per_epoch(bool has_test);

struct TrainResult {
    ModelParams model;
    std::vector<LogRecord> log;
    double initial_loss = 0.0;  // total loss of the first batch before any update
    double final_loss = 0.0;    // total loss of that same batch after training
};

/// Trains on the manifest's train split, evaluating on its test split after
/// every epoch. Writes metrics.jsonl and checkpoints to cfg.out_dir (skipped
/// when out_dir is empty); each record is also streamed to `log` if given.
TrainResult train(const TrainConfig& cfg, const Manifest& manifest, std::ostream* log = nullptr);
TrainResult train(const TrainConfig& cfg, const std::vector<RgbdSample>& train_set,
                  const std::vector<RgbdSample>& test_set, std::ostream* log = nullptr);

/// Completion metrics pooled over every valid pixel of the given samples.
MetricReport evaluate(ModelParams& model, const std::vector<RgbdSample>& samples);

// --- gradient checking ---

struct GradcheckOptions {
    double h = 1e-5;
    double tolerance = 1e-4;
    /// Analytic and numeric values closer than this agree regardless of their
    /// ratio. At h = 1e-5 central differences of an O(10) loss carry round-off
    /// of a few 1e-9, so tiny gradients cannot be resolved more finely.
    double noise_floor = 1e-8;
    /// Drop samples whose +h or -h evaluation lands on another side of some
    /// relu, clamp or absolute-value kink than the unperturbed loss: there the
    /// central difference straddles a slope change and is no oracle. Another
    /// index of the same tensor is drawn in its place.
    bool skip_kink_crossings = true;
    int per_tensor = 50;
    std::uint64_t seed = 0;
    /// Only parameters whose name starts with this prefix.
    std::string prefix;
};

struct GradcheckEntry {
    std::string name;
    std::int64_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;
    double max_rel_error = 0.0;
    double mean_rel_error = 0.0;
    /// Samples dropped because the finite difference crossed a kink.
    std::int64_t kink_skipped = 0;
    bool pass = true;

    std::string to_json() const;
};

/// Central differences (L(p + h) - L(p - h)) / 2h against the analytic
/// gradient, for up to per_tensor seeded-uniformly sampled scalars of each
/// named tensor. `loss_fn` must rebuild the loss from the current values.
GradcheckReport gradcheck(std::vector<std::pair<std::string, Tensor>> params, const std::function<Tensor()>& loss_fn,
                          const GradcheckOptions& opt);

/// Gradient check of the full joint loss of `model` on `batch`. Normalization
/// uses batch statistics without touching the running statistics.
GradcheckReport gradcheck_model(ModelParams& model, const Batch& batch, const LossWeights& w,
                                const GradcheckOptions& opt);

}  // namespace ldc
