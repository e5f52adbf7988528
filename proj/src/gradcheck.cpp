#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "ldc/ops.hpp"
#include "ldc/random.hpp"
#include "ldc/train.hpp"

namespace ldc {

namespace {

// Distinct indices in draw order: every index when the tensor is small,
// otherwise up to `limit` seeded-uniform draws.
std::vector<std::int64_t> candidate_indices(std::int64_t numel, int count, int limit, std::uint64_t seed) {
    std::vector<std::int64_t> out;
    if (numel <= count) {
        for (std::int64_t i = 0; i < numel; ++i) out.push_back(i);
        return out;
    }
    const std::int64_t wanted = std::min<std::int64_t>(numel, limit);
    Rng rng(seed);
    std::set<std::int64_t> seen;
    while (static_cast<std::int64_t>(out.size()) < wanted) {
        const auto i = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(numel)));
        if (seen.insert(i).second) out.push_back(i);
    }
    return out;
}

// Replacement draws allowed per requested sample before a tensor gives up.
constexpr int kDrawsPerSample = 4;

}  // namespace

std::string GradcheckReport::to_json() const {
    nlohmann::ordered_json j;
    j["pass"] = pass;
    j["checked"] = entries.size();
    j["max_rel_error"] = max_rel_error;
    j["mean_rel_error"] = mean_rel_error;
    std::size_t failures = 0;
    for (const GradcheckEntry& e : entries) failures += e.pass ? 0 : 1;
    j["failures"] = failures;
    j["kink_skipped"] = kink_skipped;
    return j.dump();
}

GradcheckReport gradcheck(std::vector<std::pair<std::string, Tensor>> params, const std::function<Tensor()>& loss_fn,
                          const GradcheckOptions& opt) {
    if (!(opt.h > 0.0) || opt.per_tensor < 1) throw ConfigError("gradcheck needs h > 0 and per_tensor >= 1");
    std::erase_if(params, [&](const auto& p) { return p.first.rfind(opt.prefix, 0) != 0; });
    if (params.empty()) throw ConfigError("gradcheck: no parameters match prefix '" + opt.prefix + "'");

    for (auto& [name, p] : params) {
        p.set_requires_grad(true);
        p.clear_grad();
    }
    std::uint64_t base_signature = 0;
    {
        KinkTrace trace;
        Tensor loss = loss_fn();
        base_signature = trace.signature();
        backward(loss);
    }

    GradcheckReport report;
    double sum_rel = 0.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& [name, p] = params[t];
        const std::vector<double> analytic = p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                                          : std::vector<double>(static_cast<std::size_t>(p.numel()), 0.0);
        int accepted = 0;
        for (std::int64_t i : candidate_indices(p.numel(), opt.per_tensor, kDrawsPerSample * opt.per_tensor,
                                                derive_seed(opt.seed, t))) {
            if (accepted == opt.per_tensor) break;
            auto data = p.mutable_data();
            const double saved = data[static_cast<std::size_t>(i)];
            double plus = 0.0;
            double minus = 0.0;
            bool crossed = false;
            {
                NoGradGuard no_grad;
                KinkTrace up;
                data[static_cast<std::size_t>(i)] = saved + opt.h;
                plus = loss_fn().item();
                crossed = up.signature() != base_signature;
            }
            {
                NoGradGuard no_grad;
                KinkTrace down;
                data[static_cast<std::size_t>(i)] = saved - opt.h;
                minus = loss_fn().item();
                crossed = crossed || down.signature() != base_signature;
            }
            data[static_cast<std::size_t>(i)] = saved;
            if (crossed && opt.skip_kink_crossings) {
                ++report.kink_skipped;
                continue;
            }
            ++accepted;
            GradcheckEntry e;
            e.name = name;
            e.index = i;
            e.analytic = analytic[static_cast<std::size_t>(i)];
            e.numeric = (plus - minus) / (2.0 * opt.h);
            const double scale = std::max(std::abs(e.analytic), std::abs(e.numeric));
            const double gap = std::abs(e.analytic - e.numeric);
            e.rel_error = (gap < opt.noise_floor || scale == 0.0) ? 0.0 : gap / scale;
            e.pass = e.rel_error < opt.tolerance;
            report.pass = report.pass && e.pass;
            report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
            sum_rel += e.rel_error;
            report.entries.push_back(std::move(e));
        }
    }
    if (report.entries.empty()) throw ConfigError("gradcheck: every sampled scalar crossed a kink");
    report.mean_rel_error = sum_rel / static_cast<double>(report.entries.size());
    return report;
}

GradcheckReport gradcheck_model(ModelParams& model, const Batch& batch, const LossWeights& w,
                                const GradcheckOptions& opt) {
    auto loss_fn = [&]() {
        ForwardOutput out = complete_depth(batch.rgb, batch.sparse, batch.valid_in, model, ForwardOptions{true, false});
        return joint_loss(out, batch, w).total;
    };
    GradcheckReport report = gradcheck(model.params.entries(), loss_fn, opt);
    model.params.clear_grad();
    return report;
}

}  // namespace ldc
