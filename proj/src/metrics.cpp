#include "ldc/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <json.hpp>

namespace ldc {

double MetricReport::operator[](const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw DomainError("metric " + name + " not in report");
    return it->second.value;
}

void MetricReport::merge(const MetricReport& other) {
    for (const auto& [k, v] : other.values) values[k] = v;
}

std::string MetricReport::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values) j[k] = {{"value", v.value}, {"unit", v.unit}};
    return j.dump();
}

namespace {

// Validates inputs and returns the indices of valid pixels.
std::vector<std::size_t> valid_indices(const Tensor& pred, const Tensor& gt, const Tensor& valid) {
    require_same_shape(pred, gt, "metrics");
    require_same_shape(pred, valid, "metrics mask");
    std::vector<std::size_t> idx;
    const auto pv = pred.data();
    const auto gv = gt.data();
    const auto mv = valid.data();
    for (std::size_t i = 0; i < mv.size(); ++i) {
        if (mv[i] == 0.0) continue;
        if (!(pv[i] > 0.0) || !(gv[i] > 0.0)) throw DomainError("non-positive depth on a valid pixel");
        idx.push_back(i);
    }
    if (idx.empty()) throw NoValidPixels("no valid pixels to evaluate");
    return idx;
}

}  // namespace

MetricReport completion_metrics(const Tensor& pred, const Tensor& gt, const Tensor& valid) {
    const auto idx = valid_indices(pred, gt, valid);
    const auto pv = pred.data();
    const auto gv = gt.data();
    double sq = 0.0, ab = 0.0, isq = 0.0, iab = 0.0;
    for (std::size_t i : idx) {
        const double e = pv[i] - gv[i];
        const double ie = 1000.0 / pv[i] - 1000.0 / gv[i];
        sq += e * e;
        ab += std::abs(e);
        isq += ie * ie;
        iab += std::abs(ie);
    }
    const double n = static_cast<double>(idx.size());
    MetricReport r;
    r.set("rmse", std::sqrt(sq / n), "m");
    r.set("mae", ab / n, "m");
    r.set("irmse", std::sqrt(isq / n), "1/km");
    r.set("imae", iab / n, "1/km");
    return r;
}

MetricReport estimation_metrics(const Tensor& pred, const Tensor& gt, const Tensor& valid) {
    const auto idx = valid_indices(pred, gt, valid);
    const auto pv = pred.data();
    const auto gv = gt.data();
    double abs_rel = 0.0, sq_rel = 0.0, sq = 0.0, sq_log = 0.0;
    std::array<double, 3> hits{};
    for (std::size_t i : idx) {
        const double o = pv[i];
        const double d = gv[i];
        const double e = o - d;
        abs_rel += std::abs(e) / d;
        sq_rel += e * e / d;
        sq += e * e;
        const double le = std::log(o) - std::log(d);
        sq_log += le * le;
        const double ratio = std::max(o / d, d / o);
        double thresh = 1.25;
        for (double& h : hits) {
            if (ratio < thresh) h += 1.0;
            thresh *= 1.25;
        }
    }
    const double n = static_cast<double>(idx.size());
    MetricReport r;
    r.set("abs_rel", abs_rel / n, "");
    r.set("sq_rel", sq_rel / n, "m");
    r.set("rmse", std::sqrt(sq / n), "m");
    r.set("rmse_log", std::sqrt(sq_log / n), "");
    r.set("delta1", hits[0] / n, "fraction");
    r.set("delta2", hits[1] / n, "fraction");
    r.set("delta3", hits[2] / n, "fraction");
    return r;
}

double discrete_entropy(const Tensor& img) {
    if (img.numel() == 0) throw DomainError("entropy of an empty image");
    std::array<double, 256> hist{};
    for (double v : img.data()) {
        const double q = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
        hist[static_cast<std::size_t>(q)] += 1.0;
    }
    const double n = static_cast<double>(img.numel());
    double h = 0.0;
    for (double c : hist) {
        if (c == 0.0) continue;
        const double p = c / n;
        h -= p * std::log2(p);
    }
    return h == 0.0 ? 0.0 : h;
}

}  // namespace ldc
