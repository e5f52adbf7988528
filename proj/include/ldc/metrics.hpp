#pragma once

// Depth completion / estimation metrics and discrete entropy. Depths are in
// meters; inverse metrics are reported per kilometer.

#include <map>
#include <string>

#include "ldc/tensor.hpp"

namespace ldc {

struct MetricValue {
    double value = 0.0;
    std::string unit;
};

struct MetricReport {
    std::map<std::string, MetricValue> values;

    double operator[](const std::string& name) const;
    bool contains(const std::string& name) const { return values.count(name) != 0; }
    void set(const std::string& name, double value, const std::string& unit) { values[name] = {value, unit}; }
    void merge(const MetricReport& other);
    /// {"name": {"value": v, "unit": "m"}, ...}
    std::string to_json() const;
};

/// RMSE, MAE (m) and iRMSE, iMAE (1/km) over pixels with valid != 0.
MetricReport completion_metrics(const Tensor& pred, const Tensor& gt, const Tensor& valid);

/// Abs Rel, Sq Rel, RMSE, RMSE log and delta_1..3 (strict max(o/D, D/o) < 1.25^i).
MetricReport estimation_metrics(const Tensor& pred, const Tensor& gt, const Tensor& valid);

/// Shannon entropy in bits of the 256-level histogram pooled over all channels.
/// Values are quantized as floor(v * 255 + 0.5) after clamping to [0, 1].
double discrete_entropy(const Tensor& img);

}  // namespace ldc
