#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "pamt/numerics/param.hpp"

namespace pamt {

struct AdamConfig {
    double lr = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One Adam update at step t >= 1. Weight decay enters as an L2 term:
/// g' = g + decay * theta before the moment updates.
void adam_update(std::span<double> value, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::size_t t, const AdamConfig& config);

/// Adam over a registry. Parameters are selected per step by `include`;
/// frozen parameters are never touched.
class Adam {
public:
    using Filter = std::function<bool(const Parameter&)>;

    explicit Adam(AdamConfig config) : config_(config) {}

    void step(ParamRegistry& registry, const Filter& include = {});
    std::size_t steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return config_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamConfig config_;
    std::size_t t_ = 0;
    std::vector<Moments> state_;  // indexed like the registry
};

/// lr0 * (1 + cos(pi * epoch / total_epochs)) / 2, for 0 <= epoch <= total.
double cosine_lr(double lr0, std::size_t epoch, std::size_t total_epochs);

/// theta <- theta - lr * grad; entries where `mask` is zero are left at zero.
void sgd_update(Parameter& param, double lr, const Tensor* mask = nullptr);

}  // namespace pamt
