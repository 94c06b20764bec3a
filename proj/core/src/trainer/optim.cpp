#include "pamt/trainer/optim.hpp"

#include <cmath>
#include <numbers>

#include "pamt/numerics/errors.hpp"

namespace pamt {

void adam_update(std::span<double> value, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::size_t t, const AdamConfig& config) {
    if (t == 0) throw InvalidArgument("adam: step index starts at 1");
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i] + config.weight_decay * value[i];
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        value[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
}

void Adam::step(ParamRegistry& registry, const Filter& include) {
    ++t_;
    if (state_.size() < registry.size()) state_.resize(registry.size());
    std::size_t idx = 0;
    for (auto& p : registry) {
        Moments& s = state_[idx++];
        if (!p.trainable || (include && !include(p))) continue;
        if (s.m.empty()) {
            s.m.assign(p.value.size(), 0.0);
            s.v.assign(p.value.size(), 0.0);
        }
        adam_update(p.value.data(), p.grad.data(), s.m, s.v, t_, config_);
    }
}

double cosine_lr(double lr0, std::size_t epoch, std::size_t total_epochs) {
    if (total_epochs == 0 || epoch > total_epochs) throw InvalidArgument("cosine_lr: epoch outside [0, total]");
    const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return lr0 * 0.5 * (1.0 + std::cos(phase));
}

void sgd_update(Parameter& param, double lr, const Tensor* mask) {
    if (!param.trainable) return;
    if (mask && mask->shape() != param.value.shape()) throw ShapeError("sgd_update", param.value.shape(), mask->shape());
    for (std::size_t i = 0; i < param.value.size(); ++i) {
        if (mask && (*mask)[i] == 0.0) {
            param.value[i] = 0.0;
            continue;
        }
        param.value[i] -= lr * param.grad[i];
    }
}

}  // namespace pamt
