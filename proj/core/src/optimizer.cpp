#include "scbridge/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "scbridge/errors.hpp"

namespace scbridge {

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw RangeError("optimizer: learning_rate must be positive");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
        throw RangeError("optimizer: beta1 and beta2 must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) {
        throw RangeError("optimizer: epsilon must be positive");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw RangeError("optimizer: weight_decay must be non-negative");
    }
}

void optimizer_step(ParameterSet& params, const OptimizerConfig& cfg) {
    cfg.validate();
    const auto step = static_cast<double>(params.step_count + 1);
    const double correction1 = 1.0 - std::pow(cfg.beta1, step);
    const double correction2 = 1.0 - std::pow(cfg.beta2, step);
    const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;

    params.for_each([&](Param& p) {
        if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
            throw DimensionError("optimizer_step: gradient shape does not match parameter");
        }
        auto value = p.value.array();
        auto grad = p.grad.array();
        auto m = p.first_moment.array();
        auto v = p.second_moment.array();

        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.square();
        value *= decay;
        value -= cfg.learning_rate * (m / correction1) / ((v / correction2).sqrt() + cfg.epsilon);
        p.grad.setZero();
    });
    ++params.step_count;
}

void ema_update(ParameterSet& average, const ParameterSet& current, double decay) {
    std::vector<const Param*> source;
    current.for_each([&](const Param& p) { source.push_back(&p); });
    const auto k = static_cast<double>(current.step_count);
    const double d = std::min(decay, (1.0 + k) / (10.0 + k));
    std::size_t index = 0;
    average.for_each([&](Param& p) {
        if (index >= source.size() || source[index]->value.rows() != p.value.rows() ||
            source[index]->value.cols() != p.value.cols()) {
            throw DimensionError("ema_update: parameter layouts differ");
        }
        p.value = d * p.value + (1.0 - d) * source[index]->value;
        ++index;
    });
    if (index != source.size()) {
        throw DimensionError("ema_update: parameter layouts differ");
    }
    average.step_count = current.step_count;
}

}  // namespace scbridge
