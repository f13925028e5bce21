#pragma once

#include "scbridge/nn.hpp"

namespace scbridge {

/// Adaptive-moment optimizer with decoupled weight decay.
struct OptimizerConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-2;

    /// Throws RangeError unless learning_rate > 0, 0 < beta1, beta2 < 1, epsilon > 0, weight_decay >= 0.
    void validate() const;
};

/**
 * Applies one update to every parameter, then zeroes the gradients and increments `step_count`.
 *
 * Per element: `p -= lr * wd * p`, then `p -= lr * m_hat / (sqrt(v_hat) + eps)` with bias-corrected moments.
 * The decay acts on the parameter directly and never enters the moment estimates.
 */
void optimizer_step(ParameterSet& params, const OptimizerConfig& cfg);

/**
 * Exponential moving average of parameter values: `avg = d * avg + (1 - d) * current` with
 * `d = min(decay, (1 + k) / (10 + k))`, k = `current.step_count`. Only values are touched.
 *
 * Throws DimensionError if the two sets differ in layout.
 */
void ema_update(ParameterSet& average, const ParameterSet& current, double decay);

}  // namespace scbridge
