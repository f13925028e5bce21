#pragma once

#include <cstddef>
#include <functional>

#include "scbridge/conditioning.hpp"
#include "scbridge/types.hpp"

namespace scbridge {

/// Time horizon, noise scale and step count shared by the continuous and discrete bridges.
struct BridgeConfig {
    double horizon = 1.0;
    double sigma = 0.2;
    std::size_t steps = 50;

    double step_size() const { return horizon / static_cast<double>(steps); }
    /// Start time of step k on the uniform grid.
    double grid_time(std::size_t k) const { return horizon * static_cast<double>(k) / static_cast<double>(steps); }

    void validate() const;
};

/**
 * Samples the Brownian bridge pinned at `x0` (t = 0) and `xT` (t = T):
 * `x_t = (t/T) xT + (1 - t/T) x0 + sigma * z`, `z ~ N(0, t (1 - t/T) I)`.
 *
 * At t = 0 and t = T the endpoint is returned unchanged. Throws RangeError for t outside [0, T].
 */
Vector interpolate(const Vector& x0, const Vector& xT, double t, const BridgeConfig& cfg, Rng& rng);

struct MaskedLoss {
    double loss = 0.0;
    Vector grad;              ///< d loss / d pred
    bool degenerate = false;  ///< target had no expressed gene; loss and gradient are zero
};

/**
 * Squared error restricted to genes expressed in the target, averaged over those genes:
 * `sum_i d_i (xT_i - pred_i)^2 / sum_i d_i` with `d_i = [xT_i != 0]`.
 */
MaskedLoss masked_endpoint_loss(const Vector& pred_xT, const Vector& true_xT);

/// Squared error averaged over all genes; the objective used when no activation model is trained.
MaskedLoss unmasked_endpoint_loss(const Vector& pred_xT, const Vector& true_xT);

/// `(pred_xT - x_t) / max(T - t, h)` with h the grid step.
Vector drift_from_endpoint(const Vector& pred_xT, const Vector& x_t, double t, const BridgeConfig& cfg);

/// Maps (t, batch of states, condition) to a batch of predicted endpoints.
using EndpointPredictor = std::function<Matrix(double, const Matrix&, const ConditionKey&)>;

/**
 * Euler-Maruyama integration of `dx = (pred - x)/(T - t) dt + sigma dB` from each row of `x0`.
 *
 * Every step but the last adds `sigma * sqrt(h) * z`. On the last step `h / (T - t) = 1`, so the state
 * is set to the predictor's output without noise. Throws NumericalError naming the step if the
 * predictor returns non-finite values.
 */
Matrix sample_endpoint(const Matrix& x0, const EndpointPredictor& predictor, const ConditionKey& condition,
                       const BridgeConfig& cfg, Rng& rng);

Vector sample_endpoint(const Vector& x0, const EndpointPredictor& predictor, const ConditionKey& condition,
                       const BridgeConfig& cfg, Rng& rng);

}  // namespace scbridge
