#pragma once

#include <functional>

#include "scbridge/bridge_continuous.hpp"

namespace scbridge {

/// `bit_i = [x_i != 0]`; sign-agnostic.
ActivationVector discretize(const Vector& x);
BinaryMatrix discretize(const Matrix& x);

/// Mixing probability `t / T`.
double kappa(double t, const BridgeConfig& cfg);

/// Per gene, independently: take `dT_i` with probability kappa(t), else `d0_i`. Endpoints are returned exactly.
ActivationVector discrete_interpolate(const ActivationVector& d0, const ActivationVector& dT, double t,
                                      const BridgeConfig& cfg, Rng& rng);

struct PosteriorLoss {
    double loss = 0.0;
    Vector grad;  ///< d loss / d logits = sigmoid(logits) - dT
};

/// Binary cross-entropy of sigmoid(logits) against dT, summed over genes, evaluated in log-sum-exp form.
PosteriorLoss posterior_loss(const Vector& logits, const ActivationVector& dT);

double sigmoid(double x);

/**
 * One Euler step of the factorized two-state chain.
 *
 * `q_i` is the predicted probability that gene i is active at T. An inactive gene switches on with
 * probability `clamp(h q_i / (T - t))`, an active one switches off with `clamp(h (1 - q_i) / (T - t))`.
 * A step that ends at the horizon uses ratio exactly 1, so the state becomes Bernoulli(q).
 *
 * Throws InputError if any q lies outside [0, 1], RangeError if t + h exceeds T.
 */
BinaryMatrix ctmc_step(const BinaryMatrix& d_t, const Matrix& q, double t, double h, const BridgeConfig& cfg,
                       Rng& rng);
ActivationVector ctmc_step(const ActivationVector& d_t, const Vector& q, double t, double h,
                           const BridgeConfig& cfg, Rng& rng);

/// Flip probability used by ctmc_step for one gene.
double flip_probability(std::uint8_t state, double q, double t, double h, const BridgeConfig& cfg);

/// Maps (t, batch of states, condition) to a batch of activation probabilities in [0, 1].
using ActivationPredictor = std::function<Matrix(double, const BinaryMatrix&, const ConditionKey&)>;

/// Iterates ctmc_step over the uniform grid of `cfg` starting from each row of `d0`.
BinaryMatrix sample_activation(const BinaryMatrix& d0, const ActivationPredictor& predictor,
                               const ConditionKey& condition, const BridgeConfig& cfg, Rng& rng);

ActivationVector sample_activation(const ActivationVector& d0, const ActivationPredictor& predictor,
                                   const ConditionKey& condition, const BridgeConfig& cfg, Rng& rng);

}  // namespace scbridge
