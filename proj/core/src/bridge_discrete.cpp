#include "scbridge/bridge_discrete.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scbridge/errors.hpp"

namespace scbridge {

ActivationVector discretize(const Vector& x) {
    return (x.array() != 0.0).cast<std::uint8_t>().matrix();
}

BinaryMatrix discretize(const Matrix& x) {
    return (x.array() != 0.0).cast<std::uint8_t>().matrix();
}

double kappa(double t, const BridgeConfig& cfg) {
    return t / cfg.horizon;
}

ActivationVector discrete_interpolate(const ActivationVector& d0, const ActivationVector& dT, double t,
                                      const BridgeConfig& cfg, Rng& rng) {
    cfg.validate();
    if (!(t >= 0.0 && t <= cfg.horizon)) {
        throw RangeError("discrete_interpolate: time " + std::to_string(t) + " outside [0, T]");
    }
    if (d0.size() != dT.size()) {
        throw DimensionError("discrete_interpolate: endpoints differ in length");
    }
    if (t == 0.0) {
        return d0;
    }
    if (t == cfg.horizon) {
        return dT;
    }
    const double k = kappa(t, cfg);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    ActivationVector out(d0.size());
    for (Eigen::Index i = 0; i < d0.size(); ++i) {
        out[i] = uniform(rng) < k ? dT[i] : d0[i];
    }
    return out;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

PosteriorLoss posterior_loss(const Vector& logits, const ActivationVector& dT) {
    if (logits.size() != dT.size()) {
        throw DimensionError("posterior_loss: logits and targets differ in length");
    }
    if (!logits.allFinite()) {
        throw InputError("posterior_loss: non-finite logits");
    }
    PosteriorLoss out;
    out.grad.resize(logits.size());
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        const double z = logits[i];
        const double y = dT[i];
        // -y log s(z) - (1-y) log(1-s(z)) = max(z,0) - z y + log(1 + exp(-|z|))
        out.loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        out.grad[i] = sigmoid(z) - y;
    }
    return out;
}

namespace {

bool ends_at_horizon(double t, double h, const BridgeConfig& cfg) {
    return t + h >= cfg.horizon * (1.0 - 1e-12);
}

}  // namespace

double flip_probability(std::uint8_t state, double q, double t, double h, const BridgeConfig& cfg) {
    const double ratio = ends_at_horizon(t, h, cfg) ? 1.0 : h / (cfg.horizon - t);
    const double target_mass = state == 0 ? q : 1.0 - q;
    return std::clamp(ratio * target_mass, 0.0, 1.0);
}

BinaryMatrix ctmc_step(const BinaryMatrix& d_t, const Matrix& q, double t, double h, const BridgeConfig& cfg,
                       Rng& rng) {
    if (d_t.rows() != q.rows() || d_t.cols() != q.cols()) {
        throw DimensionError("ctmc_step: state and probability shapes differ");
    }
    if (!(h > 0.0) || !(t >= 0.0) || t + h > cfg.horizon * (1.0 + 1e-12)) {
        throw RangeError("ctmc_step: step [" + std::to_string(t) + ", " + std::to_string(t + h) +
                         "] leaves [0, T]");
    }
    if (!q.allFinite() || (q.array() < 0.0).any() || (q.array() > 1.0).any()) {
        throw InputError("ctmc_step: probabilities must lie in [0, 1]");
    }
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    BinaryMatrix next = d_t;
    for (Eigen::Index i = 0; i < d_t.size(); ++i) {
        const std::uint8_t state = d_t.data()[i];
        const double p = flip_probability(state, q.data()[i], t, h, cfg);
        if (uniform(rng) < p) {
            next.data()[i] = static_cast<std::uint8_t>(1 - state);
        }
    }
    return next;
}

ActivationVector ctmc_step(const ActivationVector& d_t, const Vector& q, double t, double h,
                           const BridgeConfig& cfg, Rng& rng) {
    BinaryMatrix batch = d_t.transpose();
    Matrix probs = q.transpose();
    return ctmc_step(batch, probs, t, h, cfg, rng).row(0).transpose();
}

BinaryMatrix sample_activation(const BinaryMatrix& d0, const ActivationPredictor& predictor,
                               const ConditionKey& condition, const BridgeConfig& cfg, Rng& rng) {
    cfg.validate();
    if ((d0.array() > 1).any()) {
        throw InputError("sample_activation: initial state is not binary");
    }
    const double h = cfg.step_size();
    BinaryMatrix d = d0;
    for (std::size_t k = 0; k < cfg.steps; ++k) {
        const double t = cfg.grid_time(k);
        const Matrix q = predictor(t, d, condition);
        if (!q.allFinite()) {
            throw NumericalError("sample_activation: non-finite predictor output at step " + std::to_string(k));
        }
        d = ctmc_step(d, q, t, h, cfg, rng);
    }
    return d;
}

ActivationVector sample_activation(const ActivationVector& d0, const ActivationPredictor& predictor,
                                   const ConditionKey& condition, const BridgeConfig& cfg, Rng& rng) {
    BinaryMatrix batch = d0.transpose();
    return sample_activation(batch, predictor, condition, cfg, rng).row(0).transpose();
}

}  // namespace scbridge
