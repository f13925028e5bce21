#include "scbridge/bridge_continuous.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scbridge/errors.hpp"

namespace scbridge {

void BridgeConfig::validate() const {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw RangeError("bridge: horizon must be positive");
    }
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw RangeError("bridge: sigma must be non-negative");
    }
    if (steps < 1) {
        throw RangeError("bridge: steps must be at least 1");
    }
}

namespace {

void check_time(double t, const BridgeConfig& cfg) {
    if (!(t >= 0.0 && t <= cfg.horizon)) {
        throw RangeError("time " + std::to_string(t) + " outside [0, " + std::to_string(cfg.horizon) + "]");
    }
}

}  // namespace

Vector interpolate(const Vector& x0, const Vector& xT, double t, const BridgeConfig& cfg, Rng& rng) {
    cfg.validate();
    check_time(t, cfg);
    if (x0.size() != xT.size()) {
        throw DimensionError("interpolate: endpoints differ in length");
    }
    if (t == 0.0) {
        return x0;
    }
    if (t == cfg.horizon) {
        return xT;
    }
    const double s = t / cfg.horizon;
    Vector out = s * xT + (1.0 - s) * x0;
    const double stddev = cfg.sigma * std::sqrt(t * (1.0 - s));
    if (stddev > 0.0) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            out[i] += stddev * normal(rng);
        }
    }
    return out;
}

MaskedLoss masked_endpoint_loss(const Vector& pred_xT, const Vector& true_xT) {
    if (pred_xT.size() != true_xT.size()) {
        throw DimensionError("masked_endpoint_loss: prediction and target differ in length");
    }
    MaskedLoss out;
    out.grad = Vector::Zero(pred_xT.size());
    const auto mask = (true_xT.array() != 0.0).cast<double>();
    const double active = mask.sum();
    if (active == 0.0) {
        out.degenerate = true;
        return out;
    }
    const Eigen::ArrayXd residual = (true_xT - pred_xT).array() * mask;
    out.loss = residual.square().sum() / active;
    out.grad = (-2.0 / active) * residual.matrix();
    return out;
}

MaskedLoss unmasked_endpoint_loss(const Vector& pred_xT, const Vector& true_xT) {
    if (pred_xT.size() != true_xT.size()) {
        throw DimensionError("unmasked_endpoint_loss: prediction and target differ in length");
    }
    MaskedLoss out;
    const auto n = static_cast<double>(pred_xT.size());
    const Vector residual = true_xT - pred_xT;
    out.loss = residual.squaredNorm() / n;
    out.grad = (-2.0 / n) * residual;
    return out;
}

Vector drift_from_endpoint(const Vector& pred_xT, const Vector& x_t, double t, const BridgeConfig& cfg) {
    if (pred_xT.size() != x_t.size()) {
        throw DimensionError("drift_from_endpoint: prediction and state differ in length");
    }
    const double remaining = std::max(cfg.horizon - t, cfg.step_size());
    return (pred_xT - x_t) / remaining;
}

Matrix sample_endpoint(const Matrix& x0, const EndpointPredictor& predictor, const ConditionKey& condition,
                       const BridgeConfig& cfg, Rng& rng) {
    cfg.validate();
    if (!x0.allFinite()) {
        throw InputError("sample_endpoint: initial state is not finite");
    }
    const double h = cfg.step_size();
    const double noise_scale = cfg.sigma * std::sqrt(h);
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix x = x0;
    for (std::size_t k = 0; k < cfg.steps; ++k) {
        const double t = cfg.grid_time(k);
        Matrix pred = predictor(t, x, condition);
        if (pred.rows() != x.rows() || pred.cols() != x.cols()) {
            throw DimensionError("sample_endpoint: predictor returned the wrong shape");
        }
        if (!pred.allFinite()) {
            throw NumericalError("sample_endpoint: non-finite predictor output at step " + std::to_string(k) +
                                 " (t = " + std::to_string(t) + ")");
        }
        if (k + 1 == cfg.steps) {
            x = std::move(pred);
            break;
        }
        const double remaining = std::max(cfg.horizon - t, h);
        x += (h / remaining) * (pred - x);
        if (noise_scale > 0.0) {
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                x.data()[i] += noise_scale * normal(rng);
            }
        }
    }
    return x;
}

Vector sample_endpoint(const Vector& x0, const EndpointPredictor& predictor, const ConditionKey& condition,
                       const BridgeConfig& cfg, Rng& rng) {
    Matrix batch = x0.transpose();
    return sample_endpoint(batch, predictor, condition, cfg, rng).row(0).transpose();
}

}  // namespace scbridge
