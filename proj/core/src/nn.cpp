#include "scbridge/nn.hpp"

#include <cmath>
#include <string>

#include "scbridge/errors.hpp"

namespace scbridge {

Param::Param(Matrix init)
    : value(std::move(init)),
      grad(Matrix::Zero(value.rows(), value.cols())),
      first_moment(Matrix::Zero(value.rows(), value.cols())),
      second_moment(Matrix::Zero(value.rows(), value.cols())) {}

std::size_t ParameterSet::input_width() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.rows());
}

std::size_t ParameterSet::output_width() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.cols());
}

std::size_t ParameterSet::parameter_count() const {
    std::size_t total = 0;
    for_each([&](const Param& p) { total += static_cast<std::size_t>(p.value.size()); });
    return total;
}

void ParameterSet::zero_grad() {
    for_each([](Param& p) { p.grad.setZero(); });
}

ParameterSet init_mlp(const MlpShape& shape, Rng& rng) {
    if (shape.input_width == 0 || shape.output_width == 0) {
        throw DimensionError("init_mlp: input and output widths must be positive");
    }
    std::vector<std::size_t> widths;
    widths.push_back(shape.input_width);
    widths.insert(widths.end(), shape.hidden_widths.begin(), shape.hidden_widths.end());
    widths.push_back(shape.output_width);

    ParameterSet params;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        const auto fan_in = widths[k];
        const auto fan_out = widths[k + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        Matrix w(fan_in, fan_out);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w.data()[i] = dist(rng);
        }
        params.layers.push_back(DenseLayer{Param(std::move(w)), Param(Matrix::Zero(1, fan_out))});
    }
    return params;
}

Param init_embedding(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
    std::normal_distribution<double> dist(0.0, scale);
    Matrix table(rows, cols);
    for (Eigen::Index i = 0; i < table.size(); ++i) {
        table.data()[i] = dist(rng);
    }
    return Param(std::move(table));
}

void ActivationCache::clear() {
    layer_inputs.clear();
    pre_activations.clear();
}

double silu(double x) {
    return x / (1.0 + std::exp(-x));
}

double silu_derivative(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

Matrix forward(const ParameterSet& params, const Matrix& input, ActivationCache* cache) {
    if (params.layers.empty()) {
        throw StateError("forward: parameter set has no layers");
    }
    if (static_cast<std::size_t>(input.cols()) != params.input_width()) {
        throw DimensionError("forward: input has " + std::to_string(input.cols()) + " columns, network expects " +
                             std::to_string(params.input_width()));
    }
    if (cache) {
        cache->clear();
    }

    Matrix current = input;
    const std::size_t n_layers = params.layers.size();
    for (std::size_t k = 0; k < n_layers; ++k) {
        const auto& layer = params.layers[k];
        Matrix affine = current * layer.weight.value;
        affine.rowwise() += layer.bias.value.row(0);
        if (cache) {
            cache->layer_inputs.push_back(std::move(current));
        }
        if (k + 1 == n_layers) {
            current = std::move(affine);
        } else {
            current = affine.unaryExpr([](double v) { return silu(v); });
            if (cache) {
                cache->pre_activations.push_back(std::move(affine));
            }
        }
    }
    return current;
}

Matrix backward(ParameterSet& params, const ActivationCache& cache, const Matrix& output_grad) {
    if (cache.empty()) {
        throw StateError("backward: no recorded forward pass");
    }
    const std::size_t n_layers = params.layers.size();
    if (cache.layer_inputs.size() != n_layers || cache.pre_activations.size() + 1 != n_layers) {
        throw StateError("backward: cache was recorded for a different network");
    }
    if (static_cast<std::size_t>(output_grad.cols()) != params.output_width() ||
        output_grad.rows() != cache.layer_inputs.front().rows()) {
        throw DimensionError("backward: upstream gradient shape does not match the recorded output");
    }

    Matrix delta = output_grad;
    for (std::size_t k = n_layers; k-- > 0;) {
        auto& layer = params.layers[k];
        const Matrix& in = cache.layer_inputs[k];
        layer.weight.grad.noalias() += in.transpose() * delta;
        layer.bias.grad.row(0) += delta.colwise().sum();
        Matrix upstream = delta * layer.weight.value.transpose();
        if (k > 0) {
            const Matrix& pre = cache.pre_activations[k - 1];
            upstream.array() *= pre.unaryExpr([](double v) { return silu_derivative(v); }).array();
        }
        delta = std::move(upstream);
    }
    return delta;
}

}  // namespace scbridge
