#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scbridge/types.hpp"

/**
 * @file nn.hpp
 *
 * @brief Dense multilayer regressor with analytic gradients.
 *
 * The network is a stack of affine layers with SiLU between them and a linear output layer.
 * Weights are stored input-major (`in x out`) so that a batch `X` (rows = samples) maps to `X * W + b`.
 * Every trainable tensor carries its own gradient and optimizer moment buffers of identical shape,
 * so `forward()`/`backward()`/`optimizer_step()` never reshape anything.
 */

namespace scbridge {

/// One trainable tensor together with its gradient and adaptive-moment accumulators.
struct Param {
    Matrix value;
    Matrix grad;
    Matrix first_moment;
    Matrix second_moment;

    Param() = default;
    explicit Param(Matrix init);

    Eigen::Index rows() const { return value.rows(); }
    Eigen::Index cols() const { return value.cols(); }
};

struct DenseLayer {
    Param weight;  ///< in x out
    Param bias;    ///< 1 x out
};

/**
 * @brief All trainable state of one predictor.
 *
 * `layers` hold the regressor; `embeddings` hold auxiliary lookup tables whose gradients are
 * scattered in by the caller (see conditioning.hpp). `step_count` counts optimizer updates.
 */
struct ParameterSet {
    std::vector<DenseLayer> layers;
    std::vector<Param> embeddings;
    std::uint64_t step_count = 0;

    std::size_t input_width() const;
    std::size_t output_width() const;
    std::size_t parameter_count() const;

    void zero_grad();

    /// Visits every Param in declaration order: layer weights and biases, then embeddings.
    template <class Fn>
    void for_each(Fn&& fn) {
        for (auto& layer : layers) {
            fn(layer.weight);
            fn(layer.bias);
        }
        for (auto& table : embeddings) {
            fn(table);
        }
    }

    template <class Fn>
    void for_each(Fn&& fn) const {
        for (const auto& layer : layers) {
            fn(layer.weight);
            fn(layer.bias);
        }
        for (const auto& table : embeddings) {
            fn(table);
        }
    }
};

struct MlpShape {
    std::size_t input_width = 0;
    std::vector<std::size_t> hidden_widths;
    std::size_t output_width = 0;
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
ParameterSet init_mlp(const MlpShape& shape, Rng& rng);

/// Gaussian table with the given standard deviation.
Param init_embedding(std::size_t rows, std::size_t cols, double scale, Rng& rng);

/**
 * @brief Intermediate values recorded by `forward()` for an exact backward pass.
 *
 * `layer_inputs[k]` is the input to layer k, `pre_activations[k]` the affine output of hidden layer k.
 */
struct ActivationCache {
    std::vector<Matrix> layer_inputs;
    std::vector<Matrix> pre_activations;

    bool empty() const { return layer_inputs.empty(); }
    void clear();
};

/**
 * Evaluates the regressor on a batch. When `cache` is non-null the activations needed by
 * `backward()` are stored in it.
 *
 * Throws DimensionError if `input.cols()` differs from the first layer's input width.
 */
Matrix forward(const ParameterSet& params, const Matrix& input, ActivationCache* cache = nullptr);

/**
 * Accumulates dL/dtheta into `params` given dL/d(output) for the computation recorded in `cache`.
 * Returns dL/d(input), which callers use to backpropagate into embedding tables.
 *
 * Throws StateError if the cache is empty, DimensionError on shape mismatch.
 */
Matrix backward(ParameterSet& params, const ActivationCache& cache, const Matrix& output_grad);

double silu(double x);
double silu_derivative(double x);

}  // namespace scbridge
