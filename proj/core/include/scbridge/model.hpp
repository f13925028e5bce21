#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scbridge/bridge_continuous.hpp"
#include "scbridge/bridge_discrete.hpp"
#include "scbridge/conditioning.hpp"
#include "scbridge/nn.hpp"

namespace scbridge {

inline constexpr std::size_t kTimeFeatures = 16;

/// Sines and cosines of t/T at 8 frequencies spaced geometrically from 1 to 1000.
RowVector time_features(double t, double horizon);

struct ArchitectureConfig {
    std::size_t hidden_width = 256;
    std::size_t hidden_layers = 3;
    /// Endpoint model outputs `x_t + MLP(...)` instead of `MLP(...)`.
    bool residual_endpoint = true;
    /// Activation logits are `MLP(...) + activation_skip * (2 d_t - 1)`; 0 gives the plain MLP.
    double activation_skip = 3.0;
};

/**
 * @brief One conditional predictor: MLP over `concat(state, time features, condition embedding)`.
 *
 * The endpoint model reads x_t and regresses x_T; the activation model reads d_t (as 0/1 reals)
 * and emits one logit per gene for P(d_T,i = 1).
 */
struct BridgeNetwork {
    ParameterSet params;
    ConditionTables tables;

    static BridgeNetwork create(std::size_t n_genes, const Vocabulary& vocab, const ArchitectureConfig& arch,
                                Rng& rng);

    std::size_t gene_count() const { return params.output_width(); }

    /// Row r of the result is the network input for `states.row(r)` at `times[r]` under `conditions[r]`.
    Matrix assemble_input(const Matrix& states, std::span<const double> times,
                          std::span<const ConditionKey> conditions) const;

    Matrix forward(const Matrix& states, std::span<const double> times, std::span<const ConditionKey> conditions,
                   ActivationCache* cache = nullptr) const;

    /// Backpropagates `output_grad` through the MLP and into the embedding rows used by `conditions`.
    void backward(const ActivationCache& cache, const Matrix& output_grad, std::span<const ConditionKey> conditions);
};

/// Labels recorded with a checkpoint describing how it was trained.
struct TrainingVariant {
    std::string pairing = "ot";  ///< "ot" or "random"
    std::string metric = "squared_euclidean";
};

/**
 * @brief A trained pair of bridge predictors with everything needed to generate.
 *
 * `activation` is empty for models trained without the discrete bridge; generation then returns the
 * continuous endpoint unmasked.
 */
struct BridgeModel {
    std::vector<std::string> genes;
    Vocabulary vocab;
    BridgeConfig bridge;
    ArchitectureConfig arch;
    TrainingVariant variant;
    BridgeNetwork endpoint;
    std::optional<BridgeNetwork> activation;

    std::size_t gene_count() const { return genes.size(); }

    Matrix predict_endpoint(double t, const Matrix& x_t, const ConditionKey& condition) const;
    /// Probabilities in [0, 1].
    Matrix predict_activation(double t, const BinaryMatrix& d_t, const ConditionKey& condition) const;

    /// Network outputs plus the skip terms selected by `arch`.
    Matrix endpoint_output(const Matrix& network_output, const Matrix& x_t) const;
    Matrix activation_logits(const Matrix& network_output, const BinaryMatrix& d_t) const;

    EndpointPredictor endpoint_predictor() const;
    ActivationPredictor activation_predictor() const;

    /// Writes `model.json`, `vocab.txt`, `endpoint.bin` and (if present) `activation.bin` into `dir`.
    void save(const std::filesystem::path& dir) const;
    static BridgeModel load(const std::filesystem::path& dir);

    /// Short tag for report file names: full, random_pairing, no_discrete, ...
    std::string variant_tag() const;
};

}  // namespace scbridge
