#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scbridge/dataset.hpp"
#include "scbridge/metrics.hpp"
#include "scbridge/model.hpp"
#include "scbridge/optimizer.hpp"
#include "scbridge/ot.hpp"

namespace scbridge {

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    OptimizerConfig optimizer;
    BridgeConfig bridge;
    PairingOptions pairing;
    ArchitectureConfig arch;
    /// When false only the endpoint model is trained, on an unmasked loss.
    bool use_activation_model = true;
    /// Weight averaging for the returned model; 0 returns the last iterate.
    double ema_decay = 0.999;
    std::uint64_t seed = 0;

    void validate() const;
};

/**
 * @brief Training tuples for one minibatch.
 *
 * Row r holds a coupled pair (x0, xT), its sampled time, the continuous bridge state x_t, and the
 * discrete tuple (d0, dT, d_t) with d0 = discretize(x0), dT = discretize(xT).
 */
struct BridgeBatch {
    Matrix x0;
    Matrix xT;
    Matrix x_t;
    BinaryMatrix d0;
    BinaryMatrix dT;
    BinaryMatrix d_t;
    std::vector<double> times;
    std::vector<ConditionKey> conditions;

    std::size_t size() const { return times.size(); }
};

/// Builds a batch from dataset-row pairs; t is uniform on [0, T - h].
BridgeBatch build_batch(const ExpressionDataset& ds, std::span<const Pair> pairs, const BridgeConfig& cfg, Rng& rng);

struct BatchLoss {
    double l_cont = 0.0;
    double l_disc = 0.0;
    std::size_t degenerate = 0;

    double total() const { return l_cont + l_disc; }
};

/**
 * Evaluates both losses on `batch` (means over rows) and accumulates their gradients into the
 * networks. Does not step the optimizer.
 */
BatchLoss accumulate_gradients(BridgeModel& model, const BridgeBatch& batch);

struct EpochLog {
    std::size_t epoch = 0;
    double l_cont = 0.0;
    double l_disc = 0.0;
    double wallclock_s = 0.0;

    double total() const { return l_cont + l_disc; }
};

struct TrainResult {
    BridgeModel model;
    std::vector<EpochLog> log;
    std::size_t degenerate_targets = 0;  ///< perturbed cells with no expressed gene
    PairingStats pairing;
    std::vector<std::string> warnings;
};

using EpochCallback = std::function<void(const BridgeModel&, const EpochLog&)>;

/**
 * Joint training. Each epoch re-pairs the data, shuffles the pairs into minibatches and takes one
 * optimizer step per network per batch on `L = L_cont + L_disc`. With `ema_decay > 0` the callback and
 * the result see the moving average of the weights.
 *
 * Throws NumericalError with the epoch and batch index if a loss becomes non-finite.
 */
TrainResult train(const ExpressionDataset& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Creates untrained networks for `dataset`'s genes and vocabulary.
BridgeModel init_model(const ExpressionDataset& dataset, const TrainConfig& cfg, Rng& rng);

struct Generation {
    Matrix values;             ///< endpoint masked by activations
    Matrix endpoints;          ///< continuous sampler output
    BinaryMatrix activations;  ///< discrete sampler output (all ones without an activation model)
};

/// Runs both samplers from each control row and recombines them elementwise.
Generation generate(const BridgeModel& model, const Matrix& controls, const ConditionKey& condition, Rng& rng);

struct ConditionReport {
    ConditionKey condition;
    MetricsReport metrics;
    double control_e_distance = 0.0;  ///< sampled controls vs truth, the do-nothing baseline
};

struct EvaluationReport {
    std::vector<ConditionReport> conditions;
    MetricsReport mean;
    MetricsReport stddev;
};

/// Picks `count` control rows of `cell_type` from `ds` (without replacement when possible).
std::vector<std::size_t> sample_control_rows(const ExpressionDataset& ds, std::uint32_t cell_type, std::size_t count,
                                             Rng& rng);

/**
 * For each perturbed condition in `test`: generate as many cells as it has from controls of the same
 * cell type in `train`, and score them against the true cells.
 *
 * When `self_test` is set the true cells are scored against themselves, which must give zero distances.
 */
EvaluationReport evaluate(const BridgeModel& model, const ExpressionDataset& test, const ExpressionDataset& train,
                          std::uint64_t seed, bool self_test = false);

/// Mean and population standard deviation of every field across conditions.
void aggregate(EvaluationReport& report);

}  // namespace scbridge
