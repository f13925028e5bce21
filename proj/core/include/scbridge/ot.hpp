#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "scbridge/dataset.hpp"

/**
 * @file ot.hpp
 *
 * @brief Source/target couplings from minibatch entropic optimal transport.
 *
 * For each perturbed condition an equal-size batch of controls of the same cell type is drawn, a cost
 * matrix is built, Sinkhorn produces an entropic plan with uniform marginals, and one control is
 * sampled per perturbed cell from the plan's column.
 */

namespace scbridge {

enum class CostMetric { squared_euclidean, euclidean, cosine_distance };

enum class EpsilonMode {
    absolute,             ///< `epsilon` is used as given
    relative_to_mean_cost ///< regularization is `epsilon * mean(cost)`
};

struct SinkhornConfig {
    double epsilon = 0.05;
    EpsilonMode epsilon_mode = EpsilonMode::relative_to_mean_cost;
    std::size_t max_iters = 1000;
    double tolerance = 1e-6;  ///< on the max absolute marginal residual
    CostMetric metric = CostMetric::squared_euclidean;

    void validate() const;
};

/// `C[i][j]` = distance between source row i and target row j. Cosine distance is `1 - cos`, clamped at 0.
Matrix cost_matrix(const Matrix& source, const Matrix& target, CostMetric metric);

struct SinkhornResult {
    Matrix plan;
    double residual = 0.0;    ///< max |row or column sum - 1/B|
    std::size_t iterations = 0;
    bool converged = false;   ///< false means max_iters was hit; the plan is still usable
    double epsilon = 0.0;     ///< effective regularization
};

/**
 * Log-domain Sinkhorn with uniform marginals `1/B` on a square cost.
 *
 * Throws InputError on non-finite costs, DimensionError on non-square input. Non-convergence is
 * reported through `converged`/`residual` rather than an exception.
 */
SinkhornResult sinkhorn(const Matrix& cost, const SinkhornConfig& cfg);

/// `sum_ij plan_ij * cost_ij`.
double transport_cost(const Matrix& plan, const Matrix& cost);

struct CouplingPlan {
    Matrix plan;
    std::vector<std::size_t> source_ids;
    std::vector<std::size_t> target_ids;
    ConditionKey condition;
};

struct Pair {
    std::size_t source = 0;
    std::size_t target = 0;

    friend bool operator==(const Pair&, const Pair&) = default;
};

enum class PairExtraction {
    sample,  ///< categorical draw from each normalized plan column
    argmax,  ///< heaviest entry of each column
};

/// One pair per plan column, as (row index, column index). Throws InputError on an all-zero column.
std::vector<Pair> extract_pairs(const Matrix& plan, Rng& rng, PairExtraction mode = PairExtraction::sample);

/// As above, translated to `plan.source_ids` / `plan.target_ids`.
std::vector<Pair> extract_pairs(const CouplingPlan& plan, Rng& rng, PairExtraction mode = PairExtraction::sample);

enum class PairingMode {
    optimal_transport,
    random,  ///< shuffled one-to-one pairing with the same sampled controls
};

struct PairingOptions {
    PairingMode mode = PairingMode::optimal_transport;
    PairExtraction extraction = PairExtraction::sample;
    SinkhornConfig sinkhorn;
    /// When non-zero, a condition's perturbed cells are shuffled and coupled in chunks of at most this size.
    std::size_t max_batch = 0;
};

struct PairingStats {
    std::size_t plans = 0;
    std::size_t unconverged = 0;
    double worst_residual = 0.0;
};

using PairingMap = std::map<ConditionKey, std::vector<Pair>>;

/**
 * Couples every perturbed cell of `ds` with a control cell of the same cell type.
 * Pair ids are row indices of `ds`; every perturbed row appears exactly once as a target.
 *
 * Throws DataError naming any condition whose cell type has no controls.
 */
PairingMap epoch_pairing(const ExpressionDataset& ds, const PairingOptions& options, Rng& rng,
                         PairingStats* stats = nullptr);

/// CSV `condition,source_id,target_id` using cell ids; condition is `perturbation|cell_type|dosage`.
void write_pairs(std::ostream& out, const ExpressionDataset& ds, const PairingMap& pairs);

}  // namespace scbridge
