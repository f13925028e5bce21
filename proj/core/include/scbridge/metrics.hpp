#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scbridge/types.hpp"

namespace scbridge {

/**
 * Energy distance `2 E|a-b| - E|a-a'| - E|b-b'|` with Euclidean norms.
 * All three means run over every ordered pair of rows, self-pairs included, so the value is 0 exactly
 * when the sets are equal as multisets. Requires at least two rows per set.
 */
double e_distance(const Matrix& a, const Matrix& b);

/**
 * Mean over genes of the squared 2-Wasserstein distance between the per-gene empirical distributions,
 * computed by pairing sorted samples. If the row counts differ, the larger set is downsampled
 * without replacement using `rng`.
 */
double emd_per_gene(const Matrix& a, const Matrix& b, Rng& rng);
double emd_per_gene(const Matrix& a, const Matrix& b, std::span<const std::size_t> genes, Rng& rng);

/// The k genes with the largest |mean(perturbed) - mean(control)|, ties to the lower index, in rank order.
std::vector<std::size_t> de_genes(const Matrix& control, const Matrix& perturbed, std::size_t k);

/// Fraction of rows in which each gene is active.
Vector activation_frequencies(const BinaryMatrix& states);

/**
 * Pearson correlation across genes between the activation frequencies of two state matrices.
 * Throws InputError when either frequency vector is constant.
 */
double activation_pcc(const BinaryMatrix& pred, const BinaryMatrix& truth);
double activation_pcc(const BinaryMatrix& pred, const BinaryMatrix& truth, std::span<const std::size_t> genes);

double pearson(const Vector& x, const Vector& y);

struct MetricsReport {
    double e_distance = 0.0;
    double emd_all = 0.0;
    double emd_de20 = 0.0;
    double emd_de40 = 0.0;
    /// Empty when a frequency vector is constant and the correlation is undefined.
    std::optional<double> activation_pcc_all;
    std::optional<double> activation_pcc_de20;
    std::optional<double> activation_pcc_de40;
    std::size_t n_pred = 0;
    std::size_t n_true = 0;
};

/// Field names, in serialization order.
const std::vector<std::string>& metrics_fields();

/**
 * Computes every field of MetricsReport for one condition. DE genes are ranked from
 * `control` vs `truth`; activation states come from discretizing `pred` and `truth`.
 */
MetricsReport compute_metrics(const Matrix& pred, const Matrix& truth, const Matrix& control, Rng& rng);

std::string to_json(const MetricsReport& report, int indent = 2);
std::string csv_header();
std::string csv_row(const MetricsReport& report);

}  // namespace scbridge
