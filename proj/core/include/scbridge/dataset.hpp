#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "scbridge/conditioning.hpp"
#include "scbridge/types.hpp"

/**
 * @file dataset.hpp
 *
 * @brief Expression matrices with per-cell condition labels, plus the preprocessing and
 * synthetic-benchmark routines that produce them.
 *
 * CSV schema: header `cell_id,cell_type,perturbation,dosage,<gene_1>,...,<gene_N>`, one cell per row.
 * The perturbation value `control` marks unperturbed cells (perturbation id 0).
 */

namespace scbridge {

enum class Provenance { raw, log1p };

/// How `load_matrix()` decides the provenance of a file.
enum class ProvenanceHint {
    detect,  ///< raw if every value is integral, log1p otherwise
    raw,
    log1p,
};

struct CellRecord {
    std::string id;
    ConditionKey condition;

    bool is_control() const { return condition.is_control(); }
};

struct ExpressionDataset {
    Matrix values;  ///< cells x genes
    std::vector<std::string> genes;
    std::vector<CellRecord> cells;
    Vocabulary vocab;
    Provenance provenance = Provenance::raw;

    std::size_t cell_count() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t gene_count() const { return static_cast<std::size_t>(values.cols()); }

    /// Shape consistency, finite non-negative entries, condition ids inside the vocabulary.
    void validate() const;

    /// Throws DataError naming the first perturbed condition whose cell type has no control cells.
    void require_controls() const;

    /// Row indices of perturbed cells, grouped by condition.
    std::map<ConditionKey, std::vector<std::size_t>> perturbed_groups() const;

    /// Row indices of control cells, grouped by cell type.
    std::map<std::uint32_t, std::vector<std::size_t>> controls_by_cell_type() const;

    Matrix gather(std::span<const std::size_t> rows) const;

    /// Same genes and vocabulary, only the listed rows (in the given order).
    ExpressionDataset subset(std::span<const std::size_t> rows) const;
};

ExpressionDataset read_matrix(std::istream& in, ProvenanceHint hint = ProvenanceHint::detect);
ExpressionDataset load_matrix(const std::filesystem::path& path, ProvenanceHint hint = ProvenanceHint::detect);

/// Values are printed in shortest round-trip form, so save/load reproduces the matrix bit-exactly.
void write_matrix(std::ostream& out, const ExpressionDataset& ds);
void save_matrix(const std::filesystem::path& path, const ExpressionDataset& ds);

struct NormalizeResult {
    ExpressionDataset dataset;
    std::size_t dropped_cells = 0;  ///< cells with zero total count
};

/**
 * Scales every cell to the median cell total, then applies `ln(1 + x)`.
 *
 * Zero-total cells are dropped and counted. Throws DataError when the input is already normalized.
 */
NormalizeResult log1p_normalize(const ExpressionDataset& ds);

/// Keeps the `n` genes with the largest variance across cells, in their original order. Ties favour lower indices.
ExpressionDataset select_hvg(const ExpressionDataset& ds, std::size_t n);

/// Population variance of every gene (column).
Vector gene_variances(const Matrix& values);

/**
 * @brief Parameters of the synthetic transport benchmark.
 *
 * Each cell type has its own Gaussian mixture of `cluster_count` components. Every perturbation is applied
 * to every cell type as an additive, cell-type-independent shift on a random quarter of the genes
 * (per-gene magnitude `shift_magnitude * N(0,1)`), followed by independent zeroing of each entry with
 * probability `sparsity` and clipping at 0. With `dosages` non-empty every perturbation is applied once
 * per listed dosage, scaling its shift by the dosage. Each (perturbation, dosage, cell type) group and
 * each cell type's control population has `n_cells_per_condition` cells.
 */
struct SyntheticSpec {
    std::size_t n_genes = 200;
    std::size_t n_cells_per_condition = 125;
    std::size_t n_conditions = 4;
    std::size_t n_cell_types = 4;
    std::size_t cluster_count = 3;
    double shift_magnitude = 2.0;
    double sparsity = 0.1;
    /// Empty: genetic perturbations at dosage 0 with unscaled shifts.
    std::vector<double> dosages;
    std::uint64_t seed = 0;

    void validate() const;
};

struct GroundTruthShift {
    ConditionKey condition;
    Vector shift;
};

struct SyntheticData {
    ExpressionDataset dataset;
    std::vector<GroundTruthShift> shifts;
};

SyntheticData synth_generate(const SyntheticSpec& spec);

/// CSV `perturbation,dosage,cell_type,<gene shifts...>`.
void write_shifts(std::ostream& out, const SyntheticData& data);

enum class SplitMode { by_perturbation, by_condition_group };

struct SplitOptions {
    SplitMode mode = SplitMode::by_condition_group;
    double fraction = 0.3;
    std::uint64_t seed = 0;
    /// by_condition_group only: never hold out the last perturbed training group of a perturbation
    /// or of a cell type, so every test condition is built from trained embeddings.
    bool keep_vocabulary_seen = false;
};

struct SplitResult {
    ExpressionDataset train;
    ExpressionDataset test;
};

/**
 * Holds out whole perturbations (by_perturbation: round(fraction * count) of them) or whole
 * condition groups (by_condition_group: each with probability `fraction`). Controls always stay in train.
 *
 * Throws DataError if the test set would be empty.
 */
SplitResult split(const ExpressionDataset& ds, const SplitOptions& options);

std::string format_number(double value);

}  // namespace scbridge
