#include "scbridge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "scbridge/errors.hpp"

namespace scbridge {

void ExpressionDataset::validate() const {
    if (static_cast<std::size_t>(values.cols()) != genes.size()) {
        throw DataError("dataset: " + std::to_string(values.cols()) + " value columns but " +
                        std::to_string(genes.size()) + " gene names");
    }
    if (static_cast<std::size_t>(values.rows()) != cells.size()) {
        throw DataError("dataset: " + std::to_string(values.rows()) + " value rows but " +
                        std::to_string(cells.size()) + " cell records");
    }
    if (!values.allFinite()) {
        throw DataError("dataset: non-finite expression value");
    }
    if (values.size() > 0 && values.minCoeff() < 0.0) {
        throw DataError("dataset: negative expression value");
    }
    for (const auto& cell : cells) {
        vocab.check(cell.condition);
    }
}

void ExpressionDataset::require_controls() const {
    const auto controls = controls_by_cell_type();
    for (const auto& [key, rows] : perturbed_groups()) {
        if (!controls.contains(key.cell_type)) {
            throw DataError("condition " + vocab.perturbation_name(key.perturbation) + " (cell type " +
                            vocab.cell_type_name(key.cell_type) + ", dosage " + format_number(key.dosage) +
                            ") has no control cells of its cell type");
        }
    }
}

std::map<ConditionKey, std::vector<std::size_t>> ExpressionDataset::perturbed_groups() const {
    std::map<ConditionKey, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!cells[i].is_control()) {
            groups[cells[i].condition].push_back(i);
        }
    }
    return groups;
}

std::map<std::uint32_t, std::vector<std::size_t>> ExpressionDataset::controls_by_cell_type() const {
    std::map<std::uint32_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i].is_control()) {
            groups[cells[i].condition.cell_type].push_back(i);
        }
    }
    return groups;
}

Matrix ExpressionDataset::gather(std::span<const std::size_t> rows) const {
    Matrix out(static_cast<Eigen::Index>(rows.size()), values.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = values.row(static_cast<Eigen::Index>(rows[r]));
    }
    return out;
}

ExpressionDataset ExpressionDataset::subset(std::span<const std::size_t> rows) const {
    ExpressionDataset out;
    out.values = gather(rows);
    out.genes = genes;
    out.vocab = vocab;
    out.provenance = provenance;
    out.cells.reserve(rows.size());
    for (auto r : rows) {
        out.cells.push_back(cells[r]);
    }
    return out;
}

NormalizeResult log1p_normalize(const ExpressionDataset& ds) {
    if (ds.provenance != Provenance::raw) {
        throw DataError("log1p_normalize: dataset is already normalized");
    }
    const Vector totals = ds.values.rowwise().sum();
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < ds.cell_count(); ++i) {
        if (totals[static_cast<Eigen::Index>(i)] > 0.0) {
            kept.push_back(i);
        }
    }
    if (kept.empty()) {
        throw DataError("log1p_normalize: every cell has zero total count");
    }

    std::vector<double> kept_totals;
    kept_totals.reserve(kept.size());
    for (auto i : kept) {
        kept_totals.push_back(totals[static_cast<Eigen::Index>(i)]);
    }
    std::sort(kept_totals.begin(), kept_totals.end());
    const std::size_t mid = kept_totals.size() / 2;
    const double median = kept_totals.size() % 2 == 1 ? kept_totals[mid]
                                                      : 0.5 * (kept_totals[mid - 1] + kept_totals[mid]);

    NormalizeResult result;
    result.dropped_cells = ds.cell_count() - kept.size();
    result.dataset = ds.subset(kept);
    auto& values = result.dataset.values;
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        const double factor = median / totals[static_cast<Eigen::Index>(kept[static_cast<std::size_t>(r)])];
        values.row(r) = (values.row(r).array() * factor).log1p();
    }
    result.dataset.provenance = Provenance::log1p;
    return result;
}

Vector gene_variances(const Matrix& values) {
    if (values.rows() == 0) {
        return Vector::Zero(values.cols());
    }
    const RowVector mean = values.colwise().mean();
    return ((values.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(values.rows()))
        .transpose();
}

ExpressionDataset select_hvg(const ExpressionDataset& ds, std::size_t n) {
    if (n > ds.gene_count()) {
        throw RangeError("select_hvg: requested " + std::to_string(n) + " genes from " +
                         std::to_string(ds.gene_count()));
    }
    const Vector variances = gene_variances(ds.values);
    std::vector<std::size_t> order(ds.gene_count());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return variances[static_cast<Eigen::Index>(a)] > variances[static_cast<Eigen::Index>(b)];
    });
    order.resize(n);
    std::sort(order.begin(), order.end());

    ExpressionDataset out;
    out.cells = ds.cells;
    out.vocab = ds.vocab;
    out.provenance = ds.provenance;
    out.values.resize(ds.values.rows(), static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
        out.values.col(static_cast<Eigen::Index>(k)) = ds.values.col(static_cast<Eigen::Index>(order[k]));
        out.genes.push_back(ds.genes[order[k]]);
    }
    return out;
}

void SyntheticSpec::validate() const {
    if (n_genes < 1 || n_cells_per_condition < 1 || n_conditions < 1 || n_cell_types < 1 || cluster_count < 1) {
        throw RangeError("synthetic spec: all counts must be at least 1");
    }
    if (!(sparsity >= 0.0 && sparsity < 1.0)) {
        throw RangeError("synthetic spec: sparsity must lie in [0, 1)");
    }
    if (!std::isfinite(shift_magnitude)) {
        throw RangeError("synthetic spec: shift_magnitude must be finite");
    }
    for (double d : dosages) {
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw RangeError("synthetic spec: dosages must be positive and finite");
        }
    }
}

SyntheticData synth_generate(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    constexpr double kCellTypeSpread = 0.6;
    constexpr double kClusterSpread = 0.6;
    constexpr double kCellNoise = 0.3;
    constexpr double kShiftedGeneFraction = 0.25;

    const auto n_genes = static_cast<Eigen::Index>(spec.n_genes);

    // Baseline levels; genes drawn below zero are mostly silent after clipping.
    Vector baseline(n_genes);
    for (Eigen::Index g = 0; g < n_genes; ++g) {
        baseline[g] = -0.5 + 3.0 * uniform(rng);
    }

    std::vector<std::vector<Vector>> centers(spec.n_cell_types);
    for (auto& per_type : centers) {
        Vector type_offset(n_genes);
        for (Eigen::Index g = 0; g < n_genes; ++g) {
            type_offset[g] = kCellTypeSpread * normal(rng);
        }
        for (std::size_t k = 0; k < spec.cluster_count; ++k) {
            Vector center = baseline + type_offset;
            for (Eigen::Index g = 0; g < n_genes; ++g) {
                center[g] += kClusterSpread * normal(rng);
            }
            per_type.push_back(std::move(center));
        }
    }

    std::vector<Vector> shifts;
    for (std::size_t p = 0; p < spec.n_conditions; ++p) {
        Vector shift = Vector::Zero(n_genes);
        for (Eigen::Index g = 0; g < n_genes; ++g) {
            if (uniform(rng) < kShiftedGeneFraction) {
                shift[g] = spec.shift_magnitude * normal(rng);
            }
        }
        shifts.push_back(std::move(shift));
    }

    SyntheticData out;
    auto& ds = out.dataset;
    ds.provenance = Provenance::log1p;
    for (std::size_t g = 0; g < spec.n_genes; ++g) {
        ds.genes.push_back("g" + std::to_string(g));
    }
    for (std::size_t c = 0; c < spec.n_cell_types; ++c) {
        ds.vocab.add_cell_type("ct" + std::to_string(c));
    }
    for (std::size_t p = 0; p < spec.n_conditions; ++p) {
        ds.vocab.add_perturbation("pert" + std::to_string(p));
    }

    struct Group {
        ConditionKey key;
        const Vector* shift = nullptr;
        double scale = 1.0;
    };
    std::vector<double> levels = spec.dosages;
    const bool genetic = levels.empty();
    if (genetic) {
        levels.push_back(0.0);
    }
    std::vector<Group> groups;
    for (std::size_t c = 0; c < spec.n_cell_types; ++c) {
        const auto ct = static_cast<std::uint32_t>(c);
        groups.push_back(Group{ConditionKey{ct, kControlId, 0.0}, nullptr, 0.0});
        for (std::size_t p = 0; p < spec.n_conditions; ++p) {
            for (double dose : levels) {
                const ConditionKey key{ct, static_cast<std::uint32_t>(p + 1), dose};
                groups.push_back(Group{key, &shifts[p], genetic ? 1.0 : dose});
                out.shifts.push_back(GroundTruthShift{key, shifts[p] * (genetic ? 1.0 : dose)});
            }
        }
    }

    const std::size_t n_cells = groups.size() * spec.n_cells_per_condition;
    ds.values.resize(static_cast<Eigen::Index>(n_cells), n_genes);
    std::uniform_int_distribution<std::size_t> pick_cluster(0, spec.cluster_count - 1);

    Eigen::Index row = 0;
    for (const auto& group : groups) {
        for (std::size_t i = 0; i < spec.n_cells_per_condition; ++i, ++row) {
            const Vector& center = centers[group.key.cell_type][pick_cluster(rng)];
            for (Eigen::Index g = 0; g < n_genes; ++g) {
                double v = center[g] + kCellNoise * normal(rng);
                if (group.shift) {
                    v += group.scale * (*group.shift)[g];
                    if (uniform(rng) < spec.sparsity) {
                        v = 0.0;
                    }
                }
                ds.values(row, g) = std::max(v, 0.0);
            }
            ds.cells.push_back(CellRecord{"cell" + std::to_string(row), group.key});
        }
    }
    return out;
}

SplitResult split(const ExpressionDataset& ds, const SplitOptions& options) {
    if (!(options.fraction >= 0.0 && options.fraction <= 1.0)) {
        throw RangeError("split: fraction must lie in [0, 1]");
    }
    Rng rng(options.seed);
    const auto groups = ds.perturbed_groups();
    std::set<ConditionKey> held_out;

    if (options.mode == SplitMode::by_perturbation) {
        std::set<std::uint32_t> ids;
        for (const auto& [key, rows] : groups) {
            ids.insert(key.perturbation);
        }
        std::vector<std::uint32_t> order(ids.begin(), ids.end());
        std::shuffle(order.begin(), order.end(), rng);
        const auto n_test = static_cast<std::size_t>(std::llround(options.fraction * static_cast<double>(order.size())));
        const std::set<std::uint32_t> test_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
        for (const auto& [key, rows] : groups) {
            if (test_ids.contains(key.perturbation)) {
                held_out.insert(key);
            }
        }
    } else {
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        std::map<std::uint32_t, std::size_t> perturbation_left;
        std::map<std::uint32_t, std::size_t> cell_type_left;
        for (const auto& [key, rows] : groups) {
            ++perturbation_left[key.perturbation];
            ++cell_type_left[key.cell_type];
        }
        for (const auto& [key, rows] : groups) {
            const bool draw = uniform(rng) < options.fraction;
            if (!draw) {
                continue;
            }
            if (options.keep_vocabulary_seen &&
                (perturbation_left[key.perturbation] <= 1 || cell_type_left[key.cell_type] <= 1)) {
                continue;
            }
            --perturbation_left[key.perturbation];
            --cell_type_left[key.cell_type];
            held_out.insert(key);
        }
    }

    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    for (std::size_t i = 0; i < ds.cell_count(); ++i) {
        const auto& cell = ds.cells[i];
        if (!cell.is_control() && held_out.contains(cell.condition)) {
            test_rows.push_back(i);
        } else {
            train_rows.push_back(i);
        }
    }
    if (test_rows.empty()) {
        throw DataError("split: test set is empty with seed " + std::to_string(options.seed) + "; choose another seed");
    }
    return SplitResult{ds.subset(train_rows), ds.subset(test_rows)};
}

}  // namespace scbridge
