#include "scbridge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "scbridge/bridge_discrete.hpp"
#include "scbridge/dataset.hpp"
#include "scbridge/errors.hpp"

namespace scbridge {

namespace {

double mean_cross_distance(const Matrix& a, const Matrix& b) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        double row_total = 0.0;
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            row_total += (a.row(i) - b.row(j)).norm();
        }
        total += row_total;
    }
    return total / static_cast<double>(a.rows() * b.rows());
}

// Rows in lexicographic order, so that equal multisets give bit-identical sums.
Matrix canonical_rows(const Matrix& m) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
        const auto rx = m.row(x);
        const auto ry = m.row(y);
        return std::lexicographical_compare(rx.begin(), rx.end(), ry.begin(), ry.end());
    });
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out.row(r) = m.row(order[static_cast<std::size_t>(r)]);
    }
    return out;
}

Matrix downsample(const Matrix& m, Eigen::Index rows, Rng& rng) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    Matrix out(rows, m.cols());
    for (Eigen::Index r = 0; r < rows; ++r) {
        out.row(r) = m.row(order[static_cast<std::size_t>(r)]);
    }
    return out;
}

std::vector<std::size_t> all_genes(Eigen::Index n) {
    std::vector<std::size_t> genes(static_cast<std::size_t>(n));
    std::iota(genes.begin(), genes.end(), std::size_t{0});
    return genes;
}

}  // namespace

double e_distance(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("e_distance: sets have different gene counts");
    }
    if (a.rows() < 2 || b.rows() < 2) {
        throw InputError("e_distance: each set needs at least two rows");
    }
    const Matrix sa = canonical_rows(a);
    const Matrix sb = canonical_rows(b);
    return 2.0 * mean_cross_distance(sa, sb) - mean_cross_distance(sa, sa) - mean_cross_distance(sb, sb);
}

double emd_per_gene(const Matrix& a, const Matrix& b, Rng& rng) {
    const auto genes = all_genes(a.cols());
    return emd_per_gene(a, b, genes, rng);
}

double emd_per_gene(const Matrix& a, const Matrix& b, std::span<const std::size_t> genes, Rng& rng) {
    if (a.cols() != b.cols()) {
        throw DimensionError("emd_per_gene: sets have different gene counts");
    }
    if (a.rows() == 0 || b.rows() == 0 || genes.empty()) {
        throw InputError("emd_per_gene: empty input");
    }
    const Eigen::Index n = std::min(a.rows(), b.rows());
    const Matrix a_eq = a.rows() > n ? downsample(a, n, rng) : a;
    const Matrix b_eq = b.rows() > n ? downsample(b, n, rng) : b;

    std::vector<double> xs(static_cast<std::size_t>(n));
    std::vector<double> ys(static_cast<std::size_t>(n));
    double total = 0.0;
    for (auto g : genes) {
        if (g >= static_cast<std::size_t>(a.cols())) {
            throw DimensionError("emd_per_gene: gene index out of range");
        }
        const auto col = static_cast<Eigen::Index>(g);
        for (Eigen::Index r = 0; r < n; ++r) {
            xs[static_cast<std::size_t>(r)] = a_eq(r, col);
            ys[static_cast<std::size_t>(r)] = b_eq(r, col);
        }
        std::sort(xs.begin(), xs.end());
        std::sort(ys.begin(), ys.end());
        double gene_cost = 0.0;
        for (std::size_t r = 0; r < xs.size(); ++r) {
            const double d = xs[r] - ys[r];
            gene_cost += d * d;
        }
        total += gene_cost / static_cast<double>(n);
    }
    return total / static_cast<double>(genes.size());
}

std::vector<std::size_t> de_genes(const Matrix& control, const Matrix& perturbed, std::size_t k) {
    if (control.cols() != perturbed.cols()) {
        throw DimensionError("de_genes: sets have different gene counts");
    }
    if (k > static_cast<std::size_t>(control.cols())) {
        throw RangeError("de_genes: k exceeds the gene count");
    }
    if (control.rows() == 0 || perturbed.rows() == 0) {
        throw InputError("de_genes: empty input");
    }
    const Vector shift = (perturbed.colwise().mean() - control.colwise().mean()).cwiseAbs().transpose();
    auto order = all_genes(control.cols());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return shift[static_cast<Eigen::Index>(x)] > shift[static_cast<Eigen::Index>(y)];
    });
    order.resize(k);
    return order;
}

Vector activation_frequencies(const BinaryMatrix& states) {
    if (states.rows() == 0) {
        throw InputError("activation_frequencies: no rows");
    }
    return states.cast<double>().colwise().mean().transpose();
}

double pearson(const Vector& x, const Vector& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw DimensionError("pearson: need two equal-length vectors with at least two entries");
    }
    const Eigen::ArrayXd dx = x.array() - x.mean();
    const Eigen::ArrayXd dy = y.array() - y.mean();
    const double sxx = dx.square().sum();
    const double syy = dy.square().sum();
    if (sxx == 0.0 || syy == 0.0) {
        throw InputError("pearson: correlation undefined for a constant vector");
    }
    return std::clamp((dx * dy).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
}

double activation_pcc(const BinaryMatrix& pred, const BinaryMatrix& truth) {
    if (pred.cols() != truth.cols()) {
        throw DimensionError("activation_pcc: state matrices have different gene counts");
    }
    return pearson(activation_frequencies(pred), activation_frequencies(truth));
}

double activation_pcc(const BinaryMatrix& pred, const BinaryMatrix& truth, std::span<const std::size_t> genes) {
    if (pred.cols() != truth.cols()) {
        throw DimensionError("activation_pcc: state matrices have different gene counts");
    }
    const Vector fp = activation_frequencies(pred);
    const Vector ft = activation_frequencies(truth);
    Vector sp(static_cast<Eigen::Index>(genes.size()));
    Vector st(static_cast<Eigen::Index>(genes.size()));
    for (std::size_t k = 0; k < genes.size(); ++k) {
        sp[static_cast<Eigen::Index>(k)] = fp[static_cast<Eigen::Index>(genes[k])];
        st[static_cast<Eigen::Index>(k)] = ft[static_cast<Eigen::Index>(genes[k])];
    }
    return pearson(sp, st);
}

const std::vector<std::string>& metrics_fields() {
    static const std::vector<std::string> fields{
        "e_distance",          "emd_all",
        "emd_de20",            "emd_de40",
        "activation_pcc_all",  "activation_pcc_de20",
        "activation_pcc_de40", "n_pred",
        "n_true"};
    return fields;
}

namespace {

std::optional<double> try_pcc(const BinaryMatrix& pred, const BinaryMatrix& truth,
                              std::span<const std::size_t> genes) {
    try {
        return activation_pcc(pred, truth, genes);
    } catch (const InputError&) {
        return std::nullopt;
    } catch (const DimensionError&) {
        return std::nullopt;
    }
}

}  // namespace

MetricsReport compute_metrics(const Matrix& pred, const Matrix& truth, const Matrix& control, Rng& rng) {
    MetricsReport report;
    report.n_pred = static_cast<std::size_t>(pred.rows());
    report.n_true = static_cast<std::size_t>(truth.rows());
    report.e_distance = e_distance(pred, truth);

    const auto genes = all_genes(truth.cols());
    const auto n_genes = static_cast<std::size_t>(truth.cols());
    const auto de20 = de_genes(control, truth, std::min<std::size_t>(20, n_genes));
    const auto de40 = de_genes(control, truth, std::min<std::size_t>(40, n_genes));
    report.emd_all = emd_per_gene(pred, truth, genes, rng);
    report.emd_de20 = emd_per_gene(pred, truth, de20, rng);
    report.emd_de40 = emd_per_gene(pred, truth, de40, rng);

    const BinaryMatrix pred_states = discretize(pred);
    const BinaryMatrix true_states = discretize(truth);
    report.activation_pcc_all = try_pcc(pred_states, true_states, genes);
    report.activation_pcc_de20 = try_pcc(pred_states, true_states, de20);
    report.activation_pcc_de40 = try_pcc(pred_states, true_states, de40);
    return report;
}

namespace {

nlohmann::ordered_json report_json(const MetricsReport& r) {
    auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
        return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    };
    nlohmann::ordered_json j;
    j["e_distance"] = r.e_distance;
    j["emd_all"] = r.emd_all;
    j["emd_de20"] = r.emd_de20;
    j["emd_de40"] = r.emd_de40;
    j["activation_pcc_all"] = opt(r.activation_pcc_all);
    j["activation_pcc_de20"] = opt(r.activation_pcc_de20);
    j["activation_pcc_de40"] = opt(r.activation_pcc_de40);
    j["n_pred"] = r.n_pred;
    j["n_true"] = r.n_true;
    return j;
}

std::string opt_text(const std::optional<double>& v) {
    return v ? format_number(*v) : std::string("NA");
}

}  // namespace

std::string to_json(const MetricsReport& report, int indent) {
    return report_json(report).dump(indent);
}

std::string csv_header() {
    std::string out;
    for (const auto& f : metrics_fields()) {
        out += out.empty() ? f : "," + f;
    }
    return out;
}

std::string csv_row(const MetricsReport& r) {
    std::ostringstream out;
    out << format_number(r.e_distance) << ',' << format_number(r.emd_all) << ',' << format_number(r.emd_de20) << ','
        << format_number(r.emd_de40) << ',' << opt_text(r.activation_pcc_all) << ','
        << opt_text(r.activation_pcc_de20) << ',' << opt_text(r.activation_pcc_de40) << ',' << r.n_pred << ','
        << r.n_true;
    return out.str();
}

}  // namespace scbridge
